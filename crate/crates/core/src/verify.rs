//! Self-contained correctness checks for the compare and combine microcode.
//!
//! The checks run against a [`ProgramSet`] so a corrupted program can be
//! swapped in and the failing check named.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cam::{
    self, cam_col, compile_cam_compare, compile_combine_round, compile_tcam_compare, tcam_col, CamMode, CamPartition,
    Entry, EntryMatch,
};
use crate::crossbar::{energy_of, CrossbarArray, EnergyParams, MicroOp, OpKind, Step, StepProgram};
use crate::model;

/// Single-cell compare programs and single-pair combine programs.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgramSet {
    pub tcam_compare: StepProgram,
    pub cam_compare: StepProgram,
    pub tcam_combine: StepProgram,
    pub cam_combine: StepProgram,
}

impl Default for ProgramSet {
    fn default() -> Self {
        Self {
            tcam_compare: compile_tcam_compare(),
            cam_compare: compile_cam_compare(),
            tcam_combine: compile_combine_round(CamMode::Tcam),
            cam_combine: compile_combine_round(CamMode::Cam),
        }
    }
}

impl ProgramSet {
    fn compare(&self, mode: CamMode) -> &StepProgram {
        match mode {
            CamMode::Tcam => &self.tcam_compare,
            CamMode::Cam => &self.cam_compare,
        }
    }

    fn combine(&self, mode: CamMode) -> &StepProgram {
        match mode {
            CamMode::Tcam => &self.tcam_combine,
            CamMode::Cam => &self.cam_combine,
        }
    }

    /// Full K-bit search built from the single-cell programs.
    pub fn search_program(&self, mode: CamMode, k: u32) -> StepProgram {
        let w = mode.cell_width();
        let cells = k as usize;
        let mut p = tile(self.compare(mode), (0..cells).map(|j| move |c: usize| j * w + c));
        for r in 1..=k.trailing_zeros() {
            let d = 1usize << (r - 1);
            let pairs: Vec<(usize, usize)> = (0..cells).filter(|i| i & d != 0).map(|i| (i, i - d)).collect();
            let round = tile(
                self.combine(mode),
                pairs.into_iter().map(|(hi, lo)| move |c: usize| if c < w { lo * w + c } else { hi * w + c - w }),
            );
            p = p.concat(&round);
        }
        p
    }
}

/// Run `base` once per column map, all copies sharing each step.
fn tile<F: Fn(usize) -> usize>(base: &StepProgram, maps: impl Iterator<Item = F>) -> StepProgram {
    let maps: Vec<F> = maps.collect();
    let steps = base
        .steps()
        .iter()
        .map(|s| {
            let ops = maps
                .iter()
                .flat_map(|f| {
                    s.ops.iter().map(move |o| {
                        let kind = match o.kind {
                            OpKind::Clear { dst } => OpKind::Clear { dst: f(dst) },
                            OpKind::Imply { src, dst } => OpKind::Imply { src: f(src), dst: f(dst) },
                        };
                        MicroOp { kind, rows: o.rows.clone() }
                    })
                })
                .collect();
            Step::new(s.phase, ops)
        })
        .collect();
    StepProgram::new(steps).unwrap_or_else(|_| StepProgram::empty())
}

/// A deliberate corruption of one program, for exercising the checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// Remove step `index` (1-based) from the named program.
    DropStep { program: ProgramName, index: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProgramName {
    TcamCompare,
    CamCompare,
    CombineRound,
}

impl ProgramName {
    pub const ALL: [ProgramName; 3] = [ProgramName::TcamCompare, ProgramName::CamCompare, ProgramName::CombineRound];

    pub fn name(self) -> &'static str {
        match self {
            ProgramName::TcamCompare => "tcam-compare",
            ProgramName::CamCompare => "cam-compare",
            ProgramName::CombineRound => "combine-round",
        }
    }
}

impl fmt::Display for ProgramName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProgramName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ProgramName::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown program `{s}` (expected tcam-compare, cam-compare or combine-round)"))
    }
}

impl FromStr for Mutation {
    type Err = String;
    /// `<program>:drop=<step>`
    fn from_str(s: &str) -> Result<Self, String> {
        let (prog, what) = s.split_once(':').ok_or_else(|| format!("bad mutation `{s}` (expected <program>:drop=<step>)"))?;
        let program = prog.parse()?;
        let index = what
            .strip_prefix("drop=")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| format!("bad mutation `{s}` (expected <program>:drop=<step>)"))?;
        Ok(Mutation::DropStep { program, index })
    }
}

impl Mutation {
    pub fn apply(self, set: &mut ProgramSet) -> Result<(), String> {
        let Mutation::DropStep { program, index } = self;
        let targets: Vec<&mut StepProgram> = match program {
            ProgramName::TcamCompare => vec![&mut set.tcam_compare],
            ProgramName::CamCompare => vec![&mut set.cam_compare],
            ProgramName::CombineRound => vec![&mut set.tcam_combine, &mut set.cam_combine],
        };
        for p in targets {
            if index > p.len() {
                return Err(format!("{program} has {} steps, cannot drop step {index}", p.len()));
            }
            let mut steps = p.steps().to_vec();
            steps.remove(index - 1);
            *p = StepProgram::new(steps).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub const CHECK_NAMES: [&str; 8] = [
    "tcam-truth-table",
    "cam-truth-table",
    "combine-law",
    "entry-compare-oracle",
    "step-count-identity",
    "energy-calibration",
    "engine-agrees-with-microcode",
    "search-wear-measured",
];

/// Run every registered check in order.
pub fn run_checks(set: &ProgramSet, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::with_capacity(CHECK_NAMES.len());
    let mut push = |name: &'static str, r: Result<String, String>| {
        let (passed, detail) = match r {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        out.push(CheckResult { name, passed, detail });
    };
    push("tcam-truth-table", tcam_truth_table(set));
    push("cam-truth-table", cam_truth_table(set));
    push("combine-law", combine_law(set));
    push("entry-compare-oracle", entry_compare_oracle(set, seed, 10_000));
    push("step-count-identity", step_count_identity(set));
    push("energy-calibration", energy_calibration(set));
    push("engine-agrees-with-microcode", engine_agreement(set, seed));
    push("search-wear-measured", search_wear());
    out
}

pub fn report(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        s.push_str(&r.line());
        s.push('\n');
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    s.push_str(&format!("{} checks, {} failed\n", results.len(), failed));
    s
}

/// Cell signals after running `program` on one row laid out per `bits`.
fn run_cell(program: &StepProgram, width: usize, bits: &[(usize, bool)]) -> CrossbarArray {
    let mut a = CrossbarArray::from_fn(1, width, |_, c| bits.iter().any(|&(col, b)| col == c && b));
    // An empty program means the mutated set no longer validates.
    if !program.is_empty() {
        a.execute_program(program).expect("program fits the cell");
    }
    a
}

fn tcam_truth_table(set: &ProgramSet) -> Result<String, String> {
    use tcam_col::*;
    // (DX, D0, K) -> (M3 less, M4 greater)
    let table = [
        (false, false, false, (false, false)),
        (false, true, true, (false, false)),
        (false, true, false, (false, true)),
        (false, false, true, (true, false)),
        (true, false, false, (false, false)),
        (true, false, true, (false, false)),
        (true, true, false, (false, false)),
        (true, true, true, (false, false)),
    ];
    let mut bad = Vec::new();
    for (dx, d0, k, want) in table {
        let a = run_cell(&set.tcam_compare, WIDTH, &[(DX, dx), (D0, d0), (K, k)]);
        let got = (a.peek(0, M3), a.peek(0, M4));
        if got != want {
            bad.push(format!("DX={} D0={} K={}: got M3M4={}{}", dx as u8, d0 as u8, k as u8, got.0 as u8, got.1 as u8));
        }
    }
    if set.tcam_compare.len() != 11 {
        bad.push(format!("{} steps, expected 11", set.tcam_compare.len()));
    }
    verdict(bad, "8 of 8 rows match in 11 steps")
}

fn cam_truth_table(set: &ProgramSet) -> Result<String, String> {
    use cam_col::*;
    let mut bad = Vec::new();
    for (d, k) in [(false, false), (false, true), (true, false), (true, true)] {
        let a = run_cell(&set.cam_compare, WIDTH, &[(D, d), (K, k)]);
        if a.peek(0, A) != (d != k) || a.peek(0, Z) {
            bad.push(format!("D={} K={}: got A={} Z={}", d as u8, k as u8, a.peek(0, A) as u8, a.peek(0, Z) as u8));
        }
    }
    if set.cam_compare.len() != 8 {
        bad.push(format!("{} steps, expected 8", set.cam_compare.len()));
    }
    verdict(bad, "4 of 4 rows match in 8 steps")
}

fn combine_law(set: &ProgramSet) -> Result<String, String> {
    use tcam_col::*;
    let w = WIDTH;
    let sig = [(false, false), (true, false), (false, true)];
    let name = |s: (bool, bool)| match s {
        (false, false) => "eq",
        (true, false) => "lt",
        _ => "gt",
    };
    let mut bad = Vec::new();
    for hi in sig {
        for lo in sig {
            let a = run_cell(&set.tcam_combine, 2 * w, &[(w + M3, hi.0), (w + M4, hi.1), (M3, lo.0), (M4, lo.1)]);
            let want = if hi == (false, false) { lo } else { hi };
            let got = (a.peek(0, w + M3), a.peek(0, w + M4));
            if got != want {
                bad.push(format!("hi={} lo={}: got {}", name(hi), name(lo), name(got)));
            }
        }
    }
    if set.tcam_combine.len() > 10 {
        bad.push(format!("{} steps, expected at most 10", set.tcam_combine.len()));
    }
    verdict(bad, "9 of 9 signal pairs follow the lexicographic law")
}

/// Search `entries` for `key` by running the set's microcode directly.
pub fn microcode_search(set: &ProgramSet, mode: CamMode, k: u32, entries: &[Entry], key: u64) -> Vec<EntryMatch> {
    let w = mode.cell_width();
    let cells = k as usize;
    let program = set.search_program(mode, k);
    let mut a = CrossbarArray::from_fn(entries.len(), cells * w, |r, c| {
        let (j, col) = (c / w, c % w);
        let e = &entries[r];
        match mode {
            CamMode::Tcam => match col {
                tcam_col::D0 => e.value >> j & 1 == 1,
                tcam_col::DX => e.dont_care >> j & 1 == 1,
                tcam_col::K => key >> j & 1 == 1,
                _ => false,
            },
            CamMode::Cam => match col {
                cam_col::D => e.value >> j & 1 == 1,
                cam_col::K => key >> j & 1 == 1,
                _ => false,
            },
        }
    });
    if !program.is_empty() {
        a.execute_program(&program).expect("search fits the array");
    }
    let top = (cells - 1) * w;
    (0..entries.len())
        .map(|r| match mode {
            CamMode::Tcam => match (a.peek(r, top + tcam_col::M3), a.peek(r, top + tcam_col::M4)) {
                (false, false) => EntryMatch::Equal,
                (true, false) => EntryMatch::Less,
                (false, true) => EntryMatch::Greater,
                (true, true) => EntryMatch::Differs,
            },
            CamMode::Cam => {
                if a.peek(r, top + cam_col::A) {
                    EntryMatch::Differs
                } else {
                    EntryMatch::Equal
                }
            }
        })
        .collect()
}

fn mask(k: u32) -> u64 {
    if k >= 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

fn entry_compare_oracle(set: &ProgramSet, seed: u64, pairs: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    let widths = [8u32, 16, 32, 64];
    for &k in &widths {
        let n = pairs / widths.len();
        let key: u64 = rng.gen::<u64>() & mask(k);
        // Half the entries sit near the key so equal and one-bit cases occur.
        let entries: Vec<Entry> = (0..n)
            .map(|i| {
                let v = if i % 2 == 0 { rng.gen::<u64>() } else { key ^ (rng.gen::<u64>() & rng.gen::<u64>() & rng.gen::<u64>()) };
                Entry::exact(v & mask(k))
            })
            .collect();
        for (mode, name) in [(CamMode::Tcam, "tcam"), (CamMode::Cam, "cam")] {
            let got = microcode_search(set, mode, k, &entries, key);
            for (e, g) in entries.iter().zip(&got) {
                let want = match (mode, cam::reference_compare(e, key, k)) {
                    (CamMode::Cam, m) if m != EntryMatch::Equal => EntryMatch::Differs,
                    (_, m) => m,
                };
                if *g != want && bad.len() < 5 {
                    bad.push(format!("{name} K={k} entry={:#x} key={key:#x}: got {g:?}, want {want:?}", e.value));
                }
            }
        }
    }
    verdict(bad, &format!("{pairs} pairs per mode at K in {{8,16,32,64}}"))
}

fn step_count_identity(set: &ProgramSet) -> Result<String, String> {
    let mut bad = Vec::new();
    for mode in [CamMode::Tcam, CamMode::Cam] {
        let mut k = 2;
        while k <= 1024 {
            let ns = set.search_program(mode, k).len() as f64 * 2.0;
            let want = model::cam_latency(k, mode).expect("valid K");
            if ns != want {
                bad.push(format!("{mode:?} K={k}: {ns} ns, closed form {want} ns"));
            }
            k *= 2;
        }
    }
    verdict(bad, "K = 2..1024, both modes")
}

fn energy_calibration(set: &ProgramSet) -> Result<String, String> {
    let mut bad = Vec::new();
    let params = EnergyParams::default();
    for mode in [CamMode::Tcam, CamMode::Cam] {
        let mut k = 2;
        while k <= 1024 {
            let rows = 3;
            let program = set.search_program(mode, k);
            let w = mode.cell_width();
            let mut a = CrossbarArray::from_fn(rows, k as usize * w, |r, c| (r + c) % 3 == 0).with_energy(params);
            let stats = if program.is_empty() { Default::default() } else { a.execute_program(&program).expect("fits") };
            let per_bit = energy_of(&stats, &params) / (rows as f64 * k as f64);
            let want = model::cam_energy(k, mode).expect("valid K");
            if ((per_bit - want) / want).abs() > 1e-9 {
                bad.push(format!("{mode:?} K={k}: {per_bit} fJ/bit, closed form {want}"));
            }
            k *= 2;
        }
    }
    verdict(bad, "relative error under 1e-9 for K = 2..1024")
}

fn engine_agreement(set: &ProgramSet, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00C0_FFEE);
    let mut bad = Vec::new();
    for mode in [CamMode::Tcam, CamMode::Cam] {
        for k in [4u32, 16, 64] {
            let n = 64;
            let mut part = CamPartition::new(mode, k, n).map_err(|e| e.to_string())?;
            let mut array = part.new_array();
            let entries: Vec<Entry> = (0..n)
                .map(|_| {
                    let dc = if mode == CamMode::Tcam { rng.gen::<u64>() & rng.gen::<u64>() & mask(k) } else { 0 };
                    Entry { value: rng.gen::<u64>() & mask(k) & !dc, dont_care: dc }
                })
                .collect();
            part.store_entries(&mut array, &entries).map_err(|e| e.to_string())?;
            let key = rng.gen::<u64>() & mask(k);
            let (engine, _) = part.search(&mut array, key).map_err(|e| e.to_string())?;
            let micro = microcode_search(set, mode, k, &entries, key);
            if engine != micro {
                bad.push(format!("{mode:?} K={k}: engine and microcode disagree"));
            }
        }
    }
    verdict(bad, "partition search equals the microcode result")
}

fn search_wear() -> Result<String, String> {
    let w = model::measured_wear(CamMode::Tcam, 64);
    if w > 0.0 && w <= (cam::search_steps(CamMode::Tcam, 64)) as f64 {
        Ok(format!("{w:.2} writes per search on the most worn TCAM cell at K=64"))
    } else {
        Err(format!("implausible wear per search {w}"))
    }
}

fn verdict(bad: Vec<String>, ok: &str) -> Result<String, String> {
    if bad.is_empty() {
        Ok(ok.to_string())
    } else {
        Err(bad.join("; "))
    }
}
