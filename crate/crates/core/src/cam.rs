//! Compare and match-combination microcode for memristor CAM/TCAM partitions.
//!
//! A stored word of K bits occupies K adjacent cells in one row; cell `j`
//! holds bit `j`, so higher cell indices are more significant. After the
//! compare program every cell holds its own match signal, and log2(K)
//! combine rounds fold those signals into cell K-1 by recursive doubling.
//! All K/2 merges of a round run in the same steps, one op per pair.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::{CrossbarArray, CrossbarError, ExecStats, MicroOp, Phase, Step, StepProgram};
use crate::device::WearPolicy;

/// TCAM cell columns.
pub mod tcam_col {
    pub const D0: usize = 0;
    /// 1 marks a don't-care cell.
    pub const DX: usize = 1;
    pub const K: usize = 2;
    pub const M1: usize = 3;
    pub const M2: usize = 4;
    /// Less signal after compare.
    pub const M3: usize = 5;
    /// Greater signal after compare.
    pub const M4: usize = 6;
    pub const WIDTH: usize = 7;
    pub const NAMES: [&str; WIDTH] = ["D0", "DX", "K", "M1", "M2", "M3", "M4"];
}

/// CAM cell columns.
pub mod cam_col {
    pub const D: usize = 0;
    pub const K: usize = 1;
    /// Mismatch signal after compare.
    pub const A: usize = 2;
    pub const B: usize = 3;
    /// Always 0; stands in for the greater lane during combination.
    pub const Z: usize = 4;
    pub const WIDTH: usize = 5;
    pub const NAMES: [&str; WIDTH] = ["D", "K", "A", "B", "Z"];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CamMode {
    /// Point-only, equality via XOR.
    Cam,
    /// Ternary three-way compare.
    Tcam,
}

impl CamMode {
    pub fn cell_width(self) -> usize {
        match self {
            CamMode::Cam => cam_col::WIDTH,
            CamMode::Tcam => tcam_col::WIDTH,
        }
    }

    /// Steps in the compare program.
    pub fn compare_steps(self) -> usize {
        match self {
            CamMode::Cam => 8,
            CamMode::Tcam => 11,
        }
    }
}

impl std::str::FromStr for CamMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cam" => Ok(CamMode::Cam),
            "tcam" => Ok(CamMode::Tcam),
            _ => Err(format!("unknown cam mode `{s}` (expected cam or tcam)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ternary {
    Zero,
    One,
    X,
}

/// `(DX, D0)` encoding of one ternary symbol.
pub fn encode_ternary(t: Ternary) -> (bool, bool) {
    match t {
        Ternary::Zero => (false, false),
        Ternary::One => (false, true),
        Ternary::X => (true, false),
    }
}

/// Bit `j` of a 64-bit word; positions past 63 read as 0 for wide keys.
fn bit_of(x: u64, j: usize) -> bool {
    j < 64 && x >> j & 1 == 1
}

/// A stored word: `value` bits, with `dont_care` bits masked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entry {
    pub value: u64,
    pub dont_care: u64,
}

impl Entry {
    pub fn exact(value: u64) -> Self {
        Self { value, dont_care: 0 }
    }

    pub fn symbol(&self, bit: usize) -> Ternary {
        if bit_of(self.dont_care, bit) {
            Ternary::X
        } else if bit_of(self.value, bit) {
            Ternary::One
        } else {
            Ternary::Zero
        }
    }
}

/// Per-cell signals after a TCAM compare.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CellMatch {
    pub less: bool,
    pub greater: bool,
}

impl CellMatch {
    pub fn equal(&self) -> bool {
        !self.less && !self.greater
    }
}

/// Outcome for one stored entry. `Less` means the stored word is below the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntryMatch {
    Less,
    Greater,
    Equal,
    /// CAM mode mismatch: unequal, order unknown.
    Differs,
}

impl EntryMatch {
    pub fn is_equal(self) -> bool {
        self == EntryMatch::Equal
    }

    /// `less,greater,equal` flags.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            EntryMatch::Less => (true, false, false),
            EntryMatch::Greater => (false, true, false),
            EntryMatch::Equal => (false, false, true),
            EntryMatch::Differs => (false, false, false),
        }
    }
}

pub const MATCH_CSV_HEADER: &str = "entry_index,less,greater,equal";

pub fn matches_csv(matches: &[EntryMatch]) -> String {
    let mut s = String::from(MATCH_CSV_HEADER);
    s.push('\n');
    for (i, m) in matches.iter().enumerate() {
        let (l, g, e) = m.flags();
        s.push_str(&format!("{},{},{},{}\n", i, l as u8, g as u8, e as u8));
    }
    s
}

/// Three-way comparison of a stored word against a key over `k` bits, with
/// masked positions ignored on both sides.
pub fn reference_compare(entry: &Entry, key: u64, k: u32) -> EntryMatch {
    let full = if k >= 64 { u64::MAX } else { (1u64 << k) - 1 };
    let care = full & !entry.dont_care;
    let (d, q) = (entry.value & care, key & care);
    match d.cmp(&q) {
        std::cmp::Ordering::Less => EntryMatch::Less,
        std::cmp::Ordering::Greater => EntryMatch::Greater,
        std::cmp::Ordering::Equal => EntryMatch::Equal,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CamError {
    #[error("key width must be a power of two in 2..=1024, got {0}")]
    BadKeyBits(u32),
    #[error("key {key:#x} does not fit in {bits} bits")]
    KeyTooWide { key: u64, bits: u32 },
    #[error("partition full: {capacity} entries")]
    CapacityExceeded { capacity: usize },
    #[error("entry index {index} out of range ({len} entries)")]
    NoSuchEntry { index: usize, len: usize },
    #[error("don't-care bits cannot be stored in CAM mode")]
    TernaryInCam,
    #[error("partition region does not fit the array: {0}")]
    Region(String),
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
}

pub fn check_key_bits(k: u32) -> Result<(), CamError> {
    if (2..=1024).contains(&k) && k.is_power_of_two() {
        Ok(())
    } else {
        Err(CamError::BadKeyBits(k))
    }
}

fn compare_steps_for(mode: CamMode, cells: usize) -> Vec<Step> {
    use tcam_col::*;
    let each = |f: &dyn Fn(usize) -> Vec<MicroOp>| -> Vec<MicroOp> {
        (0..cells).flat_map(|j| f(j * mode.cell_width())).collect()
    };
    let imply = |a: usize, b: usize| each(&|o| vec![MicroOp::imply(o + a, o + b)]);
    let clear = |cs: &[usize]| each(&|o| cs.iter().map(|&c| MicroOp::clear(o + c)).collect());
    match mode {
        CamMode::Tcam => {
            let p = Phase::TcamCompare;
            vec![
                Step::new(p, clear(&[M1, M2, M3, M4])),
                Step::new(p, imply(D0, M1)), // !D0
                Step::new(p, imply(K, M2)),  // !K
                Step::new(p, imply(M1, M2)), // D0 | !K
                Step::new(p, imply(D0, K)),  // !D0 | K
                Step::new(p, imply(DX, M4)), // !DX
                Step::new(p, imply(M4, M2)), // DX | D0 | !K
                Step::new(p, imply(M4, K)),  // DX | !D0 | K
                Step::new(p, clear(&[M4])),
                Step::new(p, imply(M2, M3)), // less = !DX & !D0 & K
                Step::new(p, imply(K, M4)),  // greater = !DX & D0 & !K
            ]
        }
        CamMode::Cam => {
            use cam_col::{A, B, D, K, Z};
            let p = Phase::CamCompare;
            vec![
                Step::new(p, clear(&[A, B, Z])),
                Step::new(p, imply(D, A)), // !D
                Step::new(p, imply(K, B)), // !K
                Step::new(p, imply(A, B)), // D | !K
                Step::new(p, imply(D, K)), // !D | K
                Step::new(p, clear(&[A])),
                Step::new(p, imply(K, A)), // D & !K
                Step::new(p, imply(B, A)), // D xor K
            ]
        }
    }
}

/// The 11-step compare for one TCAM cell (columns `tcam_col`).
pub fn compile_tcam_compare() -> StepProgram {
    StepProgram::new(compare_steps_for(CamMode::Tcam, 1)).expect("compare program is valid")
}

/// The 8-step XOR compare for one CAM cell (columns `cam_col`).
pub fn compile_cam_compare() -> StepProgram {
    StepProgram::new(compare_steps_for(CamMode::Cam, 1)).expect("compare program is valid")
}

/// Compare program over a row of `cells` adjacent cells.
pub fn compare_program(mode: CamMode, cells: usize) -> StepProgram {
    StepProgram::new(compare_steps_for(mode, cells)).expect("compare program is valid")
}

/// Column roles of one merge, relative to the cell base columns.
struct MergeCols {
    la: usize,
    ga: usize,
    lb: usize,
    gb: usize,
    s1: usize,
    s2: usize,
}

fn merge_cols(mode: CamMode, hi: usize, lo: usize) -> MergeCols {
    match mode {
        CamMode::Tcam => {
            use tcam_col::*;
            MergeCols { la: hi + M3, ga: hi + M4, lb: lo + M3, gb: lo + M4, s1: hi + M1, s2: hi + M2 }
        }
        CamMode::Cam => {
            use cam_col::*;
            MergeCols { la: hi + A, ga: hi + Z, lb: lo + A, gb: lo + Z, s1: hi + K, s2: hi + B }
        }
    }
}

fn combine_steps(mode: CamMode, pairs: &[(usize, usize)]) -> Vec<Step> {
    let w = mode.cell_width();
    let cols: Vec<MergeCols> = pairs.iter().map(|&(h, l)| merge_cols(mode, h * w, l * w)).collect();
    let imply = |f: &dyn Fn(&MergeCols) -> (usize, usize)| {
        Step::new(
            Phase::Combine,
            cols.iter().map(|c| {
                let (s, d) = f(c);
                MicroOp::imply(s, d)
            }).collect(),
        )
    };
    let clear = |f: &dyn Fn(&MergeCols) -> [usize; 2]| {
        Step::new(
            Phase::Combine,
            cols.iter().flat_map(|c| f(c).map(MicroOp::clear)).collect(),
        )
    };
    vec![
        clear(&|c| [c.s1, c.s2]),
        imply(&|c| (c.lb, c.s1)), // !lb
        imply(&|c| (c.ga, c.s2)), // !ga
        imply(&|c| (c.s2, c.s1)), // ga | !lb
        clear(&|c| [c.s2, c.lb]),
        imply(&|c| (c.gb, c.s2)), // !gb
        imply(&|c| (c.la, c.lb)), // !la
        imply(&|c| (c.lb, c.s2)), // la | !gb
        imply(&|c| (c.s1, c.la)), // la | (!ga & lb)
        imply(&|c| (c.s2, c.ga)), // ga | (!la & gb)
    ]
}

/// One 10-step merge over two adjacent cells: the more significant cell at
/// cell index 1 absorbs the less significant cell at index 0.
pub fn compile_combine_round(mode: CamMode) -> StepProgram {
    StepProgram::new(combine_steps(mode, &[(1, 0)])).expect("combine program is valid")
}

/// Round `r` (1-based) of recursive doubling over `cells` cells.
pub fn combine_round_program(mode: CamMode, cells: usize, r: u32) -> StepProgram {
    let d = 1usize << (r - 1);
    let pairs: Vec<(usize, usize)> = (0..cells).filter(|i| i & d != 0).map(|i| (i, i - d)).collect();
    StepProgram::new(combine_steps(mode, &pairs)).expect("combine program is valid")
}

fn build_search_program(mode: CamMode, k: u32) -> StepProgram {
    let cells = k as usize;
    let mut p = compare_program(mode, cells);
    for r in 1..=k.trailing_zeros() {
        p = p.concat(&combine_round_program(mode, cells, r));
    }
    p
}

type ProgramCache = Mutex<HashMap<(CamMode, u32), Arc<StepProgram>>>;

/// Compare plus all combine rounds for K-bit words. Cached per (mode, K).
pub fn search_program(mode: CamMode, k: u32) -> Result<Arc<StepProgram>, CamError> {
    check_key_bits(k)?;
    static CACHE: OnceLock<ProgramCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut g = cache.lock().unwrap_or_else(|e| e.into_inner());
    Ok(g.entry((mode, k)).or_insert_with(|| Arc::new(build_search_program(mode, k))).clone())
}

/// Internal step count of a full search.
pub fn search_steps(mode: CamMode, k: u32) -> u64 {
    mode.compare_steps() as u64 + 10 * k.trailing_zeros() as u64
}

/// A rectangular region of an array holding `len` entries of K-bit words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CamPartition {
    pub mode: CamMode,
    pub key_bits: u32,
    pub capacity: usize,
    pub region_row0: usize,
    pub region_col0: usize,
    #[serde(default)]
    pub len: usize,
}

impl CamPartition {
    pub fn new(mode: CamMode, key_bits: u32, capacity: usize) -> Result<Self, CamError> {
        check_key_bits(key_bits)?;
        Ok(Self { mode, key_bits, capacity, region_row0: 0, region_col0: 0, len: 0 })
    }

    pub fn at(mut self, row0: usize, col0: usize) -> Self {
        self.region_row0 = row0;
        self.region_col0 = col0;
        self
    }

    pub fn width(&self) -> usize {
        self.mode.cell_width() * self.key_bits as usize
    }

    pub fn rows(&self) -> Range<usize> {
        self.region_row0..self.region_row0 + self.len
    }

    /// Array big enough for this partition alone.
    pub fn new_array(&self) -> CrossbarArray {
        CrossbarArray::new(self.region_row0 + self.capacity, self.region_col0 + self.width())
    }

    pub fn check_region(&self, array: &CrossbarArray) -> Result<(), CamError> {
        check_key_bits(self.key_bits)?;
        if self.region_row0 + self.capacity > array.rows() || self.region_col0 + self.width() > array.cols() {
            return Err(CamError::Region(format!(
                "rows {}..{} cols {}..{} in a {}x{} array",
                self.region_row0,
                self.region_row0 + self.capacity,
                self.region_col0,
                self.region_col0 + self.width(),
                array.rows(),
                array.cols()
            )));
        }
        if self.len > self.capacity {
            return Err(CamError::CapacityExceeded { capacity: self.capacity });
        }
        Ok(())
    }

    fn check_word(&self, w: u64) -> Result<(), CamError> {
        if self.key_bits < 64 && w >> self.key_bits != 0 {
            return Err(CamError::KeyTooWide { key: w, bits: self.key_bits });
        }
        Ok(())
    }

    fn entry_bits(&self, e: &Entry) -> Vec<(usize, bool)> {
        let w = self.mode.cell_width();
        let mut bits = Vec::with_capacity(2 * self.key_bits as usize);
        for j in 0..self.key_bits as usize {
            let base = self.region_col0 + j * w;
            match self.mode {
                CamMode::Tcam => {
                    let (dx, d0) = encode_ternary(e.symbol(j));
                    bits.push((base + tcam_col::D0, d0));
                    bits.push((base + tcam_col::DX, dx));
                }
                CamMode::Cam => bits.push((base + cam_col::D, bit_of(e.value, j))),
            }
        }
        bits
    }

    /// Overwrite entry `index` (which may equal `len` to append) with one
    /// external word write.
    pub fn write_entry(&mut self, array: &mut CrossbarArray, index: usize, e: &Entry) -> Result<ExecStats, CamError> {
        self.check_region(array)?;
        self.check_word(e.value)?;
        self.check_word(e.dont_care)?;
        if self.mode == CamMode::Cam && e.dont_care != 0 {
            return Err(CamError::TernaryInCam);
        }
        if index > self.len {
            return Err(CamError::NoSuchEntry { index, len: self.len });
        }
        if index == self.capacity {
            return Err(CamError::CapacityExceeded { capacity: self.capacity });
        }
        let d = array.write_row_external(self.region_row0 + index, &self.entry_bits(e))?;
        if index == self.len {
            self.len += 1;
        }
        Ok(d)
    }

    /// Append words. Fails without writing anything if they do not fit.
    pub fn store_entries(&mut self, array: &mut CrossbarArray, words: &[Entry]) -> Result<ExecStats, CamError> {
        self.check_region(array)?;
        if self.len + words.len() > self.capacity {
            return Err(CamError::CapacityExceeded { capacity: self.capacity });
        }
        let mut total = ExecStats::default();
        for e in words {
            total += self.write_entry(array, self.len, e)?;
        }
        Ok(total)
    }

    /// Drop the last entry. The row keeps its stale contents but leaves the
    /// compute window.
    pub fn truncate(&mut self, len: usize) {
        self.len = self.len.min(len);
    }

    /// Read back entry `index` with one external word read.
    pub fn read_entry(&self, array: &mut CrossbarArray, index: usize) -> Result<(Entry, ExecStats), CamError> {
        self.check_region(array)?;
        if index >= self.len {
            return Err(CamError::NoSuchEntry { index, len: self.len });
        }
        let w = self.mode.cell_width();
        let cols: Vec<usize> = (0..self.key_bits as usize)
            .flat_map(|j| {
                let base = self.region_col0 + j * w;
                match self.mode {
                    CamMode::Tcam => vec![base + tcam_col::D0, base + tcam_col::DX],
                    CamMode::Cam => vec![base + cam_col::D],
                }
            })
            .collect();
        let (bits, d) = array.read_row_external(self.region_row0 + index, &cols)?;
        let mut e = Entry::default();
        for j in 0..self.key_bits as usize {
            match self.mode {
                CamMode::Tcam => {
                    e.value |= (bits[2 * j] as u64).checked_shl(j as u32).unwrap_or(0);
                    e.dont_care |= (bits[2 * j + 1] as u64).checked_shl(j as u32).unwrap_or(0);
                }
                CamMode::Cam => e.value |= (bits[j] as u64).checked_shl(j as u32).unwrap_or(0),
            }
        }
        Ok((e, d))
    }

    /// Search every stored entry for `key`: one broadcast key write, the
    /// compare and combine programs, and one readout of the entry signals.
    pub fn search(&self, array: &mut CrossbarArray, key: u64) -> Result<(Vec<EntryMatch>, ExecStats), CamError> {
        self.check_region(array)?;
        self.check_word(key)?;
        let program = search_program(self.mode, self.key_bits)?;
        let w = self.mode.cell_width();
        let kcol = match self.mode {
            CamMode::Tcam => tcam_col::K,
            CamMode::Cam => cam_col::K,
        };
        let key_bits: Vec<(usize, bool)> = (0..self.key_bits as usize)
            .map(|j| (self.region_col0 + j * w + kcol, bit_of(key, j)))
            .collect();
        let rows = self.rows();
        let mut stats = array.broadcast_external(rows.clone(), &key_bits)?;
        stats += array.execute_program_at(&program, rows.clone(), self.region_col0)?;
        let top = self.region_col0 + (self.key_bits as usize - 1) * w;
        let out_cols: Vec<usize> = match self.mode {
            CamMode::Tcam => vec![top + tcam_col::M3, top + tcam_col::M4],
            CamMode::Cam => vec![top + cam_col::A],
        };
        let (cols, d) = array.read_columns_external(&out_cols)?;
        stats += d;
        let bit = |c: &Vec<u64>, r: usize| c[r / 64] >> (r % 64) & 1 == 1;
        let matches = rows
            .map(|r| match self.mode {
                CamMode::Tcam => match (bit(&cols[0], r), bit(&cols[1], r)) {
                    (true, _) => EntryMatch::Less,
                    (false, true) => EntryMatch::Greater,
                    (false, false) => EntryMatch::Equal,
                },
                CamMode::Cam => {
                    if bit(&cols[0], r) {
                        EntryMatch::Differs
                    } else {
                        EntryMatch::Equal
                    }
                }
            })
            .collect();
        Ok((matches, stats))
    }
}

/// Long-run write cycles of the busiest memristor per search: a one-entry
/// partition is searched `searches` times with seeded random words and keys.
pub fn measure_wear_per_search(mode: CamMode, k: u32, policy: WearPolicy, searches: usize, seed: u64) -> Result<f64, CamError> {
    let mut part = CamPartition::new(mode, k, 1)?;
    let mut array = part.new_array().with_policy(policy);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = if k >= 64 { u64::MAX } else { (1u64 << k) - 1 };
    part.store_entries(&mut array, &[Entry::exact(rng.gen::<u64>() & mask)])?;
    let before: Vec<u64> = (0..array.cols()).map(|c| array.write_count(0, c)).collect();
    for _ in 0..searches.max(1) {
        part.search(&mut array, rng.gen::<u64>() & mask)?;
    }
    let worst = (0..array.cols()).map(|c| array.write_count(0, c) - before[c]).max().unwrap_or(0);
    Ok(worst as f64 / searches.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn program_sizes() {
        assert_eq!(compile_tcam_compare().len(), 11);
        assert_eq!(compile_cam_compare().len(), 8);
        assert_eq!(compile_combine_round(CamMode::Tcam).len(), 10);
        assert_eq!(compile_combine_round(CamMode::Tcam).max_col(), Some(13));
        assert_eq!(compile_tcam_compare().events_per_row(), [9, 5, 9]);
        assert_eq!(compile_cam_compare().events_per_row(), [6, 4, 6]);
        assert_eq!(compile_combine_round(CamMode::Tcam).events_per_row(), [8, 4, 8]);
    }

    #[test]
    fn four_bit_search() {
        let mut p = CamPartition::new(CamMode::Tcam, 4, 3).unwrap();
        let mut a = p.new_array();
        p.store_entries(&mut a, &[Entry::exact(5), Entry::exact(9), Entry::exact(12)]).unwrap();
        let (m, s) = p.search(&mut a, 9).unwrap();
        assert_eq!(m, vec![EntryMatch::Less, EntryMatch::Equal, EntryMatch::Greater]);
        assert_eq!(s.step_count, 11 + 20);
        assert_eq!(s.external_writes, 1);
        assert_eq!(s.external_reads, 1);
    }

    #[test]
    fn capacity_enforced() {
        let mut p = CamPartition::new(CamMode::Cam, 8, 1).unwrap();
        let mut a = p.new_array();
        p.store_entries(&mut a, &[Entry::exact(1)]).unwrap();
        assert_eq!(
            p.store_entries(&mut a, &[Entry::exact(2)]),
            Err(CamError::CapacityExceeded { capacity: 1 })
        );
        assert_eq!(p.store_entries(&mut a, &[Entry { value: 0, dont_care: 1 }]).unwrap_err(), CamError::CapacityExceeded { capacity: 1 });
    }

    #[test]
    fn read_back() {
        let mut p = CamPartition::new(CamMode::Tcam, 8, 2).unwrap();
        let mut a = p.new_array();
        let e = Entry { value: 0b1010_0001, dont_care: 0b0000_0110 };
        p.store_entries(&mut a, &[e]).unwrap();
        assert_eq!(p.read_entry(&mut a, 0).unwrap().0, Entry { value: 0b1010_0001, dont_care: 0b110 });
    }
}
