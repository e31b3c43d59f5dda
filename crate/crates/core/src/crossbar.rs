//! Crossbar interpreter.
//!
//! Cells are stored column-major as packed bitsets, so a micro-op touching one
//! column pair updates 64 rows per machine word. Wear counters are bit-sliced
//! the same way: plane `b` of a column holds bit `b` of every row's counter.

use std::fmt::Write as _;
use std::ops::{AddAssign, Range};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::WearPolicy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrossbarError {
    #[error("step {step}: column {col} is the destination of more than one micro-op")]
    DuplicateDestination { step: usize, col: usize },
    #[error("step {step}: column {col} is both an implication source and a destination")]
    SourceIsDestination { step: usize, col: usize },
    #[error("step {step}: implication from column {col} onto itself")]
    SameColumn { step: usize, col: usize },
    #[error("column {col} out of range ({cols} columns)")]
    ColumnOutOfRange { col: usize, cols: usize },
    #[error("row {row} out of range ({rows} rows)")]
    RowOutOfRange { row: usize, rows: usize },
}

/// Rows a micro-op is applied to.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub enum RowMask {
    #[default]
    All,
    /// Sorted, disjoint, non-empty ranges.
    Ranges(Vec<Range<usize>>),
}

impl RowMask {
    pub fn range(r: Range<usize>) -> Self {
        Self::from_ranges(std::iter::once(r))
    }

    pub fn from_rows(rows: impl IntoIterator<Item = usize>) -> Self {
        Self::from_ranges(rows.into_iter().map(|r| r..r + 1))
    }

    pub fn from_ranges(ranges: impl IntoIterator<Item = Range<usize>>) -> Self {
        let mut v: Vec<Range<usize>> = ranges.into_iter().filter(|r| r.start < r.end).collect();
        v.sort_by_key(|r| r.start);
        let mut out: Vec<Range<usize>> = Vec::with_capacity(v.len());
        for r in v {
            match out.last_mut() {
                Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
                _ => out.push(r),
            }
        }
        Self::Ranges(out)
    }

    /// Effective ranges inside `window`.
    pub fn clip(&self, window: &Range<usize>) -> Vec<Range<usize>> {
        match self {
            Self::All => {
                if window.start < window.end {
                    vec![window.clone()]
                } else {
                    vec![]
                }
            }
            Self::Ranges(rs) => rs
                .iter()
                .map(|r| r.start.max(window.start)..r.end.min(window.end))
                .filter(|r| r.start < r.end)
                .collect(),
        }
    }

    pub fn contains(&self, row: usize) -> bool {
        match self {
            Self::All => true,
            Self::Ranges(rs) => rs.iter().any(|r| r.contains(&row)),
        }
    }
}

/// `a-b,c` style rendering of clipped ranges, inclusive bounds.
pub fn format_ranges(ranges: &[Range<usize>]) -> String {
    if ranges.is_empty() {
        return "none".into();
    }
    let mut s = String::new();
    for (i, r) in ranges.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        if r.end - r.start == 1 {
            let _ = write!(s, "{}", r.start);
        } else {
            let _ = write!(s, "{}-{}", r.start, r.end - 1);
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Clear { dst: usize },
    Imply { src: usize, dst: usize },
}

impl OpKind {
    pub fn dst(&self) -> usize {
        match *self {
            Self::Clear { dst } | Self::Imply { dst, .. } => dst,
        }
    }

    pub fn src(&self) -> Option<usize> {
        match *self {
            Self::Imply { src, .. } => Some(src),
            Self::Clear { .. } => None,
        }
    }

    fn max_col(&self) -> usize {
        self.dst().max(self.src().unwrap_or(0))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MicroOp {
    pub kind: OpKind,
    pub rows: RowMask,
}

impl MicroOp {
    pub fn clear(dst: usize) -> Self {
        Self {
            kind: OpKind::Clear { dst },
            rows: RowMask::All,
        }
    }

    pub fn imply(src: usize, dst: usize) -> Self {
        Self {
            kind: OpKind::Imply { src, dst },
            rows: RowMask::All,
        }
    }

    pub fn with_rows(mut self, rows: RowMask) -> Self {
        self.rows = rows;
        self
    }

    fn shifted(&self, by: usize) -> OpKind {
        match self.kind {
            OpKind::Clear { dst } => OpKind::Clear { dst: dst + by },
            OpKind::Imply { src, dst } => OpKind::Imply {
                src: src + by,
                dst: dst + by,
            },
        }
    }
}

/// Energy accounting bucket for a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[default]
    Generic,
    TcamCompare,
    CamCompare,
    Combine,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Generic,
        Phase::TcamCompare,
        Phase::CamCompare,
        Phase::Combine,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

/// Event kinds, in the column order of `EnergyParams::coeff`.
pub const EV_SET: usize = 0;
pub const EV_CLEAR: usize = 1;
pub const EV_COND: usize = 2;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Step {
    pub ops: Vec<MicroOp>,
    pub phase: Phase,
}

impl Step {
    pub fn new(phase: Phase, ops: Vec<MicroOp>) -> Self {
        Self { ops, phase }
    }

    pub fn validate(&self, index: usize) -> Result<(), CrossbarError> {
        let mut dsts: Vec<usize> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            if let OpKind::Imply { src, dst } = op.kind {
                if src == dst {
                    return Err(CrossbarError::SameColumn { step: index, col: src });
                }
            }
            dsts.push(op.kind.dst());
        }
        dsts.sort_unstable();
        if let Some(w) = dsts.windows(2).find(|w| w[0] == w[1]) {
            return Err(CrossbarError::DuplicateDestination {
                step: index,
                col: w[0],
            });
        }
        for op in &self.ops {
            if let Some(src) = op.kind.src() {
                if dsts.binary_search(&src).is_ok() {
                    return Err(CrossbarError::SourceIsDestination { step: index, col: src });
                }
            }
        }
        Ok(())
    }

    fn max_col(&self) -> Option<usize> {
        self.ops.iter().map(|o| o.kind.max_col()).max()
    }

    /// Trace lines for this step. Ops of the same kind share one line; a
    /// step mixing CLEAR and IMPLY yields two lines with the same index.
    pub fn trace_lines(&self, index: usize, window: &Range<usize>, col_offset: usize) -> Vec<String> {
        let mut lines = Vec::new();
        for want_imply in [true, false] {
            let ops: Vec<&MicroOp> = self
                .ops
                .iter()
                .filter(|o| matches!(o.kind, OpKind::Imply { .. }) == want_imply)
                .collect();
            if ops.is_empty() {
                continue;
            }
            let join = |f: &dyn Fn(&MicroOp) -> String| {
                ops.iter().map(|o| f(o)).collect::<Vec<_>>().join(",")
            };
            let src = if want_imply {
                join(&|o| (o.kind.src().unwrap() + col_offset).to_string())
            } else {
                "-".to_string()
            };
            let dst = join(&|o| (o.kind.dst() + col_offset).to_string());
            let mut rows: Vec<Range<usize>> = Vec::new();
            for o in &ops {
                rows.extend(o.rows.clip(window));
            }
            let rows = RowMask::from_ranges(rows).clip(window);
            lines.push(format!(
                "step={} op={} src={} dst={} rows={}",
                index,
                if want_imply { "IMPLY" } else { "CLEAR" },
                src,
                dst,
                format_ranges(&rows)
            ));
        }
        lines
    }
}

/// A validated sequence of steps.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct StepProgram {
    steps: Vec<Step>,
    max_col: Option<usize>,
}

impl StepProgram {
    pub fn new(steps: Vec<Step>) -> Result<Self, CrossbarError> {
        for (i, s) in steps.iter().enumerate() {
            s.validate(i)?;
        }
        let max_col = steps.iter().filter_map(Step::max_col).max();
        Ok(Self { steps, max_col })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Highest column referenced, if any.
    pub fn max_col(&self) -> Option<usize> {
        self.max_col
    }

    pub fn concat(&self, other: &StepProgram) -> StepProgram {
        let mut steps = self.steps.clone();
        steps.extend(other.steps.iter().cloned());
        StepProgram {
            steps,
            max_col: self.max_col.max(other.max_col),
        }
    }

    /// Same program with every op restricted to `rows`.
    pub fn with_rows(&self, rows: &RowMask) -> StepProgram {
        let steps = self
            .steps
            .iter()
            .map(|s| Step {
                phase: s.phase,
                ops: s.ops.iter().map(|o| o.clone().with_rows(rows.clone())).collect(),
            })
            .collect();
        StepProgram {
            steps,
            max_col: self.max_col,
        }
    }

    /// Count of (set, clear, cond) applications for a single active row.
    pub fn events_per_row(&self) -> [u64; 3] {
        let mut ev = [0u64; 3];
        for s in &self.steps {
            for o in &s.ops {
                match o.kind {
                    OpKind::Clear { .. } => ev[EV_CLEAR] += 1,
                    OpKind::Imply { .. } => {
                        ev[EV_SET] += 1;
                        ev[EV_COND] += 1;
                    }
                }
            }
        }
        ev
    }

    pub fn trace(&self, window: &Range<usize>, col_offset: usize) -> Vec<String> {
        self.steps
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.trace_lines(i + 1, window, col_offset))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timing {
    pub step_time_ns: f64,
    pub t_access_ns: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            step_time_ns: 2.0,
            t_access_ns: 10.0,
        }
    }
}

/// Per-event energy, indexed `[phase][event]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub coeff: [[f64; 3]; 4],
}

/// Events per stored bit in one canonical TCAM compare (9 set, 5 clear, 9 cond).
pub const TCAM_COMPARE_EVENTS: f64 = 23.0;
/// Events per stored bit in one canonical CAM compare (6 set, 4 clear, 6 cond).
pub const CAM_COMPARE_EVENTS: f64 = 16.0;
/// Events per stored bit in one combine round: a merge costs 20 events and
/// serves two cells.
pub const COMBINE_EVENTS_PER_BIT: f64 = 10.0;

impl Default for EnergyParams {
    fn default() -> Self {
        let flat = |x: f64| [x, x, x];
        let mut coeff = [[0.0; 3]; 4];
        coeff[Phase::TcamCompare.index()] = flat(0.83 / TCAM_COMPARE_EVENTS);
        coeff[Phase::CamCompare.index()] = flat(0.44 / CAM_COMPARE_EVENTS);
        coeff[Phase::Combine.index()] = flat(0.82 / COMBINE_EVENTS_PER_BIT);
        Self { coeff }
    }
}

impl EnergyParams {
    pub fn zero() -> Self {
        Self { coeff: [[0.0; 3]; 4] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExecStats {
    pub step_count: u64,
    pub elapsed_ns: f64,
    pub set_events: u64,
    pub clear_events: u64,
    pub cond_events: u64,
    pub external_reads: u64,
    pub external_writes: u64,
    pub energy_fj: f64,
    /// `[phase][event]` breakdown of the event counters.
    pub phase_events: [[u64; 3]; 4],
}

impl AddAssign for ExecStats {
    fn add_assign(&mut self, o: Self) {
        self.step_count += o.step_count;
        self.elapsed_ns += o.elapsed_ns;
        self.set_events += o.set_events;
        self.clear_events += o.clear_events;
        self.cond_events += o.cond_events;
        self.external_reads += o.external_reads;
        self.external_writes += o.external_writes;
        self.energy_fj += o.energy_fj;
        for p in 0..4 {
            for e in 0..3 {
                self.phase_events[p][e] += o.phase_events[p][e];
            }
        }
    }
}

impl std::ops::Add for ExecStats {
    type Output = ExecStats;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl ExecStats {
    pub const CSV_HEADER: &'static str =
        "step_count,elapsed_ns,set_events,clear_events,cond_events,external_reads,external_writes,energy_fj";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step_count,
            self.elapsed_ns,
            self.set_events,
            self.clear_events,
            self.cond_events,
            self.external_reads,
            self.external_writes,
            self.energy_fj
        )
    }

    /// Time spent in internal steps only.
    pub fn internal_ns(&self, timing: &Timing) -> f64 {
        self.step_count as f64 * timing.step_time_ns
    }

    pub fn external_accesses(&self) -> u64 {
        self.external_reads + self.external_writes
    }
}

/// Energy of a run from its event counters.
pub fn energy_of(stats: &ExecStats, params: &EnergyParams) -> f64 {
    let mut e = 0.0;
    for p in 0..4 {
        for k in 0..3 {
            e += params.coeff[p][k] * stats.phase_events[p][k] as f64;
        }
    }
    e
}

/// A rows x cols grid of memristors.
#[derive(Clone, Debug)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    words: usize,
    bits: Vec<u64>,
    /// Per column: `planes * words` words of bit-sliced wear counters.
    wear: Vec<Vec<u64>>,
    policy: WearPolicy,
    timing: Timing,
    energy: EnergyParams,
    stats: ExecStats,
}

impl CrossbarArray {
    pub fn new(rows: usize, cols: usize) -> Self {
        let words = rows.div_ceil(64);
        Self {
            rows,
            cols,
            words,
            bits: vec![0; words * cols],
            wear: vec![Vec::new(); cols],
            policy: WearPolicy::default(),
            timing: Timing::default(),
            energy: EnergyParams::default(),
            stats: ExecStats::default(),
        }
    }

    /// Array with initial contents; no wear or stats are recorded.
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut a = Self::new(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                if f(r, c) {
                    a.bits[c * a.words + r / 64] |= 1 << (r % 64);
                }
            }
        }
        a
    }

    pub fn with_policy(mut self, policy: WearPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_timing(mut self, timing: Timing) -> Self {
        self.timing = timing;
        self
    }

    pub fn with_energy(mut self, energy: EnergyParams) -> Self {
        self.energy = energy;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn policy(&self) -> WearPolicy {
        self.policy
    }

    pub fn timing(&self) -> Timing {
        self.timing
    }

    pub fn energy_params(&self) -> EnergyParams {
        self.energy
    }

    /// Cumulative statistics since construction.
    pub fn stats(&self) -> ExecStats {
        self.stats
    }

    /// Cell value without an external access. For inspection and tests.
    pub fn peek(&self, row: usize, col: usize) -> bool {
        self.bits[col * self.words + row / 64] >> (row % 64) & 1 == 1
    }

    /// Packed column words, 64 rows per word. For inspection and tests.
    pub fn peek_column(&self, col: usize) -> &[u64] {
        &self.bits[col * self.words..(col + 1) * self.words]
    }

    /// Bit-identical grid contents.
    pub fn same_cells(&self, other: &CrossbarArray) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.bits == other.bits
    }

    pub fn write_count(&self, row: usize, col: usize) -> u64 {
        let planes = &self.wear[col];
        let (w, b) = (row / 64, row % 64);
        let mut n = 0;
        for (p, chunk) in planes.chunks(self.words).enumerate() {
            n |= (chunk[w] >> b & 1) << p;
        }
        n
    }

    /// Sum of all per-cell write counts.
    pub fn total_writes(&self) -> u64 {
        self.wear
            .iter()
            .map(|planes| {
                planes
                    .chunks(self.words)
                    .enumerate()
                    .map(|(p, chunk)| chunk.iter().map(|w| w.count_ones() as u64).sum::<u64>() << p)
                    .sum::<u64>()
            })
            .sum()
    }

    /// Largest per-cell write count.
    pub fn max_write_count(&self) -> u64 {
        let mut best = 0;
        for planes in &self.wear {
            let n = planes.len() / self.words.max(1);
            for w in 0..self.words {
                // Walk the counter planes from the top, keeping the lanes
                // that still tie for the maximum.
                let mut lanes = u64::MAX;
                let mut v = 0u64;
                for p in (0..n).rev() {
                    let hit = lanes & planes[p * self.words + w];
                    if hit != 0 {
                        lanes = hit;
                        v |= 1 << p;
                    }
                }
                best = best.max(v);
            }
        }
        best
    }

    /// Largest per-cell write count among cells for which `keep(row, col)`.
    pub fn max_write_count_where(&self, keep: impl Fn(usize, usize) -> bool) -> u64 {
        let mut best = 0;
        for c in 0..self.cols {
            if self.wear[c].is_empty() {
                continue;
            }
            for r in 0..self.rows {
                if keep(r, c) {
                    best = best.max(self.write_count(r, c));
                }
            }
        }
        best
    }

    fn add_wear(&mut self, col: usize, w: usize, mut carry: u64) {
        let words = self.words;
        let planes = &mut self.wear[col];
        let mut b = 0;
        while carry != 0 {
            if (b + 1) * words > planes.len() {
                planes.resize((b + 1) * words, 0);
            }
            let slot = &mut planes[b * words + w];
            let next = *slot & carry;
            *slot ^= carry;
            carry = next;
            b += 1;
        }
    }

    fn check_row(&self, row: usize) -> Result<(), CrossbarError> {
        if row < self.rows {
            Ok(())
        } else {
            Err(CrossbarError::RowOutOfRange { row, rows: self.rows })
        }
    }

    fn check_col(&self, col: usize) -> Result<(), CrossbarError> {
        if col < self.cols {
            Ok(())
        } else {
            Err(CrossbarError::ColumnOutOfRange { col, cols: self.cols })
        }
    }

    /// Store a value into one cell, wearing it if the state flips.
    fn store_bit(&mut self, row: usize, col: usize, bit: bool) {
        let (w, m) = (row / 64, 1u64 << (row % 64));
        let idx = col * self.words + w;
        let old = self.bits[idx];
        let new = if bit { old | m } else { old & !m };
        let wear = match self.policy {
            WearPolicy::CountTransitions => old ^ new,
            WearPolicy::CountApplications => m,
        };
        self.bits[idx] = new;
        if wear != 0 {
            self.add_wear(col, w, wear);
        }
    }

    fn access(&mut self, reads: u64, writes: u64) -> ExecStats {
        let d = ExecStats {
            external_reads: reads,
            external_writes: writes,
            elapsed_ns: (reads + writes) as f64 * self.timing.t_access_ns,
            ..Default::default()
        };
        self.stats += d;
        d
    }

    pub fn write_external(&mut self, row: usize, col: usize, bit: bool) -> Result<ExecStats, CrossbarError> {
        self.check_row(row)?;
        self.check_col(col)?;
        self.store_bit(row, col, bit);
        Ok(self.access(0, 1))
    }

    pub fn read_external(&mut self, row: usize, col: usize) -> Result<(bool, ExecStats), CrossbarError> {
        self.check_row(row)?;
        self.check_col(col)?;
        let v = self.peek(row, col);
        Ok((v, self.access(1, 0)))
    }

    /// One word write: several columns of a single row.
    pub fn write_row_external(&mut self, row: usize, bits: &[(usize, bool)]) -> Result<ExecStats, CrossbarError> {
        self.check_row(row)?;
        for &(c, _) in bits {
            self.check_col(c)?;
        }
        for &(c, b) in bits {
            self.store_bit(row, c, b);
        }
        Ok(self.access(0, 1))
    }

    /// One broadcast write: the same column values driven into every row of
    /// `rows` through shared column lines.
    pub fn broadcast_external(&mut self, rows: Range<usize>, bits: &[(usize, bool)]) -> Result<ExecStats, CrossbarError> {
        if rows.end > self.rows {
            return Err(CrossbarError::RowOutOfRange { row: rows.end - 1, rows: self.rows });
        }
        for &(c, _) in bits {
            self.check_col(c)?;
        }
        for &(c, b) in bits {
            self.for_each_word(&RowMask::All, &rows, |a, w, m| {
                let idx = c * a.words + w;
                let old = a.bits[idx];
                let new = if b { old | m } else { old & !m };
                a.bits[idx] = new;
                let wear = match a.policy {
                    WearPolicy::CountTransitions => old ^ new,
                    WearPolicy::CountApplications => m,
                };
                if wear != 0 {
                    a.add_wear(c, w, wear);
                }
            });
        }
        Ok(self.access(0, 1))
    }

    /// One word read: several columns of a single row.
    pub fn read_row_external(&mut self, row: usize, cols: &[usize]) -> Result<(Vec<bool>, ExecStats), CrossbarError> {
        self.check_row(row)?;
        for &c in cols {
            self.check_col(c)?;
        }
        let v = cols.iter().map(|&c| self.peek(row, c)).collect();
        Ok((v, self.access(1, 0)))
    }

    /// One readout of whole columns (sense amplifiers on every row line).
    /// Returns the packed words of each column.
    pub fn read_columns_external(&mut self, cols: &[usize]) -> Result<(Vec<Vec<u64>>, ExecStats), CrossbarError> {
        for &c in cols {
            self.check_col(c)?;
        }
        let v = cols.iter().map(|&c| self.peek_column(c).to_vec()).collect();
        Ok((v, self.access(1, 0)))
    }

    fn for_each_word(&mut self, mask: &RowMask, window: &Range<usize>, mut f: impl FnMut(&mut Self, usize, u64)) {
        let window = window.start..window.end.min(self.rows);
        for r in mask.clip(&window) {
            let (first, last) = (r.start / 64, (r.end - 1) / 64);
            for w in first..=last {
                let lo = if w == first { r.start % 64 } else { 0 };
                let hi = if w == last { (r.end - 1) % 64 } else { 63 };
                let m = (u64::MAX >> (63 - hi)) & (u64::MAX << lo);
                f(self, w, m);
            }
        }
    }

    /// Apply one micro-op to rows `r` (already clipped to the array).
    #[inline]
    fn apply_span(&mut self, kind: OpKind, r: Range<usize>) -> u64 {
        let words = self.words;
        let (first, last) = (r.start / 64, (r.end - 1) / 64);
        let lo_mask = u64::MAX << (r.start % 64);
        let hi_mask = u64::MAX >> (63 - (r.end - 1) % 64);
        let count_apps = self.policy == WearPolicy::CountApplications;
        let dst = kind.dst();
        // Column `dst` as a mutable slice, plus the source column if any.
        let (dst_col, src_col): (&mut [u64], Option<&[u64]>) = match kind {
            OpKind::Clear { .. } => (&mut self.bits[dst * words..(dst + 1) * words], None),
            OpKind::Imply { src, .. } if src < dst => {
                let (a, b) = self.bits.split_at_mut(dst * words);
                (&mut b[..words], Some(&a[src * words..(src + 1) * words]))
            }
            OpKind::Imply { src, .. } => {
                let (a, b) = self.bits.split_at_mut(src * words);
                (&mut a[dst * words..(dst + 1) * words], Some(&b[..words]))
            }
        };
        let planes = &mut self.wear[dst];
        if planes.is_empty() {
            planes.resize(words, 0);
        }
        for w in first..=last {
            let mut m = u64::MAX;
            if w == first {
                m &= lo_mask;
            }
            if w == last {
                m &= hi_mask;
            }
            let old = dst_col[w];
            let new = match src_col {
                None => old & !m,
                Some(s) => old | (!s[w] & m),
            };
            dst_col[w] = new;
            let mut carry = if count_apps { m } else { old ^ new };
            let mut i = w;
            while carry != 0 {
                if i >= planes.len() {
                    planes.resize(i + words - w, 0);
                }
                let next = planes[i] & carry;
                planes[i] ^= carry;
                carry = next;
                i += words;
            }
        }
        (r.end - r.start) as u64
    }

    fn run_step(&mut self, step: &Step, window: &Range<usize>, col_offset: usize) -> ExecStats {
        let mut d = ExecStats {
            step_count: 1,
            elapsed_ns: self.timing.step_time_ns,
            ..Default::default()
        };
        let phase = step.phase.index();
        let window = window.start..window.end.min(self.rows);
        let (mut cleared, mut implied) = (0u64, 0u64);
        // Sources are never destinations within a step, so applying ops in
        // place is identical to reading all values at step entry.
        for op in &step.ops {
            let kind = op.shifted(col_offset);
            let mut active = 0u64;
            match &op.rows {
                RowMask::All => {
                    if window.start < window.end {
                        active += self.apply_span(kind, window.clone());
                    }
                }
                RowMask::Ranges(rs) => {
                    for r in rs {
                        let r = r.start.max(window.start)..r.end.min(window.end);
                        if r.start < r.end {
                            active += self.apply_span(kind, r);
                        }
                    }
                }
            }
            match kind {
                OpKind::Clear { .. } => cleared += active,
                OpKind::Imply { .. } => implied += active,
            }
        }
        d.clear_events = cleared;
        d.set_events = implied;
        d.cond_events = implied;
        d.phase_events[phase][EV_CLEAR] = cleared;
        d.phase_events[phase][EV_SET] = implied;
        d.phase_events[phase][EV_COND] = implied;
        d.energy_fj = energy_of(&d, &self.energy);
        d
    }

    pub fn execute_step(&mut self, step: &Step) -> Result<ExecStats, CrossbarError> {
        step.validate(0)?;
        if let Some(c) = step.max_col() {
            self.check_col(c)?;
        }
        let d = self.run_step(step, &(0..self.rows), 0);
        self.stats += d;
        Ok(d)
    }

    pub fn execute_program(&mut self, program: &StepProgram) -> Result<ExecStats, CrossbarError> {
        self.execute_program_at(program, 0..self.rows, 0)
    }

    /// Run `program` restricted to rows in `window`, with every column index
    /// shifted by `col_offset`. Bounds are checked before anything mutates.
    pub fn execute_program_at(
        &mut self,
        program: &StepProgram,
        window: Range<usize>,
        col_offset: usize,
    ) -> Result<ExecStats, CrossbarError> {
        if let Some(c) = program.max_col() {
            self.check_col(c + col_offset)?;
        }
        if window.end > self.rows {
            return Err(CrossbarError::RowOutOfRange { row: window.end - 1, rows: self.rows });
        }
        let mut total = ExecStats::default();
        for step in program.steps() {
            total += self.run_step(step, &window, col_offset);
        }
        self.stats += total;
        Ok(total)
    }

    /// Copy of the array with additional empty rows. Values and wear are kept.
    pub fn grown(&self, rows: usize) -> CrossbarArray {
        assert!(rows >= self.rows);
        let words = rows.div_ceil(64);
        let mut out = CrossbarArray::new(rows, self.cols)
            .with_policy(self.policy)
            .with_timing(self.timing)
            .with_energy(self.energy);
        out.stats = self.stats;
        for c in 0..self.cols {
            out.bits[c * words..c * words + self.words].copy_from_slice(self.peek_column(c));
            let planes = &self.wear[c];
            let np = planes.len() / self.words.max(1);
            let mut grown = vec![0u64; np * words];
            for p in 0..np {
                grown[p * words..p * words + self.words]
                    .copy_from_slice(&planes[p * self.words..(p + 1) * self.words]);
            }
            out.wear[c] = grown;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imply_two_rows() {
        let mut a = CrossbarArray::from_fn(2, 2, |r, c| c == 0 && r == 1);
        let s = Step::new(Phase::Generic, vec![MicroOp::imply(0, 1)]);
        a.execute_step(&s).unwrap();
        assert!(a.peek(0, 1));
        assert!(!a.peek(1, 1));
    }

    #[test]
    fn duplicate_destination_rejected_before_mutation() {
        let mut a = CrossbarArray::new(4, 3);
        let good = Step::new(Phase::Generic, vec![MicroOp::imply(0, 1)]);
        let bad = Step::new(Phase::Generic, vec![MicroOp::imply(0, 2), MicroOp::clear(2)]);
        let p = StepProgram::new(vec![good.clone(), bad]);
        assert_eq!(
            p.unwrap_err(),
            CrossbarError::DuplicateDestination { step: 1, col: 2 }
        );
        let clash = Step::new(Phase::Generic, vec![MicroOp::imply(0, 1), MicroOp::imply(1, 2)]);
        assert!(matches!(
            a.execute_step(&clash),
            Err(CrossbarError::SourceIsDestination { col: 1, .. })
        ));
        assert_eq!(a.stats().step_count, 0);
    }

    #[test]
    fn out_of_range_program_does_not_mutate() {
        let mut a = CrossbarArray::new(4, 2);
        let p = StepProgram::new(vec![
            Step::new(Phase::Generic, vec![MicroOp::imply(0, 1)]),
            Step::new(Phase::Generic, vec![MicroOp::clear(5)]),
        ])
        .unwrap();
        assert!(a.execute_program(&p).is_err());
        assert!(!a.peek(0, 1));
    }

    #[test]
    fn wear_counter_carries() {
        let mut a = CrossbarArray::new(70, 2);
        for i in 0..1000u64 {
            a.write_external(69, 1, i % 2 == 0).unwrap();
        }
        assert_eq!(a.write_count(69, 1), 1000);
        assert_eq!(a.total_writes(), 1000);
        assert_eq!(a.max_write_count(), 1000);
        let g = a.grown(200);
        assert_eq!(g.write_count(69, 1), 1000);
        assert!(!g.peek(69, 1));
    }

    #[test]
    fn ranges_render() {
        let m = RowMask::from_rows([0, 1, 2, 5, 9, 10]);
        assert_eq!(format_ranges(&m.clip(&(0..100))), "0-2,5,9-10");
        assert_eq!(format_ranges(&m.clip(&(1..6))), "1-2,5");
    }

    #[test]
    fn access_timing() {
        let mut a = CrossbarArray::new(1, 1).with_timing(Timing { step_time_ns: 2.0, t_access_ns: 10.0 });
        let d = a.write_external(0, 0, true).unwrap();
        assert_eq!(d.elapsed_ns, 10.0);
        let (v, d) = a.read_external(0, 0).unwrap();
        assert!(v);
        assert_eq!(d.external_reads, 1);
        assert_eq!(a.write_count(0, 0), 1);
    }
}
