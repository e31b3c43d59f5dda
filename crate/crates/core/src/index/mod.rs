//! Hybrid CMOS/memristor index structures.
//!
//! The upper levels (a hash table or a T-tree) live on the CMOS side. Each
//! gap under the upper structure links to a memristor partition: a CAM
//! partition searched as a whole, or a B+-tree of CAM-searched nodes.

mod btree;
mod ttree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::{CamError, CamMode, CamPartition, Entry, EntryMatch};
use crate::crossbar::{CrossbarArray, ExecStats, Timing};
use crate::device::WearPolicy;

use btree::BTree;
use ttree::TTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexKind {
    #[serde(rename = "hash-cam")]
    HashCam,
    #[serde(rename = "ttree-cam")]
    TTreeCam,
    #[serde(rename = "tb-tree")]
    TbTree,
    #[serde(rename = "tb-tree-cam")]
    TbTreeCam,
}

impl IndexKind {
    pub const ALL: [IndexKind; 4] = [IndexKind::HashCam, IndexKind::TTreeCam, IndexKind::TbTree, IndexKind::TbTreeCam];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::HashCam => "hash-cam",
            IndexKind::TTreeCam => "ttree-cam",
            IndexKind::TbTree => "tb-tree",
            IndexKind::TbTreeCam => "tb-tree-cam",
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndexKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        IndexKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| format!("unknown structure `{s}` (expected one of hash-cam, ttree-cam, tb-tree, tb-tree-cam)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashKind {
    /// Multiplicative hashing. Point queries only.
    Uniform,
    /// Buckets by the high-order key bits.
    UniformOrderPreserving,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridIndexConfig {
    pub kind: IndexKind,
    pub level_u: u32,
    /// Keys per T-node.
    pub t: usize,
    /// B+-tree order.
    pub b: usize,
    /// Depth of the CAM-searched subtree roots (TB+-tree-CAM only).
    pub cam_subtree_root_depth: usize,
    /// Hash buckets for Hash-CAM; tree kinds always have 2^level_u gaps.
    pub partitions: Option<usize>,
    pub hash: HashKind,
    pub key_bits: u32,
    /// Rows per CAM partition. Defaults to twice the initial fill.
    pub partition_capacity: Option<usize>,
    /// B+-tree node utilization at build time.
    pub btree_fill: f64,
    pub wear_policy: WearPolicy,
    pub timing: Timing,
    pub endurance_limit: f64,
}

impl Default for HybridIndexConfig {
    fn default() -> Self {
        Self {
            kind: IndexKind::TTreeCam,
            level_u: 3,
            t: 10,
            b: 80,
            cam_subtree_root_depth: 1,
            partitions: None,
            hash: HashKind::UniformOrderPreserving,
            key_bits: 32,
            partition_capacity: None,
            btree_fill: 0.75,
            wear_policy: WearPolicy::CountTransitions,
            timing: Timing::default(),
            endurance_limit: 1e10,
        }
    }
}

impl HybridIndexConfig {
    pub fn new(kind: IndexKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        let bad = |m: String| Err(IndexError::Config(m));
        crate::cam::check_key_bits(self.key_bits).map_err(|e| IndexError::Config(e.to_string()))?;
        if self.key_bits > 64 {
            return bad(format!("key_bits {} exceeds 64-bit keys", self.key_bits));
        }
        if self.level_u == 0 || self.level_u > 24 {
            return bad(format!("level_u must be in 1..=24, got {}", self.level_u));
        }
        if self.t == 0 {
            return bad("t must be at least 1".into());
        }
        if self.b < 3 {
            return bad(format!("b must be at least 3, got {}", self.b));
        }
        if !(self.btree_fill > 0.0 && self.btree_fill <= 1.0) {
            return bad(format!("btree_fill must be in (0, 1], got {}", self.btree_fill));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.endurance_limit > 0.0) {
            return bad("endurance_limit must be positive".into());
        }
        if let Some(c) = self.partition_capacity {
            if c < 2 * self.t + 2 {
                return bad(format!("partition_capacity must be at least 2t+2 = {}", 2 * self.t + 2));
            }
        }
        match (self.kind, self.partitions) {
            (IndexKind::HashCam, Some(0)) => bad("partitions must be positive".into()),
            (IndexKind::HashCam, Some(p)) if self.hash == HashKind::UniformOrderPreserving && !p.is_power_of_two() => {
                bad(format!("order-preserving hashing needs a power-of-two partition count, got {p}"))
            }
            (IndexKind::HashCam, _) => Ok(()),
            (_, Some(p)) if p != 1 << self.level_u => bad(format!(
                "tree structures have 2^level_u = {} partitions, got partitions = {p}",
                1u64 << self.level_u
            )),
            _ => Ok(()),
        }
    }

    fn hash_partitions(&self) -> usize {
        self.partitions.unwrap_or(1 << self.level_u)
    }

    fn cam_mode(&self) -> CamMode {
        match (self.kind, self.hash) {
            (IndexKind::HashCam, HashKind::Uniform) => CamMode::Cam,
            _ => CamMode::Tcam,
        }
    }

    fn effective_cam_depth(&self) -> usize {
        match self.kind {
            IndexKind::TbTreeCam => self.cam_subtree_root_depth,
            _ => usize::MAX,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("key {0} already present")]
    Duplicate(u64),
    #[error("key {0} not present")]
    Missing(u64),
    #[error("empty range: lo {lo} > hi {hi}")]
    BadRange { lo: u64, hi: u64 },
    #[error("range queries need an order-preserving hash")]
    RangeUnsupported,
    #[error("key {key:#x} does not fit in {bits} bits")]
    KeyTooWide { key: u64, bits: u32 },
    #[error(transparent)]
    Cam(#[from] CamError),
}

/// Physical memristor arrays backing one partition. Wear stays with the pool
/// when the partition's data migrates elsewhere.
#[derive(Clone, Debug)]
pub(crate) struct Pool {
    pub(crate) phys: usize,
    pub(crate) arrays: Vec<CrossbarArray>,
    policy: WearPolicy,
    timing: Timing,
}

impl Pool {
    fn new(phys: usize, policy: WearPolicy, timing: Timing) -> Self {
        Self { phys, arrays: Vec::new(), policy, timing }
    }

    /// Make array `i` exist and fit `part`.
    pub(crate) fn ensure(&mut self, i: usize, part: &CamPartition) {
        while self.arrays.len() <= i {
            self.arrays.push(CrossbarArray::new(0, part.width()).with_policy(self.policy).with_timing(self.timing));
        }
        let a = &mut self.arrays[i];
        if a.cols() < part.region_col0 + part.width() {
            *a = CrossbarArray::new(a.rows(), part.region_col0 + part.width()).with_policy(self.policy).with_timing(self.timing);
        }
        if a.rows() < part.region_row0 + part.capacity {
            *a = a.grown(part.region_row0 + part.capacity);
        }
    }

    fn wear(&self) -> (u64, u64) {
        let max = self.arrays.iter().map(|a| a.max_write_count()).max().unwrap_or(0);
        let total = self.arrays.iter().map(|a| a.total_writes()).sum();
        (max, total)
    }
}

/// One CAM partition with its record refs.
#[derive(Clone, Debug)]
struct CamStore {
    part: CamPartition,
    refs: Vec<u64>,
    pool: Pool,
}

impl CamStore {
    fn new(mode: CamMode, key_bits: u32, capacity: usize, mut pool: Pool) -> Result<Self, IndexError> {
        let part = CamPartition::new(mode, key_bits, capacity)?;
        pool.ensure(0, &part);
        Ok(Self { part, refs: Vec::new(), pool })
    }

    fn len(&self) -> usize {
        self.part.len
    }

    fn array(&mut self) -> &mut CrossbarArray {
        &mut self.pool.arrays[0]
    }

    fn search(&mut self, key: u64, st: &mut ExecStats) -> Result<Vec<EntryMatch>, IndexError> {
        let part = self.part.clone();
        let (m, d) = part.search(self.array(), key)?;
        *st += d;
        Ok(m)
    }

    fn find(&mut self, key: u64, st: &mut ExecStats) -> Result<Option<usize>, IndexError> {
        if self.len() == 0 {
            return Ok(None);
        }
        Ok(self.search(key, st)?.iter().position(|m| m.is_equal()))
    }

    fn fetch_ref(&mut self, row: usize, st: &mut ExecStats) -> u64 {
        st.external_reads += 1;
        st.elapsed_ns += self.pool.timing.t_access_ns;
        self.refs[row]
    }

    fn is_full(&self) -> bool {
        self.len() == self.part.capacity
    }

    fn append(&mut self, key: u64, r: u64, st: &mut ExecStats) -> Result<(), IndexError> {
        let mut part = self.part.clone();
        *st += part.write_entry(self.array(), part.len, &Entry::exact(key))?;
        self.part = part;
        self.refs.push(r);
        Ok(())
    }

    fn remove_row(&mut self, row: usize, st: &mut ExecStats) -> Result<u64, IndexError> {
        let mut part = self.part.clone();
        let last = part.len - 1;
        if row != last {
            let (e, d) = part.read_entry(self.array(), last)?;
            *st += d;
            *st += part.write_entry(self.array(), row, &e)?;
        }
        part.truncate(last);
        self.part = part;
        Ok(self.refs.swap_remove(row))
    }

    fn read_row(&mut self, row: usize, st: &mut ExecStats) -> Result<(u64, u64), IndexError> {
        let part = self.part.clone();
        let (e, d) = part.read_entry(self.array(), row)?;
        *st += d;
        Ok((e.value, self.refs[row]))
    }

    fn read_all(&mut self, st: &mut ExecStats) -> Result<Vec<(u64, u64)>, IndexError> {
        (0..self.len()).map(|r| self.read_row(r, st)).collect()
    }

    /// Replace the contents with `records`, growing the region if needed.
    fn rewrite(&mut self, records: &[(u64, u64)], st: &mut ExecStats) -> Result<(), IndexError> {
        let mut part = self.part.clone();
        part.capacity = part.capacity.max(records.len());
        part.truncate(0);
        self.pool.ensure(0, &part);
        let words: Vec<Entry> = records.iter().map(|r| Entry::exact(r.0)).collect();
        *st += part.store_entries(self.array(), &words)?;
        self.part = part;
        self.refs = records.iter().map(|r| r.1).collect();
        Ok(())
    }

    fn grow(&mut self) {
        self.part.capacity *= 2;
        let part = self.part.clone();
        self.pool.ensure(0, &part);
    }

    fn take_extreme(&mut self, max: bool, st: &mut ExecStats) -> Result<Option<(u64, u64)>, IndexError> {
        if self.len() == 0 {
            return Ok(None);
        }
        let all = self.read_all(st)?;
        let (row, _) = all
            .iter()
            .enumerate()
            .max_by_key(|(_, e)| if max { e.0 } else { u64::MAX - e.0 })
            .expect("non-empty");
        let key = all[row].0;
        let r = self.remove_row(row, st)?;
        Ok(Some((key, r)))
    }

    fn range(&mut self, lo: u64, hi: u64, lo_bound: bool, hi_bound: bool, st: &mut ExecStats) -> Result<Vec<(u64, u64)>, IndexError> {
        if !(lo_bound || hi_bound) {
            return self.read_all(st);
        }
        if self.len() == 0 {
            return Ok(Vec::new());
        }
        let ge = if lo_bound { Some(self.search(lo, st)?) } else { None };
        let le = if hi_bound { Some(self.search(hi, st)?) } else { None };
        let mut out = Vec::new();
        for row in 0..self.len() {
            let a = ge.as_ref().map_or(true, |m| m[row] != EntryMatch::Less);
            let b = le.as_ref().map_or(true, |m| m[row] != EntryMatch::Greater);
            if a && b {
                out.push(self.read_row(row, st)?);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
enum Part {
    Cam(CamStore),
    Tree(BTree),
}

impl Part {
    fn pool(&self) -> &Pool {
        match self {
            Part::Cam(c) => &c.pool,
            Part::Tree(t) => &t.pool,
        }
    }

    fn pool_mut(&mut self) -> &mut Pool {
        match self {
            Part::Cam(c) => &mut c.pool,
            Part::Tree(t) => &mut t.pool,
        }
    }

    fn len(&self) -> usize {
        match self {
            Part::Cam(c) => c.len(),
            Part::Tree(t) => t.len(),
        }
    }
}

enum Upper {
    Hash(Vec<usize>),
    Tree(TTree),
}

/// Wear of one physical partition slot.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionWear {
    pub physical: usize,
    pub writes_total: u64,
    pub max_cell_writes: u64,
    pub projected_lifetime_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WearStats {
    pub partitions: Vec<PartitionWear>,
    pub max_write_count: u64,
    /// Searches the counts were accumulated over.
    pub searches: u64,
    pub query_rate: f64,
    pub endurance_limit: f64,
    pub projected_lifetime_s: f64,
}

impl WearStats {
    pub const CSV_HEADER: &'static str = "partition,writes_total,max_cell_writes,projected_lifetime_s";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.partitions {
            s.push_str(&format!("{},{},{},{}\n", p.physical, p.writes_total, p.max_cell_writes, p.projected_lifetime_s));
        }
        s
    }
}

/// Projected seconds until a cell that took `max_writes` over `searches`
/// searches reaches `endurance` at `query_rate` searches per second.
pub fn projected_lifetime_s(endurance: f64, max_writes: u64, searches: u64, query_rate: f64) -> f64 {
    if max_writes == 0 {
        return f64::INFINITY;
    }
    endurance * searches as f64 / (max_writes as f64 * query_rate)
}

pub struct HybridIndex {
    cfg: HybridIndexConfig,
    upper: Upper,
    parts: Vec<Option<Part>>,
    free_parts: Vec<usize>,
    spare_pools: Vec<Pool>,
    next_phys: usize,
    len: usize,
    searches: u64,
    stats: ExecStats,
    last_stats: ExecStats,
    touched: Vec<usize>,
}

const HASH_MUL: u64 = 0x9E37_79B9_7F4A_7C15;

impl HybridIndex {
    /// Build over `records` (distinct keys, any order).
    pub fn build(cfg: HybridIndexConfig, records: &[(u64, u64)]) -> Result<Self, IndexError> {
        cfg.validate()?;
        let mut sorted = records.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(IndexError::Duplicate(w[0].0));
        }
        let mut ix = HybridIndex {
            upper: Upper::Hash(Vec::new()),
            parts: Vec::new(),
            free_parts: Vec::new(),
            spare_pools: Vec::new(),
            next_phys: 0,
            len: sorted.len(),
            searches: 0,
            stats: ExecStats::default(),
            last_stats: ExecStats::default(),
            touched: Vec::new(),
            cfg,
        };
        for &(k, _) in &sorted {
            ix.check_key(k)?;
        }
        let mut st = ExecStats::default();
        match ix.cfg.kind {
            IndexKind::HashCam => {
                let p = ix.cfg.hash_partitions();
                let mut buckets: Vec<Vec<(u64, u64)>> = vec![Vec::new(); p];
                for &rec in &sorted {
                    buckets[ix.bucket(rec.0)].push(rec);
                }
                let biggest = buckets.iter().map(Vec::len).max().unwrap_or(0);
                let cap = ix.cfg.partition_capacity.unwrap_or((2 * biggest).max(2 * ix.cfg.t + 2));
                let mut ids = Vec::with_capacity(p);
                for b in buckets {
                    let mut cap = cap;
                    while cap < b.len() {
                        cap *= 2;
                    }
                    let id = ix.new_cam_part(cap)?;
                    ix.cam_mut(id).rewrite(&b, &mut st)?;
                    ids.push(id);
                }
                ix.upper = Upper::Hash(ids);
            }
            _ => {
                let t = ix.cfg.t;
                let mut levels = ix.cfg.level_u;
                while levels > 0 && ((1usize << levels) - 1) * t >= sorted.len() {
                    levels -= 1;
                }
                let nodes = (1usize << levels) - 1;
                let gaps = nodes + 1;
                let lower = sorted.len() - nodes * t;
                let (q, r) = (lower / gaps, lower % gaps);
                let mut at = 0;
                let mut node_keys = Vec::with_capacity(nodes);
                let mut gap_ids = Vec::with_capacity(gaps);
                let cap = ix.cfg.partition_capacity.unwrap_or((2 * (q + 1)).max(2 * t + 2));
                for g in 0..gaps {
                    let n = q + usize::from(g < r);
                    let slice = &sorted[at..at + n];
                    at += n;
                    gap_ids.push(ix.new_lower_part(cap, slice, &mut st)?);
                    if g < nodes {
                        node_keys.push(sorted[at..at + t].to_vec());
                        at += t;
                    }
                }
                ix.upper = Upper::Tree(TTree::perfect(t, node_keys, gap_ids));
            }
        }
        ix.stats += st;
        Ok(ix)
    }

    pub fn config(&self) -> &HybridIndexConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Live partitions.
    pub fn partition_count(&self) -> usize {
        self.parts.iter().filter(|p| p.is_some()).count()
    }

    /// Records held by the upper (CMOS) levels.
    pub fn upper_records(&self) -> usize {
        match &self.upper {
            Upper::Hash(_) => 0,
            Upper::Tree(t) => t.record_count(),
        }
    }

    /// Partitions where compare programs ran during the last operation.
    pub fn last_touched(&self) -> &[usize] {
        &self.touched
    }

    /// Simulator cost of the last operation.
    pub fn last_stats(&self) -> ExecStats {
        self.last_stats
    }

    /// Cumulative simulator cost, including the build.
    pub fn stats(&self) -> ExecStats {
        self.stats
    }

    pub fn searches(&self) -> u64 {
        self.searches
    }

    fn check_key(&self, key: u64) -> Result<(), IndexError> {
        let bits = self.cfg.key_bits;
        if bits < 64 && key >> bits != 0 {
            return Err(IndexError::KeyTooWide { key, bits });
        }
        Ok(())
    }

    fn bucket(&self, key: u64) -> usize {
        let p = self.cfg.hash_partitions();
        match self.cfg.hash {
            HashKind::Uniform => ((key.wrapping_mul(HASH_MUL) as u128 * p as u128) >> 64) as usize,
            HashKind::UniformOrderPreserving => {
                let shift = self.cfg.key_bits - p.trailing_zeros();
                (key >> shift) as usize
            }
        }
    }

    fn take_pool(&mut self) -> Pool {
        self.spare_pools.pop().unwrap_or_else(|| {
            let phys = self.next_phys;
            self.next_phys += 1;
            Pool::new(phys, self.cfg.wear_policy, self.cfg.timing)
        })
    }

    fn insert_part(&mut self, part: Part) -> usize {
        match self.free_parts.pop() {
            Some(id) => {
                self.parts[id] = Some(part);
                id
            }
            None => {
                self.parts.push(Some(part));
                self.parts.len() - 1
            }
        }
    }

    fn new_cam_part(&mut self, capacity: usize) -> Result<usize, IndexError> {
        let pool = self.take_pool();
        let store = CamStore::new(self.cfg.cam_mode(), self.cfg.key_bits, capacity, pool)?;
        Ok(self.insert_part(Part::Cam(store)))
    }

    fn new_lower_part(&mut self, capacity: usize, records: &[(u64, u64)], st: &mut ExecStats) -> Result<usize, IndexError> {
        match self.cfg.kind {
            IndexKind::TTreeCam | IndexKind::HashCam => {
                let mut cap = capacity;
                while cap < records.len() {
                    cap *= 2;
                }
                let id = self.new_cam_part(cap)?;
                self.cam_mut(id).rewrite(records, st)?;
                Ok(id)
            }
            IndexKind::TbTree | IndexKind::TbTreeCam => {
                let pool = self.take_pool();
                let cfg = &self.cfg;
                let tree = BTree::bulk_load(cfg.b, cfg.key_bits, cfg.effective_cam_depth(), pool, records, cfg.btree_fill, st)?;
                Ok(self.insert_part(Part::Tree(tree)))
            }
        }
    }

    fn free_part(&mut self, id: usize) {
        if let Some(p) = self.parts[id].take() {
            let pool = match p {
                Part::Cam(c) => c.pool,
                Part::Tree(t) => t.pool,
            };
            self.spare_pools.push(pool);
            self.free_parts.push(id);
        }
    }

    fn part_mut(&mut self, id: usize) -> &mut Part {
        self.parts[id].as_mut().expect("live partition")
    }

    fn cam_mut(&mut self, id: usize) -> &mut CamStore {
        match self.part_mut(id) {
            Part::Cam(c) => c,
            Part::Tree(_) => unreachable!("partition {id} is a B+-tree"),
        }
    }

    fn touch(&mut self, id: usize, before: &ExecStats, after: &ExecStats) {
        if after.step_count > before.step_count && !self.touched.contains(&id) {
            self.touched.push(id);
        }
    }

    fn part_get(&mut self, id: usize, key: u64, st: &mut ExecStats) -> Result<Option<u64>, IndexError> {
        let before = *st;
        let r = match self.part_mut(id) {
            Part::Cam(c) => c.find(key, st)?.map(|row| c.fetch_ref(row, st)),
            Part::Tree(t) => t.get(key, st)?,
        };
        self.touch(id, &before, st);
        Ok(r)
    }

    /// Insert into a partition. Returns false if a CAM partition is full.
    fn part_insert(&mut self, id: usize, key: u64, r: u64, st: &mut ExecStats) -> Result<bool, IndexError> {
        let before = *st;
        let out = match self.part_mut(id) {
            Part::Cam(c) => {
                if c.find(key, st)?.is_some() {
                    Err(IndexError::Duplicate(key))
                } else if c.is_full() {
                    Ok(false)
                } else {
                    c.append(key, r, st).map(|_| true)
                }
            }
            Part::Tree(t) => t.insert(key, r, st).map(|_| true),
        };
        self.touch(id, &before, st);
        out
    }

    fn part_remove(&mut self, id: usize, key: u64, st: &mut ExecStats) -> Result<u64, IndexError> {
        let before = *st;
        let out = match self.part_mut(id) {
            Part::Cam(c) => match c.find(key, st)? {
                Some(row) => c.remove_row(row, st),
                None => Err(IndexError::Missing(key)),
            },
            Part::Tree(t) => t.remove(key, st),
        };
        self.touch(id, &before, st);
        out
    }

    fn part_take_extreme(&mut self, id: usize, max: bool, st: &mut ExecStats) -> Result<Option<(u64, u64)>, IndexError> {
        let before = *st;
        let out = match self.part_mut(id) {
            Part::Cam(c) => c.take_extreme(max, st),
            Part::Tree(t) => t.take_extreme(max, st),
        };
        self.touch(id, &before, st);
        out
    }

    fn part_range(&mut self, id: usize, lo: u64, hi: u64, lo_b: bool, hi_b: bool, st: &mut ExecStats) -> Result<Vec<(u64, u64)>, IndexError> {
        let before = *st;
        let out = match self.part_mut(id) {
            Part::Cam(c) => c.range(lo, hi, lo_b, hi_b, st),
            Part::Tree(t) => t.range(lo, hi, lo_b, hi_b, st),
        };
        self.touch(id, &before, st);
        out
    }

    /// Split a full CAM partition: its middle `t` keys become a new T-node
    /// whose right gap is a fresh partition holding the upper part.
    fn split_part(&mut self, id: usize, st: &mut ExecStats) -> Result<(Vec<(u64, u64)>, usize), IndexError> {
        let t = self.cfg.t;
        let mut all = self.cam_mut(id).read_all(st)?;
        all.sort_unstable();
        let start = (all.len() - t) / 2;
        let right: Vec<(u64, u64)> = all.split_off(start + t);
        let mid: Vec<(u64, u64)> = all.split_off(start);
        self.cam_mut(id).rewrite(&all, st)?;
        let cap = self.cam_mut(id).part.capacity;
        let new = self.new_cam_part(cap)?;
        self.cam_mut(new).rewrite(&right, st)?;
        Ok((mid, new))
    }

    fn begin(&mut self) -> ExecStats {
        self.touched.clear();
        ExecStats::default()
    }

    fn finish(&mut self, st: ExecStats) {
        self.last_stats = st;
        self.stats += st;
    }

    pub fn point_query(&mut self, key: u64) -> Result<Option<u64>, IndexError> {
        let mut st = self.begin();
        self.searches += 1;
        let out = self.point_inner(key, &mut st);
        self.finish(st);
        out
    }

    fn point_inner(&mut self, key: u64, st: &mut ExecStats) -> Result<Option<u64>, IndexError> {
        if self.check_key(key).is_err() {
            return Ok(None);
        }
        let target = match &self.upper {
            Upper::Hash(ids) => ids[self.bucket(key)],
            Upper::Tree(tree) => match tree.route(key) {
                ttree::Route::Node { found, .. } => return Ok(found),
                ttree::Route::Gap(p) => p,
            },
        };
        self.part_get(target, key, st)
    }

    /// Records with `lo <= key <= hi`, sorted by key.
    pub fn range_query(&mut self, lo: u64, hi: u64) -> Result<Vec<(u64, u64)>, IndexError> {
        if lo > hi {
            return Err(IndexError::BadRange { lo, hi });
        }
        if self.cfg.kind == IndexKind::HashCam && self.cfg.hash == HashKind::Uniform {
            return Err(IndexError::RangeUnsupported);
        }
        let mut st = self.begin();
        self.searches += 1;
        let out = self.range_inner(lo, hi, &mut st);
        self.finish(st);
        out
    }

    fn range_inner(&mut self, lo: u64, hi: u64, st: &mut ExecStats) -> Result<Vec<(u64, u64)>, IndexError> {
        let top = if self.cfg.key_bits >= 64 { u64::MAX } else { (1u64 << self.cfg.key_bits) - 1 };
        if lo > top {
            return Ok(Vec::new());
        }
        let hi = hi.min(top);
        let mut out = Vec::new();
        let plan: Vec<(usize, bool, bool)> = match &self.upper {
            Upper::Hash(ids) => {
                let (a, b) = (self.bucket(lo), self.bucket(hi));
                (a..=b).map(|i| (ids[i], i == a, i == b)).collect()
            }
            Upper::Tree(tree) => {
                let gap_lo = tree.route(lo).gap();
                let gap_hi = tree.route(hi).gap();
                let mut gaps = Vec::new();
                tree.walk(lo, hi, &mut out, &mut gaps);
                gaps.into_iter().map(|g| (g, Some(g) == gap_lo, Some(g) == gap_hi)).collect()
            }
        };
        for (id, lo_b, hi_b) in plan {
            let recs = self.part_range(id, lo, hi, lo_b, hi_b, st)?;
            out.extend(recs.into_iter().filter(|r| r.0 >= lo && r.0 <= hi));
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn insert(&mut self, key: u64, r: u64) -> Result<(), IndexError> {
        self.check_key(key)?;
        let mut st = self.begin();
        let out = self.insert_inner(key, r, &mut st);
        self.finish(st);
        if out.is_ok() {
            self.len += 1;
        }
        out
    }

    fn insert_inner(&mut self, key: u64, r: u64, st: &mut ExecStats) -> Result<(), IndexError> {
        if let Upper::Hash(ids) = &self.upper {
            let id = ids[self.bucket(key)];
            if !self.part_insert(id, key, r, st)? {
                self.cam_mut(id).grow();
                let ok = self.part_insert(id, key, r, st)?;
                debug_assert!(ok);
            }
            return Ok(());
        }
        let Upper::Tree(tree) = std::mem::replace(&mut self.upper, Upper::Hash(Vec::new())) else { unreachable!() };
        let mut tree = tree;
        let out = tree.insert(self, key, r, st);
        self.upper = Upper::Tree(tree);
        out
    }

    pub fn delete(&mut self, key: u64) -> Result<u64, IndexError> {
        self.check_key(key).map_err(|_| IndexError::Missing(key))?;
        let mut st = self.begin();
        let out = self.delete_inner(key, &mut st);
        self.finish(st);
        if out.is_ok() {
            self.len -= 1;
        }
        out
    }

    fn delete_inner(&mut self, key: u64, st: &mut ExecStats) -> Result<u64, IndexError> {
        if let Upper::Hash(ids) = &self.upper {
            let id = ids[self.bucket(key)];
            return self.part_remove(id, key, st);
        }
        let Upper::Tree(tree) = std::mem::replace(&mut self.upper, Upper::Hash(Vec::new())) else { unreachable!() };
        let mut tree = tree;
        let out = tree.delete(self, key, st);
        self.upper = Upper::Tree(tree);
        out
    }

    /// Partition ids in logical order.
    fn logical_order(&self) -> Vec<usize> {
        match &self.upper {
            Upper::Hash(ids) => ids.clone(),
            Upper::Tree(t) => t.gaps(),
        }
    }

    /// Physical slot of each partition, in logical order.
    pub fn mapping(&self) -> Vec<usize> {
        self.logical_order().into_iter().map(|id| self.parts[id].as_ref().expect("live").pool().phys).collect()
    }

    /// Advance the logical-to-physical mapping by one slot: the data of each
    /// partition moves into the slot of its logical successor.
    pub fn rotate_partitions(&mut self) -> Result<(), IndexError> {
        let order = self.logical_order();
        if order.len() < 2 {
            return Ok(());
        }
        let mut st = self.begin();
        enum Image {
            Cam(Vec<(u64, u64)>),
            Tree(btree::TreeImage),
        }
        let mut images = Vec::with_capacity(order.len());
        for &id in &order {
            images.push(match self.part_mut(id) {
                Part::Cam(c) => Image::Cam(c.read_all(&mut st)?),
                Part::Tree(t) => Image::Tree(t.export(&mut st)?),
            });
        }
        let mut pools: Vec<Pool> = order
            .iter()
            .map(|&id| std::mem::replace(self.part_mut(id).pool_mut(), Pool::new(usize::MAX, WearPolicy::default(), Timing::default())))
            .collect();
        pools.rotate_left(1);
        for ((&id, pool), img) in order.iter().zip(pools).zip(images) {
            let part = self.part_mut(id);
            *part.pool_mut() = pool;
            match (part, img) {
                (Part::Cam(c), Image::Cam(recs)) => c.rewrite(&recs, &mut st)?,
                (Part::Tree(t), Image::Tree(img)) => t.import(&img, &mut st)?,
                _ => unreachable!("partition kind is fixed"),
            }
        }
        self.touched.clear();
        self.finish(st);
        Ok(())
    }

    /// Wear per physical slot, projected at `query_rate` searches per second
    /// from the searches run so far.
    pub fn wear_report(&self, query_rate: f64) -> WearStats {
        let mut rows: Vec<PartitionWear> = self
            .parts
            .iter()
            .flatten()
            .map(Part::pool)
            .chain(self.spare_pools.iter())
            .map(|pool| {
                let (max, total) = pool.wear();
                PartitionWear {
                    physical: pool.phys,
                    writes_total: total,
                    max_cell_writes: max,
                    projected_lifetime_s: projected_lifetime_s(self.cfg.endurance_limit, max, self.searches, query_rate),
                }
            })
            .collect();
        rows.sort_by_key(|r| r.physical);
        let max = rows.iter().map(|r| r.max_cell_writes).max().unwrap_or(0);
        WearStats {
            max_write_count: max,
            searches: self.searches,
            query_rate,
            endurance_limit: self.cfg.endurance_limit,
            projected_lifetime_s: projected_lifetime_s(self.cfg.endurance_limit, max, self.searches, query_rate),
            partitions: rows,
        }
    }

    /// Records per live partition, in logical order.
    pub fn partition_sizes(&self) -> Vec<usize> {
        self.logical_order().into_iter().map(|id| self.parts[id].as_ref().expect("live").len()).collect()
    }

    /// Verify structural invariants of the upper tree and every partition.
    pub fn check_invariants(&mut self) -> Result<(), String> {
        let mut count = 0;
        let bounds: Vec<(usize, Option<u64>, Option<u64>)> = match &self.upper {
            Upper::Tree(t) => {
                count += t.check()?;
                t.gap_bounds()
            }
            Upper::Hash(ids) => ids.iter().map(|&id| (id, None, None)).collect(),
        };
        let mut st = ExecStats::default();
        for (i, (id, lo, hi)) in bounds.into_iter().enumerate() {
            let hashed = matches!(self.upper, Upper::Hash(_));
            let want = hashed.then_some(i);
            let p = self.parts[id].as_mut().ok_or(format!("gap links dead partition {id}"))?;
            count += p.len();
            let recs = match p {
                Part::Cam(c) => c.read_all(&mut st),
                Part::Tree(t) => {
                    t.check()?;
                    t.read_all(&mut st)
                }
            }
            .map_err(|e| e.to_string())?;
            for &(k, _) in &recs {
                if lo.is_some_and(|l| k <= l) || hi.is_some_and(|h| k >= h) {
                    return Err(format!("partition {id}: key {k} outside ({lo:?}, {hi:?})"));
                }
            }
            let bucket_of: Vec<usize> = recs.iter().map(|r| self.bucket(r.0)).collect();
            if let Some(b) = want {
                if bucket_of.iter().any(|&x| x != b) {
                    return Err(format!("bucket {b} holds a key hashed elsewhere"));
                }
            }
        }
        if count != self.len {
            return Err(format!("index holds {count} records, expected {}", self.len));
        }
        Ok(())
    }
}
