//! Closed-form search-time, energy, lifetime and capacity model.
//!
//! Everything here is a pure function of [`ModelParams`]. Times are in ns.

use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::{self, CamMode};
use crate::device::WearPolicy;

const SECONDS_PER_YEAR: f64 = 365.25 * 24.0 * 3600.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "cmos-ttree")]
    CmosTTree,
    #[serde(rename = "mem-ttree")]
    MemTTree,
    #[serde(rename = "tb-tree")]
    TbTree,
    #[serde(rename = "hash-cam")]
    HashCam,
    #[serde(rename = "ttree-cam")]
    TTreeCam,
    #[serde(rename = "tb-tree-cam")]
    TbTreeCam,
    #[serde(rename = "memcam")]
    MemCam,
}

impl Structure {
    pub const ALL: [Structure; 7] = [
        Structure::CmosTTree,
        Structure::MemTTree,
        Structure::TbTree,
        Structure::HashCam,
        Structure::TTreeCam,
        Structure::TbTreeCam,
        Structure::MemCam,
    ];

    /// The four hybrid structures.
    pub const HYBRID: [Structure; 4] = [Structure::HashCam, Structure::TTreeCam, Structure::TbTree, Structure::TbTreeCam];

    pub fn name(self) -> &'static str {
        match self {
            Structure::CmosTTree => "cmos-ttree",
            Structure::MemTTree => "mem-ttree",
            Structure::TbTree => "tb-tree",
            Structure::HashCam => "hash-cam",
            Structure::TTreeCam => "ttree-cam",
            Structure::TbTreeCam => "tb-tree-cam",
            Structure::MemCam => "memcam",
        }
    }

    /// Whether searches run compare programs in memristor arrays.
    pub fn computes_in_memory(self) -> bool {
        !matches!(self, Structure::CmosTTree | Structure::MemTTree)
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Structure::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| format!("unknown structure `{s}`"))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("{records} records do not fill the {nodes} upper T-nodes (need {need})")]
    UpperUnderfull { records: f64, nodes: f64, need: f64 },
    #[error("the tree fits in the upper levels ({0} lower levels)")]
    NoLowerLevels(i64),
    #[error("key width must be a power of two in 2..=1024, got {0}")]
    BadKeyBits(u32),
    #[error("empty sweep grid")]
    EmptyGrid,
}

/// Which tree the record-node count refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeKind {
    TTree,
    TbTree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub n_records: f64,
    /// Records per T-node.
    pub t: f64,
    /// B+-tree order.
    pub b: f64,
    pub level_u: u32,
    pub node_time_u: f64,
    /// Lower T-node time of the CMOS T-tree.
    pub node_time_lt_cmos: f64,
    /// Lower T-node time of the memristor T-tree; `None` means one array
    /// access per node.
    pub node_time_lt_mem: Option<f64>,
    /// B+-tree node time; `None` means `3 * t_access + cam_latency(64, CAM)`.
    pub node_time_ltb: Option<f64>,
    pub t_access: f64,
    pub step_time: f64,
    pub k: u32,
    /// `None` means `node_time_u`.
    pub hash_time: Option<f64>,
    pub cam_mode: CamMode,
    pub endurance: f64,
    /// Offered searches per second; `None` means back-to-back searches.
    pub query_rate: Option<f64>,
    /// Writes per search on the most worn cell; `None` means measured.
    pub wear_per_search: Option<f64>,
    /// B+-tree levels searched node by node before the CAM-searched subtree.
    pub cam_subtree_root_depth: u32,
    /// B+-tree node utilization in the lower levels.
    pub btree_fill: f64,
    /// Hash-CAM buckets; `None` means one per 32-byte line of a 32 MB cache.
    pub hash_partitions: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            n_records: 1e9,
            t: 10.0,
            b: 80.0,
            level_u: 17,
            node_time_u: 16.0,
            node_time_lt_cmos: 60.0,
            node_time_lt_mem: None,
            node_time_ltb: None,
            t_access: 10.0,
            step_time: 2.0,
            k: 64,
            hash_time: None,
            cam_mode: CamMode::Tcam,
            endurance: 1e10,
            query_rate: None,
            wear_per_search: None,
            cam_subtree_root_depth: 1,
            btree_fill: 0.75,
            hash_partitions: None,
        }
    }
}

/// Cache bytes and bytes per hash entry behind the default Hash-CAM bucket count.
pub const CACHE_BYTES: f64 = 32e6;
pub const HASH_ENTRY_BYTES: f64 = 32.0;

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::Param(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("n_records", self.n_records)?;
        pos("t", self.t)?;
        pos("node_time_u", self.node_time_u)?;
        pos("node_time_lt_cmos", self.node_time_lt_cmos)?;
        pos("t_access", self.t_access)?;
        pos("step_time", self.step_time)?;
        pos("endurance", self.endurance)?;
        pos("btree_fill", self.btree_fill)?;
        if self.b < 3.0 || !self.b.is_finite() {
            return Err(ModelError::Param(format!("b must be at least 3, got {}", self.b)));
        }
        if self.btree_fill > 1.0 {
            return Err(ModelError::Param(format!("btree_fill must be at most 1, got {}", self.btree_fill)));
        }
        if self.level_u == 0 || self.level_u > 60 {
            return Err(ModelError::Param(format!("level_u must be in 1..=60, got {}", self.level_u)));
        }
        for (name, v) in [
            ("node_time_lt_mem", self.node_time_lt_mem),
            ("node_time_ltb", self.node_time_ltb),
            ("hash_time", self.hash_time),
            ("query_rate", self.query_rate),
            ("wear_per_search", self.wear_per_search),
            ("hash_partitions", self.hash_partitions),
        ] {
            if let Some(v) = v {
                pos(name, v)?;
            }
        }
        cam::check_key_bits(self.k).map_err(|_| ModelError::BadKeyBits(self.k))
    }

    fn upper_nodes(&self) -> f64 {
        2f64.powi(self.level_u as i32) - 1.0
    }

    fn gaps(&self) -> f64 {
        2f64.powi(self.level_u as i32)
    }

    /// Records below the upper T-tree levels.
    pub fn lower_records(&self) -> Result<f64, ModelError> {
        let need = self.upper_nodes() * self.t;
        if self.n_records < need {
            return Err(ModelError::UpperUnderfull { records: self.n_records, nodes: self.upper_nodes(), need });
        }
        Ok(self.n_records - need)
    }

    pub fn node_time_lt(&self, s: Structure) -> f64 {
        match s {
            Structure::CmosTTree => self.node_time_lt_cmos,
            _ => self.node_time_lt_mem.unwrap_or(self.t_access),
        }
    }

    pub fn node_time_ltb(&self) -> f64 {
        self.node_time_ltb
            .unwrap_or_else(|| 3.0 * self.t_access + cam_latency(64, CamMode::Cam).expect("64 is valid"))
    }

    pub fn hash_time(&self) -> f64 {
        self.hash_time.unwrap_or(self.node_time_u)
    }

    pub fn hash_partitions(&self) -> f64 {
        self.hash_partitions.unwrap_or(CACHE_BYTES / HASH_ENTRY_BYTES).round()
    }

    /// Measured unless overridden.
    pub fn wear_per_search(&self) -> f64 {
        self.wear_per_search.unwrap_or_else(|| measured_wear(self.cam_mode, self.k))
    }
}

type WearCache = Mutex<Vec<((CamMode, u32), f64)>>;

/// Max per-cell state transitions per search, from a seeded simulation.
pub fn measured_wear(mode: CamMode, k: u32) -> f64 {
    static CACHE: OnceLock<WearCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    if let Some(&(_, w)) = cache.lock().expect("poisoned").iter().find(|e| e.0 == (mode, k)) {
        return w;
    }
    let w = cam::measure_wear_per_search(mode, k, WearPolicy::CountTransitions, 256, 7).expect("valid key width");
    cache.lock().expect("poisoned").push(((mode, k), w));
    w
}

/// Record nodes: N_T for a T-tree, N_TB for a TB+-tree.
pub fn record_nodes(p: &ModelParams, kind: TreeKind) -> Result<f64, ModelError> {
    match kind {
        TreeKind::TTree => Ok(p.n_records / p.t),
        TreeKind::TbTree => Ok(p.upper_nodes() + p.lower_records()? / p.b),
    }
}

/// Level_LT or Level_LTB.
pub fn lower_levels(p: &ModelParams, kind: TreeKind) -> Result<u32, ModelError> {
    let l = match kind {
        // Levels of a complete tree of N_T nodes.
        TreeKind::TTree => (p.n_records / p.t + 1.0).log2().ceil() as i64 - p.level_u as i64,
        TreeKind::TbTree => {
            let per_tree = p.lower_records()? / p.gaps();
            if per_tree <= 1.0 {
                0
            } else {
                (per_tree.ln() / p.b.ln()).ceil() as i64
            }
        }
    };
    u32::try_from(l).map_err(|_| ModelError::NoLowerLevels(l))
}

/// Closed-form CAM search latency from key broadcast to result: 16 + 20 log2 K
/// (CAM) or 22 + 20 log2 K (TCAM).
pub fn cam_latency(k: u32, mode: CamMode) -> Result<f64, ModelError> {
    cam::check_key_bits(k).map_err(|_| ModelError::BadKeyBits(k))?;
    let base = match mode {
        CamMode::Cam => 16.0,
        CamMode::Tcam => 22.0,
    };
    Ok(base + 20.0 * (k as f64).log2())
}

/// fJ per stored bit per search.
pub fn cam_energy(k: u32, mode: CamMode) -> Result<f64, ModelError> {
    cam::check_key_bits(k).map_err(|_| ModelError::BadKeyBits(k))?;
    let base = match mode {
        CamMode::Cam => 0.44,
        CamMode::Tcam => 0.83,
    };
    Ok(base + 0.82 * (k as f64).log2())
}

/// One key write, the compare, and two reads (result and record address).
pub fn mem_cam_search_time(p: &ModelParams) -> Result<f64, ModelError> {
    Ok(3.0 * p.t_access + cam_latency(p.k, p.cam_mode)?)
}

fn avg_time_t(p: &ModelParams, node_time_lt: f64) -> Result<f64, ModelError> {
    let u = p.node_time_u;
    let l = p.level_u as f64;
    let two_l = p.gaps();
    let nt = record_nodes(p, TreeKind::TTree)?;
    let llt = lower_levels(p, TreeKind::TTree)? as f64;
    let last = 2f64.powf(l + llt - 1.0);
    let sum = u * ((l - 1.0) * two_l + 1.0)
        + u * l * (nt - two_l + 1.0)
        + node_time_lt * ((llt - 2.0) * last + two_l)
        + node_time_lt * llt * (nt - (last - 1.0));
    Ok(sum / nt)
}

fn avg_time_tb(p: &ModelParams) -> Result<f64, ModelError> {
    let u = p.node_time_u;
    let l = p.level_u as f64;
    let two_l = p.gaps();
    let ntb = record_nodes(p, TreeKind::TbTree)?;
    let lltb = lower_levels(p, TreeKind::TbTree)? as f64;
    let sum = u * ((l - 1.0) * two_l + 1.0) + u * l * (ntb - two_l + 1.0) + p.node_time_ltb() * lltb * (ntb - two_l + 1.0);
    Ok(sum / ntb)
}

/// Average record search time.
pub fn avg_search_time(p: &ModelParams, s: Structure) -> Result<f64, ModelError> {
    p.validate()?;
    let upper = p.node_time_u * p.level_u as f64;
    match s {
        Structure::CmosTTree | Structure::MemTTree => avg_time_t(p, p.node_time_lt(s)),
        Structure::TbTree => avg_time_tb(p),
        Structure::HashCam => Ok(p.hash_time() + mem_cam_search_time(p)?),
        Structure::TTreeCam => Ok(upper + mem_cam_search_time(p)?),
        Structure::TbTreeCam => {
            let lltb = lower_levels(p, TreeKind::TbTree)?;
            if p.cam_subtree_root_depth >= lltb {
                avg_time_tb(p)
            } else {
                Ok(upper + p.node_time_ltb() * p.cam_subtree_root_depth as f64 + mem_cam_search_time(p)?)
            }
        }
        Structure::MemCam => mem_cam_search_time(p),
    }
}

/// Share of all memristor rows that run a compare program in one search.
pub fn computed_fraction(p: &ModelParams, s: Structure) -> Result<f64, ModelError> {
    match s {
        Structure::CmosTTree | Structure::MemTTree => Ok(0.0),
        Structure::MemCam => Ok(1.0),
        Structure::HashCam => Ok(1.0 / p.hash_partitions()),
        Structure::TTreeCam => Ok(1.0 / p.gaps()),
        Structure::TbTree | Structure::TbTreeCam => {
            let lltb = lower_levels(p, TreeKind::TbTree)?;
            let per_node = p.b * p.btree_fill;
            let lower = p.lower_records()?;
            let total_rows = lower / per_node * p.b;
            let d = if s == Structure::TbTree { lltb } else { p.cam_subtree_root_depth.min(lltb) };
            let rows = if d >= lltb {
                lltb as f64 * per_node
            } else {
                d as f64 * per_node + lower / (p.gaps() * per_node.powi(d as i32))
            };
            Ok((rows / total_rows).min(1.0))
        }
    }
}

/// Years until the most worn cell reaches the endurance limit, assuming
/// searches are spread evenly over all partitions (directly or by rotation).
pub fn lifetime(p: &ModelParams, s: Structure) -> Result<f64, ModelError> {
    let t = avg_search_time(p, s)?;
    let frac = computed_fraction(p, s)?;
    if frac == 0.0 {
        return Ok(f64::INFINITY);
    }
    let period_s = (t * 1e-9).max(p.query_rate.map_or(0.0, |q| 1.0 / q));
    let writes_per_s = p.wear_per_search() * frac / period_s;
    Ok(p.endurance / writes_per_s / SECONDS_PER_YEAR)
}

/// Storage each structure gets in the reference system, in bytes.
pub fn default_budget(s: Structure) -> f64 {
    match s {
        Structure::CmosTTree => 128e9,
        Structure::MemTTree | Structure::TbTree | Structure::TbTreeCam => 8e12,
        Structure::HashCam | Structure::TTreeCam | Structure::MemCam => 1e12,
    }
}

/// Reference record counts for [`default_budget`].
pub fn reference_capacity(s: Structure) -> f64 {
    match s {
        Structure::CmosTTree => 5.4e9,
        Structure::MemTTree => 3.4e11,
        Structure::HashCam | Structure::TTreeCam | Structure::MemCam => 6.9e10,
        Structure::TbTree | Structure::TbTreeCam => 2.8e10,
    }
}

/// Bytes per record, back-derived from the reference capacities.
pub fn record_footprint(s: Structure) -> f64 {
    default_budget(s) / reference_capacity(s)
}

pub fn capacity_estimate(budget_bytes: f64, s: Structure) -> f64 {
    (budget_bytes / record_footprint(s)).max(0.0)
}

/// Parameters of the reference lifetime table for one structure and access
/// latency: each structure holds its full reference capacity.
pub fn reference_lifetime_params(s: Structure, t_access: f64) -> ModelParams {
    ModelParams { n_records: reference_capacity(s), t_access, ..ModelParams::default() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub n_records: Vec<f64>,
    pub t_access_ns: Vec<f64>,
    pub k_bits: Vec<u32>,
    pub structures: Vec<Structure>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            n_records: vec![1e9],
            t_access_ns: (1..=12).map(|i| i as f64 * 10.0).collect(),
            k_bits: vec![64],
            structures: Structure::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub structure: Structure,
    pub n_records: f64,
    pub t_access_ns: f64,
    pub k_bits: u32,
    pub avg_time_ns: f64,
    pub lifetime_years: f64,
}

pub const SWEEP_CSV_HEADER: &str = "structure,n_records,t_access_ns,k_bits,avg_time_ns,lifetime_years";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{},{},{:.4},{}",
            self.structure,
            self.n_records,
            self.t_access_ns,
            self.k_bits,
            self.avg_time_ns,
            if self.lifetime_years.is_finite() { format!("{:.6e}", self.lifetime_years) } else { "inf".into() }
        )
    }
}

/// Rows ordered by n_records, then t_access, then k, then structure order.
pub fn sweep(base: &ModelParams, grid: &SweepGrid) -> Result<Vec<SweepRow>, ModelError> {
    if grid.n_records.is_empty() || grid.t_access_ns.is_empty() || grid.k_bits.is_empty() || grid.structures.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    let mut rows = Vec::new();
    for &n in &grid.n_records {
        for &ta in &grid.t_access_ns {
            for &k in &grid.k_bits {
                let p = ModelParams { n_records: n, t_access: ta, k, ..base.clone() };
                for &s in &grid.structures {
                    rows.push(SweepRow {
                        structure: s,
                        n_records: n,
                        t_access_ns: ta,
                        k_bits: k,
                        avg_time_ns: avg_search_time(&p, s)?,
                        lifetime_years: lifetime(&p, s)?,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
