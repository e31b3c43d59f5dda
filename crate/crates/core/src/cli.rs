//! Command-line front end: `verify`, `bench`, `sweep`, `trace`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cam::{cam_col, tcam_col};
use crate::crossbar::{CrossbarArray, StepProgram};
use crate::index::{HybridIndex, HybridIndexConfig, IndexError};
use crate::model::{self, ModelParams, SweepGrid};
use crate::verify::{self, Mutation, ProgramName, ProgramSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "memcam", version, about = "Memristor CAM/TCAM simulator and hybrid index benchmarks")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every randomized input.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set index.kind=tb-tree`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Truth-table, combination-law and step-count checks.
    Verify {
        /// Corrupt a program first, e.g. `tcam-compare:drop=4`.
        #[arg(long)]
        mutate: Option<String>,
    },
    /// Build an index over random keys, replay a random trace, emit CSV.
    Bench,
    /// Evaluate the analytic model over a grid, emit CSV.
    Sweep,
    /// Step trace of one microcode program on an exemplar input.
    Trace {
        /// tcam-compare, cam-compare or combine-round
        program: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_keys: usize,
    pub ops: usize,
    /// Relative weights of the operation mix.
    pub insert: u32,
    pub delete: u32,
    pub point: u32,
    pub range: u32,
    /// Range queries span `[lo, lo + range_width]`.
    pub range_width: u64,
    /// Searches per second used for the lifetime projection.
    pub query_rate: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_keys: 10_000, ops: 10_000, insert: 1, delete: 1, point: 4, range: 1, range_width: 1 << 20, query_rate: 1e6 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub index: HybridIndexConfig,
    pub model: ModelParams,
    pub grid: SweepGrid,
    pub bench: BenchConfig,
}

/// Usage or configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

/// Load the config file (if any), apply `--set` overrides and `--seed`.
pub fn load_config(path: Option<&PathBuf>, overrides: &[String], seed: Option<u64>) -> Result<Config, UsageError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
            text.parse::<toml::Table>().map_err(|e| UsageError(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got `{o}`")))?;
        let value = parse_value(raw.trim());
        set_path(&mut table, key.trim(), value).map_err(UsageError)?;
    }
    let mut cfg: Config = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| UsageError(format!("config: {}", e.message())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Parse an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| format!("empty key in `{key}`"))?;
    let mut at = table;
    for p in parts {
        let entry = at.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        at = entry.as_table_mut().ok_or_else(|| format!("`{p}` in `{key}` is not a table"))?;
    }
    at.insert(last.to_string(), value);
    Ok(())
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok((text, code)) => match emit(cli.out.as_ref(), &text) {
            Ok(()) => code,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        Err(UsageError(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Output text and exit code of one command.
pub fn run(cli: &Cli) -> Result<(String, i32), UsageError> {
    let cfg = load_config(cli.config.as_ref(), &cli.overrides, cli.seed)?;
    match &cli.command {
        Command::Verify { mutate } => {
            let mut set = ProgramSet::default();
            if let Some(m) = mutate {
                let m: Mutation = m.parse().map_err(UsageError)?;
                m.apply(&mut set).map_err(UsageError)?;
            }
            let results = verify::run_checks(&set, cfg.seed);
            let code = if results.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_CHECK_FAILED };
            Ok((verify::report(&results), code))
        }
        Command::Bench => {
            let r = bench(&cfg)?;
            let code = if r.oracle_match { EXIT_OK } else { EXIT_CHECK_FAILED };
            Ok((format!("{}\n{}\n", BenchResult::CSV_HEADER, r.csv_row()), code))
        }
        Command::Sweep => {
            let rows = model::sweep(&cfg.model, &cfg.grid).map_err(|e| UsageError(e.to_string()))?;
            Ok((model::sweep_csv(&rows), EXIT_OK))
        }
        Command::Trace { program } => {
            let p: ProgramName = program.parse().map_err(UsageError)?;
            Ok((trace(p), EXIT_OK))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub structure: String,
    pub seed: u64,
    pub n_keys: usize,
    pub ops: usize,
    pub inserts: usize,
    pub deletes: usize,
    pub point_queries: usize,
    pub range_queries: usize,
    pub sim_elapsed_ns: f64,
    pub avg_point_ns: f64,
    pub avg_range_ns: f64,
    pub energy_fj: f64,
    pub max_point_partitions: usize,
    pub max_range_partitions: usize,
    pub max_cell_writes: u64,
    pub projected_lifetime_s: f64,
    pub partitions: usize,
    pub oracle_match: bool,
    /// First divergence from the reference map, if any.
    pub mismatch: Option<String>,
}

impl BenchResult {
    pub const CSV_HEADER: &'static str = "structure,seed,n_keys,ops,inserts,deletes,point_queries,range_queries,sim_elapsed_ns,avg_point_ns,avg_range_ns,energy_fj,max_point_partitions,max_range_partitions,max_cell_writes,projected_lifetime_s,partitions,oracle_match";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{},{},{},{:.6e},{},{}",
            self.structure,
            self.seed,
            self.n_keys,
            self.ops,
            self.inserts,
            self.deletes,
            self.point_queries,
            self.range_queries,
            self.sim_elapsed_ns,
            self.avg_point_ns,
            self.avg_range_ns,
            self.energy_fj,
            self.max_point_partitions,
            self.max_range_partitions,
            self.max_cell_writes,
            self.projected_lifetime_s,
            self.partitions,
            self.oracle_match
        )
    }
}

fn key_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Replay a seeded mixed trace against the index and a reference map.
pub fn bench(cfg: &Config) -> Result<BenchResult, UsageError> {
    let b = &cfg.bench;
    let weights = [b.insert, b.delete, b.point, b.range];
    let total: u32 = weights.iter().sum();
    if total == 0 {
        return Err(UsageError("bench: operation weights are all zero".into()));
    }
    let mask = key_mask(cfg.index.key_bits);
    if (b.n_keys as u128) > (mask as u128 + 1).div_ceil(2) {
        return Err(UsageError(format!("bench: {} keys do not fit in {} bits", b.n_keys, cfg.index.key_bits)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model: BTreeMap<u64, u64> = BTreeMap::new();
    while model.len() < b.n_keys {
        let k = rng.gen::<u64>() & mask;
        model.insert(k, rng.gen());
    }
    let recs: Vec<(u64, u64)> = model.iter().map(|(k, v)| (*k, *v)).collect();
    let mut ix = HybridIndex::build(cfg.index.clone(), &recs).map_err(|e| UsageError(format!("index: {e}")))?;
    let mut res = BenchResult {
        structure: cfg.index.kind.to_string(),
        seed: cfg.seed,
        n_keys: b.n_keys,
        ops: b.ops,
        inserts: 0,
        deletes: 0,
        point_queries: 0,
        range_queries: 0,
        sim_elapsed_ns: 0.0,
        avg_point_ns: 0.0,
        avg_range_ns: 0.0,
        energy_fj: 0.0,
        max_point_partitions: 0,
        max_range_partitions: 0,
        max_cell_writes: 0,
        projected_lifetime_s: f64::INFINITY,
        partitions: 0,
        oracle_match: true,
        mismatch: None,
    };
    let (mut point_ns, mut range_ns) = (0.0, 0.0);
    let existing = |model: &BTreeMap<u64, u64>, rng: &mut ChaCha8Rng| -> u64 {
        let probe = rng.gen::<u64>() & mask;
        model.range(probe..).next().or_else(|| model.iter().next()).map_or(probe, |e| *e.0)
    };
    for i in 0..b.ops {
        let mut pick = rng.gen_range(0..total);
        let mut kind = 0;
        while pick >= weights[kind] {
            pick -= weights[kind];
            kind += 1;
        }
        let agree = match kind {
            0 => {
                res.inserts += 1;
                let k = rng.gen::<u64>() & mask;
                let v = rng.gen::<u64>();
                let got = ix.insert(k, v);
                let want = if model.contains_key(&k) { Err(IndexError::Duplicate(k)) } else { Ok(()) };
                if want.is_ok() {
                    model.insert(k, v);
                }
                (got == want).then_some(()).ok_or_else(|| format!("op {i}: insert {k}: {got:?}, expected {want:?}"))
            }
            1 => {
                res.deletes += 1;
                let k = if rng.gen_bool(0.8) { existing(&model, &mut rng) } else { rng.gen::<u64>() & mask };
                let got = ix.delete(k);
                let want = model.remove(&k).ok_or(IndexError::Missing(k));
                (got == want).then_some(()).ok_or_else(|| format!("op {i}: delete {k}: {got:?}, expected {want:?}"))
            }
            2 => {
                res.point_queries += 1;
                let k = if rng.gen_bool(0.5) { existing(&model, &mut rng) } else { rng.gen::<u64>() & mask };
                let got = ix.point_query(k);
                point_ns += ix.last_stats().elapsed_ns;
                res.max_point_partitions = res.max_point_partitions.max(ix.last_touched().len());
                let want = Ok(model.get(&k).copied());
                (got == want).then_some(()).ok_or_else(|| format!("op {i}: point {k}: {got:?}, expected {want:?}"))
            }
            _ => {
                res.range_queries += 1;
                let lo = rng.gen::<u64>() & mask;
                let hi = lo.saturating_add(b.range_width).min(mask);
                let got = ix.range_query(lo, hi);
                range_ns += ix.last_stats().elapsed_ns;
                res.max_range_partitions = res.max_range_partitions.max(ix.last_touched().len());
                let want: Vec<(u64, u64)> = model.range(lo..=hi).map(|(k, v)| (*k, *v)).collect();
                match got {
                    Ok(g) if g == want => Ok(()),
                    other => Err(format!("op {i}: range [{lo}, {hi}]: {} records, expected {}", other.map_or(0, |g| g.len()), want.len())),
                }
            }
        };
        if let Err(m) = agree {
            res.oracle_match = false;
            res.mismatch.get_or_insert(m);
        }
    }
    if ix.len() != model.len() {
        res.oracle_match = false;
        res.mismatch.get_or_insert(format!("index holds {} records, expected {}", ix.len(), model.len()));
    }
    let wear = ix.wear_report(b.query_rate);
    let st = ix.stats();
    res.sim_elapsed_ns = st.elapsed_ns;
    res.energy_fj = st.energy_fj;
    res.avg_point_ns = if res.point_queries > 0 { point_ns / res.point_queries as f64 } else { 0.0 };
    res.avg_range_ns = if res.range_queries > 0 { range_ns / res.range_queries as f64 } else { 0.0 };
    res.max_cell_writes = wear.max_write_count;
    res.projected_lifetime_s = wear.projected_lifetime_s;
    res.partitions = ix.partition_count();
    Ok(res)
}

/// Program, column names and exemplar row for a trace.
fn trace_setup(p: ProgramName) -> (StepProgram, Vec<String>, Vec<bool>) {
    let set = ProgramSet::default();
    match p {
        ProgramName::TcamCompare => {
            use tcam_col::*;
            let mut row = vec![false; WIDTH];
            row[K] = true; // stored 0 against key 1: less
            (set.tcam_compare, NAMES.iter().map(|s| s.to_string()).collect(), row)
        }
        ProgramName::CamCompare => {
            use cam_col::*;
            let mut row = vec![false; WIDTH];
            row[D] = true; // stored 1 against key 0: differs
            (set.cam_compare, NAMES.iter().map(|s| s.to_string()).collect(), row)
        }
        ProgramName::CombineRound => {
            use tcam_col::*;
            let names = ["lo", "hi"]
                .iter()
                .flat_map(|cell| NAMES.iter().map(move |n| format!("{cell}.{n}")))
                .collect();
            let mut row = vec![false; 2 * WIDTH];
            row[M3] = true; // hi cell equal, lo cell less: merged less
            (set.tcam_combine, names, row)
        }
    }
}

/// Trace lines interleaved with the exemplar row's state after each step.
pub fn trace(p: ProgramName) -> String {
    let (program, names, row) = trace_setup(p);
    let mut a = CrossbarArray::from_fn(1, row.len(), |_, c| row[c]);
    let state = |a: &CrossbarArray| {
        names.iter().enumerate().map(|(c, n)| format!("{n}={}", a.peek(0, c) as u8)).collect::<Vec<_>>().join(" ")
    };
    let mut out = String::new();
    let _ = writeln!(out, "# program={p} mode={}", if p == ProgramName::CamCompare { "cam" } else { "tcam" });
    let _ = writeln!(out, "# state step=0 {}", state(&a));
    for (i, step) in program.steps().iter().enumerate() {
        for line in step.trace_lines(i + 1, &(0..1), 0) {
            let _ = writeln!(out, "{line}");
        }
        a.execute_step(step).expect("exemplar fits");
        let _ = writeln!(out, "# state step={} {}", i + 1, state(&a));
    }
    out
}
