use memcam::cam::CamMode;
use memcam::model::*;
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn record_nodes_examples() {
    let p = ModelParams { n_records: 1e9, ..ModelParams::default() };
    assert_eq!(record_nodes(&p, TreeKind::TTree), Ok(1e8));
    let p = ModelParams { n_records: 830.0, t: 10.0, b: 80.0, level_u: 2, ..ModelParams::default() };
    assert_eq!(record_nodes(&p, TreeKind::TbTree), Ok(13.0));
    let p = ModelParams { n_records: 30.0, level_u: 2, ..ModelParams::default() };
    assert_eq!(record_nodes(&p, TreeKind::TbTree), Ok(3.0));
    let p = ModelParams { n_records: 29.0, level_u: 2, ..ModelParams::default() };
    assert!(matches!(record_nodes(&p, TreeKind::TbTree), Err(ModelError::UpperUnderfull { .. })));
}

#[test]
fn lower_level_examples() {
    let p = ModelParams::default();
    assert_eq!(lower_levels(&p, TreeKind::TTree), Ok(10));
    assert_eq!(lower_levels(&p, TreeKind::TbTree), Ok(3));
    let single = ModelParams { n_records: 10.0, level_u: 1, ..ModelParams::default() };
    assert_eq!(lower_levels(&single, TreeKind::TTree), Ok(0));
    let tiny = ModelParams { n_records: 10.0, level_u: 3, ..ModelParams::default() };
    assert_eq!(lower_levels(&tiny, TreeKind::TTree), Err(ModelError::NoLowerLevels(-2)));
}

#[test]
fn closed_form_latency_and_energy() {
    assert_eq!(cam_latency(64, CamMode::Tcam), Ok(142.0));
    assert_eq!(cam_latency(64, CamMode::Cam), Ok(136.0));
    assert_eq!(cam_latency(2, CamMode::Tcam), Ok(42.0));
    assert!(close(cam_energy(64, CamMode::Cam).unwrap(), 5.36, 1e-12));
    assert!(close(cam_energy(64, CamMode::Tcam).unwrap(), 5.75, 1e-12));
    assert_eq!(cam_latency(48, CamMode::Cam), Err(ModelError::BadKeyBits(48)));
    assert_eq!(cam_energy(1, CamMode::Cam), Err(ModelError::BadKeyBits(1)));
}

#[test]
fn ttree_cam_substitution() {
    // 16 * 17 + 142, with the CAM search time pinned at 142.
    let p = ModelParams::default();
    let t = avg_search_time(&p, Structure::TTreeCam).unwrap();
    let cam = mem_cam_search_time(&p).unwrap();
    assert_eq!(t - cam + 142.0, 414.0);
    assert_eq!(cam, 3.0 * 10.0 + 142.0);
}

#[test]
fn root_only_tree_costs_one_upper_node() {
    let p = ModelParams { n_records: 10.0, level_u: 1, ..ModelParams::default() };
    assert_eq!(avg_search_time(&p, Structure::CmosTTree), Ok(16.0));
    assert_eq!(avg_search_time(&p, Structure::MemTTree), Ok(16.0));
}

/// Direct sum over record nodes of a T-tree with full upper levels, the
/// lower levels filled level by level.
fn ttree_oracle(p: &ModelParams, lt: f64) -> f64 {
    let nt = p.n_records / p.t;
    let mut left = nt;
    let mut total = 0.0;
    let mut level = 1u32;
    while left > 0.0 {
        let width = 2f64.powi(level as i32 - 1);
        let here = width.min(left);
        let cost = if level <= p.level_u {
            level as f64 * p.node_time_u
        } else {
            p.level_u as f64 * p.node_time_u + (level - p.level_u) as f64 * lt
        };
        total += here * cost;
        left -= here;
        level += 1;
    }
    total / nt
}

#[test]
fn ttree_average_matches_direct_sum_when_levels_are_full() {
    // The closed form charges the deepest level for every node that did not
    // fit above it, which is exact when all levels but the last are full.
    for (n, lu) in [(10.0 * 1023.0, 4), (10.0 * 800.0, 5), (10.0 * 4095.0, 7)] {
        let p = ModelParams { n_records: n, level_u: lu, ..ModelParams::default() };
        let got = avg_search_time(&p, Structure::CmosTTree).unwrap();
        assert!(close(got, ttree_oracle(&p, 60.0), 1e-9), "{n} {lu}: {got}");
    }
}

#[test]
fn tbc_depth_extremes() {
    let p = ModelParams { cam_subtree_root_depth: 0, ..ModelParams::default() };
    assert_eq!(avg_search_time(&p, Structure::TbTreeCam), avg_search_time(&p, Structure::TTreeCam));
    let p = ModelParams { cam_subtree_root_depth: 3, ..ModelParams::default() };
    assert_eq!(avg_search_time(&p, Structure::TbTreeCam), avg_search_time(&p, Structure::TbTree));
    let p = ModelParams { cam_subtree_root_depth: 9, ..ModelParams::default() };
    assert_eq!(avg_search_time(&p, Structure::TbTreeCam), avg_search_time(&p, Structure::TbTree));
}

#[test]
fn memcam_lifetime_with_unit_wear() {
    let p = ModelParams { wear_per_search: Some(1.0), ..ModelParams::default() };
    let years = lifetime(&p, Structure::MemCam).unwrap();
    let want = 1e10 * (3.0 * 10.0 + 142.0) * 1e-9 / (365.25 * 86400.0);
    assert!(close(years, want, 1e-12));
    let minutes = years * 365.25 * 86400.0 / 60.0;
    assert!((23.7..30.0).contains(&minutes), "{minutes}");
}

#[test]
fn hash_partitions_scale_lifetime() {
    let base = ModelParams { wear_per_search: Some(20.0), ..ModelParams::default() };
    let mut prev = None;
    for p in [2.0, 4.0, 8.0, 16.0] {
        let l = lifetime(&ModelParams { hash_partitions: Some(p), ..base.clone() }, Structure::HashCam).unwrap();
        if let Some(q) = prev {
            assert!(close(l / q, 2.0, 0.1));
        }
        prev = Some(l);
    }
}

#[test]
fn reference_lifetime_ordering() {
    for ta in [10.0, 60.0, 120.0] {
        let l: Vec<f64> = [Structure::TTreeCam, Structure::HashCam, Structure::TbTreeCam, Structure::TbTree]
            .iter()
            .map(|&s| lifetime(&reference_lifetime_params(s, ta), s).unwrap())
            .collect();
        assert!(l.windows(2).all(|w| w[0] < w[1]), "{ta}: {l:?}");
        assert!(l[2] > 60.0 && l[3] > 60.0);
    }
}

#[test]
fn memory_ttrees_never_wear() {
    let p = ModelParams::default();
    assert_eq!(lifetime(&p, Structure::CmosTTree), Ok(f64::INFINITY));
    assert_eq!(lifetime(&p, Structure::MemTTree), Ok(f64::INFINITY));
}

#[test]
fn capacity_examples() {
    assert!(close(capacity_estimate(128e9, Structure::CmosTTree), 5.4e9, 1e-12));
    assert!(close(record_footprint(Structure::CmosTTree), 23.7, 0.01));
    assert!(close(capacity_estimate(8e12, Structure::MemTTree), 3.4e11, 1e-12));
    assert_eq!(capacity_estimate(0.0, Structure::TbTree), 0.0);
}

#[test]
fn sweep_shape_and_order() {
    let grid = SweepGrid { n_records: vec![1e9], t_access_ns: vec![10.0], k_bits: vec![64], structures: vec![Structure::HashCam] };
    let rows = sweep(&ModelParams::default(), &grid).unwrap();
    assert_eq!(rows.len(), 1);
    let csv = sweep_csv(&rows);
    assert_eq!(csv.lines().next(), Some(SWEEP_CSV_HEADER));
    assert_eq!(csv.lines().count(), 2);
    let full = sweep(&ModelParams::default(), &SweepGrid::default()).unwrap();
    assert_eq!(full.len(), 12 * Structure::ALL.len());
    assert_eq!(sweep_csv(&full), sweep_csv(&sweep(&ModelParams::default(), &SweepGrid::default()).unwrap()));
    let empty = SweepGrid { t_access_ns: vec![], ..SweepGrid::default() };
    assert_eq!(sweep(&ModelParams::default(), &empty), Err(ModelError::EmptyGrid));
}

#[test]
fn cam_backed_curves_flat_and_crossover() {
    let at = |n: f64, s| avg_search_time(&ModelParams { n_records: n, ..ModelParams::default() }, s).unwrap();
    for s in [Structure::HashCam, Structure::TTreeCam, Structure::TbTreeCam] {
        assert_eq!(at(1e9, s), at(1e20, s));
    }
    assert!(at(1e14, Structure::TbTreeCam) > at(1e14, Structure::MemTTree));
    assert!(at(1e18, Structure::TbTreeCam) < at(1e18, Structure::MemTTree));
}

proptest! {
    #[test]
    fn monotone_in_node_times(u in 1.0f64..100.0, lt in 1.0f64..500.0, ltb in 1.0f64..500.0, du in 0.0f64..50.0) {
        let p = ModelParams { node_time_u: u, node_time_lt_mem: Some(lt), node_time_ltb: Some(ltb), ..ModelParams::default() };
        let q = ModelParams { node_time_u: u + du, node_time_lt_mem: Some(lt + du), node_time_ltb: Some(ltb + du), ..p.clone() };
        for s in Structure::ALL {
            prop_assert!(avg_search_time(&q, s).unwrap() >= avg_search_time(&p, s).unwrap());
        }
    }

    #[test]
    fn lifetime_homogeneous(e in 1e8f64..1e12, q in 1e3f64..1e5) {
        let p = ModelParams { endurance: e, query_rate: Some(q), wear_per_search: Some(23.0), ..ModelParams::default() };
        for s in Structure::HYBRID {
            let l = lifetime(&p, s).unwrap();
            let l2 = lifetime(&ModelParams { endurance: 2.0 * e, ..p.clone() }, s).unwrap();
            let lq = lifetime(&ModelParams { query_rate: Some(q / 2.0), ..p.clone() }, s).unwrap();
            prop_assert!(close(l2, 2.0 * l, 1e-12));
            prop_assert!(close(lq, 2.0 * l, 1e-12));
        }
    }
}
