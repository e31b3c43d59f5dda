use std::collections::BTreeMap;

use memcam::index::{HashKind, HybridIndex, HybridIndexConfig, IndexError, IndexKind};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(kind: IndexKind) -> HybridIndexConfig {
    HybridIndexConfig {
        level_u: 2,
        t: 3,
        b: 5,
        key_bits: 16,
        partition_capacity: Some(8),
        partitions: (kind == IndexKind::HashCam).then_some(4),
        ..HybridIndexConfig::new(kind)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Insert(u64),
    Delete(u64),
    Get(u64),
    Range(u64, u64),
}

fn op() -> impl Strategy<Value = Op> {
    let k = 0u64..400;
    prop_oneof![
        3 => k.clone().prop_map(Op::Insert),
        2 => k.clone().prop_map(Op::Delete),
        2 => k.clone().prop_map(Op::Get),
        1 => (k.clone(), 0u64..60).prop_map(|(a, w)| Op::Range(a, a + w)),
    ]
}

fn run_trace(cfg: HybridIndexConfig, init: Vec<u64>, ops: Vec<Op>) -> Result<(), TestCaseError> {
    let mut init = init;
    init.sort_unstable();
    init.dedup();
    let recs: Vec<(u64, u64)> = init.iter().map(|&k| (k, k * 7 + 1)).collect();
    let mut model: BTreeMap<u64, u64> = recs.iter().copied().collect();
    let mut ix = HybridIndex::build(cfg, &recs).unwrap();
    prop_assert_eq!(ix.check_invariants(), Ok(()));
    for op in ops {
        match op {
            Op::Insert(k) => {
                let r = ix.insert(k, k * 7 + 1);
                if model.insert(k, k * 7 + 1).is_some() {
                    prop_assert_eq!(r, Err(IndexError::Duplicate(k)));
                } else {
                    prop_assert_eq!(r, Ok(()));
                }
            }
            Op::Delete(k) => {
                let r = ix.delete(k);
                match model.remove(&k) {
                    Some(v) => prop_assert_eq!(r, Ok(v)),
                    None => prop_assert_eq!(r, Err(IndexError::Missing(k))),
                }
            }
            Op::Get(k) => {
                prop_assert_eq!(ix.point_query(k).unwrap(), model.get(&k).copied());
                prop_assert!(ix.last_touched().len() <= 1);
            }
            Op::Range(a, b) => {
                let want: Vec<(u64, u64)> = model.range(a..=b).map(|(k, v)| (*k, *v)).collect();
                prop_assert_eq!(ix.range_query(a, b).unwrap(), want);
            }
        }
        prop_assert_eq!(ix.len(), model.len());
        prop_assert_eq!(ix.check_invariants(), Ok(()));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ttree_cam_matches_ordered_map(init in prop::collection::vec(0u64..400, 0..80), ops in prop::collection::vec(op(), 1..80)) {
        run_trace(small(IndexKind::TTreeCam), init, ops)?;
    }

    #[test]
    fn tb_tree_matches_ordered_map(init in prop::collection::vec(0u64..400, 0..80), ops in prop::collection::vec(op(), 1..80)) {
        run_trace(small(IndexKind::TbTree), init, ops)?;
    }

    #[test]
    fn tb_tree_cam_matches_ordered_map(init in prop::collection::vec(0u64..400, 0..80), ops in prop::collection::vec(op(), 1..80)) {
        run_trace(small(IndexKind::TbTreeCam), init, ops)?;
    }

    #[test]
    fn hash_cam_matches_ordered_map(init in prop::collection::vec(0u64..400, 0..80), ops in prop::collection::vec(op(), 1..80)) {
        run_trace(small(IndexKind::HashCam), init, ops)?;
    }
}

#[test]
fn range_touches_at_most_two_bound_partitions() {
    let recs: Vec<(u64, u64)> = (0..600u64).map(|k| (k * 3, k)).collect();
    for kind in [IndexKind::TTreeCam, IndexKind::TbTree, IndexKind::TbTreeCam] {
        let mut ix = HybridIndex::build(small(kind), &recs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = rng.gen_range(0..1800);
            ix.range_query(a, a + 20).unwrap();
            assert!(ix.last_touched().len() <= 2, "{kind}: {:?}", ix.last_touched());
        }
    }
}

#[test]
fn uniform_hash_rejects_ranges() {
    let cfg = HybridIndexConfig { hash: HashKind::Uniform, ..small(IndexKind::HashCam) };
    let mut ix = HybridIndex::build(cfg, &[(5, 1), (9, 2)]).unwrap();
    assert_eq!(ix.point_query(9).unwrap(), Some(2));
    assert_eq!(ix.range_query(0, 10), Err(IndexError::RangeUnsupported));
}

#[test]
fn build_shapes() {
    let one = HybridIndex::build(small(IndexKind::TTreeCam), &[(1, 1)]).unwrap();
    assert_eq!(one.partition_count(), 1);
    let recs: Vec<(u64, u64)> = (0..200u64).map(|k| (k, k)).collect();
    let ix = HybridIndex::build(small(IndexKind::TTreeCam), &recs).unwrap();
    assert_eq!(ix.partition_count(), 4);
    assert_eq!(ix.upper_records(), 9);
    assert_eq!(ix.partition_sizes().iter().sum::<usize>(), 191);
}

#[test]
fn rotation_moves_data_and_keeps_contents() {
    let mut recs: Vec<(u64, u64)> = (0..300u64).map(|k| (k * 11 % 997, k)).collect();
    recs.sort_unstable();
    recs.dedup_by_key(|r| r.0);
    for kind in IndexKind::ALL {
        let mut ix = HybridIndex::build(small(kind), &recs).unwrap();
        let before = ix.mapping();
        ix.rotate_partitions().unwrap();
        let after = ix.mapping();
        let mut rotated = before.clone();
        rotated.rotate_left(1);
        assert_eq!(after, rotated, "{kind}");
        ix.check_invariants().unwrap();
        let mut keys: Vec<u64> = recs.iter().map(|r| r.0).collect();
        keys.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        for k in keys.into_iter().take(40) {
            assert!(ix.point_query(k).unwrap().is_some(), "{kind}: {k}");
        }
    }
}

#[test]
fn wear_report_csv() {
    let recs: Vec<(u64, u64)> = (0..100u64).map(|k| (k, k)).collect();
    let mut ix = HybridIndex::build(small(IndexKind::TTreeCam), &recs).unwrap();
    for k in 0..50 {
        ix.point_query(k).unwrap();
    }
    let w = ix.wear_report(1e6);
    assert_eq!(w.searches, 50);
    assert_eq!(w.partitions.len(), 4);
    let csv = w.to_csv();
    assert!(csv.starts_with("partition,writes_total,max_cell_writes,projected_lifetime_s\n"));
    assert_eq!(csv.lines().count(), 5);
    assert!(w.projected_lifetime_s.is_finite() && w.projected_lifetime_s > 0.0);
}

#[test]
fn config_validation() {
    let bad = HybridIndexConfig { partitions: Some(3), ..small(IndexKind::HashCam) };
    assert!(matches!(HybridIndex::build(bad, &[]), Err(IndexError::Config(_))));
    let bad = HybridIndexConfig { partitions: Some(8), ..small(IndexKind::TTreeCam) };
    assert!(matches!(HybridIndex::build(bad, &[]), Err(IndexError::Config(_))));
    assert!(matches!(
        HybridIndex::build(small(IndexKind::TbTree), &[(1, 0), (1, 2)]),
        Err(IndexError::Duplicate(1))
    ));
    assert_eq!("tb-tree-cam".parse::<IndexKind>(), Ok(IndexKind::TbTreeCam));
    assert!("btree".parse::<IndexKind>().is_err());
}
