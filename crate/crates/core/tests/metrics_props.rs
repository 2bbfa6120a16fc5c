mod common;

use common::*;
use nirs_bci::metrics::{
    command_gate, mann_whitney_auc, region, roc_auc, roc_points, stratified_folds, tenfold, trapezoid_area, Region,
    DEFAULT_GATE,
};
use proptest::prelude::*;
use rand::Rng;

fn random_scores(rng: &mut rand_chacha::ChaCha8Rng, n: usize, levels: Option<u32>) -> (Vec<f64>, Vec<i8>) {
    let scores = (0..n)
        .map(|_| match levels {
            Some(l) => rng.random_range(0..l) as f64,
            None => rng.random_range(-1.0..1.0),
        })
        .collect();
    let mut labels: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    labels[0] = 1;
    labels[n - 1] = -1;
    (scores, labels)
}

#[test]
fn pair_count_equals_trapezoid_on_1000_sets() {
    let mut rng = rng(31);
    for case in 0..1000 {
        let n = rng.random_range(2..60);
        // Every third set draws from three levels only.
        let levels = (case % 3 == 0).then_some(3);
        let (s, y) = random_scores(&mut rng, n, levels);
        let mw = mann_whitney_auc(&s, &y).unwrap();
        let trap = trapezoid_area(&roc_points(&s, &y).unwrap());
        assert!((mw - trap).abs() <= 1e-12, "case {case}: {mw} vs {trap}");
        assert!((mw - pair_auc(&s, &y)).abs() <= 1e-12);
    }
}

#[test]
fn coin_flip_scores_give_chance_auc() {
    let mut rng = rng(8);
    let n = 4000;
    let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    let auc = mann_whitney_auc(&s, &y).unwrap();
    assert!((auc - 0.5).abs() < 0.05, "{auc}");
}

#[test]
fn region_boundaries() {
    assert_eq!(region(0.9499).unwrap(), Region::Best);
    assert_eq!(region(0.80).unwrap(), Region::Accept);
    assert_eq!(region(0.8000001).unwrap(), Region::Best);
    assert_eq!(region(0.70).unwrap(), Region::Worst);
    assert_eq!(region(0.6866).unwrap(), Region::Worst);
    assert_eq!(region(0.60).unwrap(), Region::Fail);
    assert_eq!(region(0.0).unwrap(), Region::Fail);
    assert!(region(1.01).is_err());
}

#[test]
fn gate_is_strict_at_seventy() {
    assert_eq!(DEFAULT_GATE, 0.70);
    assert!(!command_gate(0.70));
    assert!(command_gate(0.7000001));
    assert!(!command_gate(0.6866));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn auc_in_unit_interval_and_complement(seed in any::<u64>(), n in 2usize..80) {
        let (s, y) = random_scores(&mut rng(seed), n, Some(5));
        let a = mann_whitney_auc(&s, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let flipped: Vec<i8> = y.iter().map(|v| -v).collect();
        prop_assert!((a + mann_whitney_auc(&s, &flipped).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((a + mann_whitney_auc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_transform_keeps_auc(seed in any::<u64>(), n in 2usize..80) {
        let (s, y) = random_scores(&mut rng(seed), n, None);
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + 2.0).collect();
        prop_assert_eq!(mann_whitney_auc(&s, &y).unwrap(), mann_whitney_auc(&t, &y).unwrap());
    }

    #[test]
    fn regions_partition_unit_interval(a in 0.0f64..=1.0) {
        let r = region(a).unwrap();
        let want = if a > 0.8 { Region::Best } else if a > 0.7 { Region::Accept } else if a > 0.6 { Region::Worst } else { Region::Fail };
        prop_assert_eq!(r, want);
        prop_assert_eq!(roc_auc(&[a, 0.5], &[1, -1]).unwrap().region, region(roc_auc(&[a, 0.5], &[1, -1]).unwrap().auc).unwrap());
    }

    #[test]
    fn folds_partition_indices(m in 10usize..200, p in 2usize..=10, seed in any::<u64>()) {
        let plan = tenfold(m, p, seed).unwrap();
        let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(plan, tenfold(m, p, seed).unwrap());
    }

    #[test]
    fn stratified_folds_balance_classes(m in 20usize..200, p in 2usize..=10, seed in any::<u64>()) {
        let labels: Vec<i8> = (0..m).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let plan = stratified_folds(&labels, p, seed).unwrap();
        let pos: Vec<usize> = plan.folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == 1).count()).collect();
        prop_assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
    }
}
