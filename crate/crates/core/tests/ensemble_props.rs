mod common;

use common::*;
use nirs_bci::dataio::Condition;
use nirs_bci::ensemble::{
    evaluate_ensemble, majority_rule, train_ensemble, vote, Decision, Ensemble, EnsembleConfig, Group,
};
use nirs_bci::metrics::stratified_folds;
use nirs_bci::svm::{train_svm, LabeledSet, SvmModel};
use proptest::prelude::*;
use rand::Rng;

fn decision_of(pattern: u32, n: usize, k: usize) -> Decision {
    majority_rule(pattern.count_ones() as usize, n, k).unwrap()
}

#[test]
fn truth_table_for_six_members_at_k4() {
    for pattern in 0u32..64 {
        let p = pattern.count_ones();
        let want = match p {
            4..=6 => Decision::Positive,
            3 => Decision::Unknown,
            _ => Decision::Negative,
        };
        assert_eq!(decision_of(pattern, 6, 4), want, "pattern {pattern:06b}");
    }
}

#[test]
fn decisions_are_monotone_in_k() {
    for pattern in 0u32..64 {
        for k in 3..6 {
            let (lo, hi) = (decision_of(pattern, 6, k), decision_of(pattern, 6, k + 1));
            if hi == Decision::Positive {
                assert_eq!(lo, Decision::Positive);
            }
            if hi == Decision::Negative {
                assert_eq!(lo, Decision::Negative);
            }
        }
    }
}

#[test]
fn unanimity_and_symmetry() {
    for k in 3..=6 {
        assert_eq!(majority_rule(6, 6, k).unwrap(), Decision::Positive);
        assert_eq!(majority_rule(0, 6, k).unwrap(), Decision::Negative);
        for p in 0..=6 {
            let flipped = majority_rule(6 - p, 6, k).unwrap();
            let want = match majority_rule(p, 6, k).unwrap() {
                Decision::Positive if 2 * k == 6 && p == 3 => Decision::Positive,
                Decision::Positive => Decision::Negative,
                Decision::Negative => Decision::Positive,
                Decision::Unknown => Decision::Unknown,
            };
            assert_eq!(flipped, want, "p {p}, k {k}");
        }
    }
}

fn gaussian_set(seed: u64, n: usize, shift: f64) -> LabeledSet {
    let mut r = rng(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label = if i % 2 == 0 { 1i8 } else { -1 };
        let mut v: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        v[0] += shift * label as f64;
        x.push(v);
        y.push(label);
    }
    LabeledSet::new(x, y).unwrap()
}

#[test]
fn random_labels_give_chance_auc() {
    let train = gaussian_set(1, 200, 0.0);
    let e = train_ensemble(&train, Group::E1, &EnsembleConfig::default()).unwrap();
    let mut aucs = Vec::new();
    for seed in 100..120 {
        aucs.push(evaluate_ensemble(&e, &gaussian_set(seed, 400, 0.0)).unwrap().roc.auc);
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((mean - 0.5).abs() < 0.05, "mean AUC {mean}");
}

#[test]
fn separable_training_set_scores_perfectly() {
    let data = gaussian_set(2, 120, 3.0);
    let e = train_ensemble(&data, Group::E2, &EnsembleConfig { c_grid: vec![100.0], ..Default::default() }).unwrap();
    assert!(e.info.iter().all(|i| i.training_auc == 1.0));
    assert_eq!(evaluate_ensemble(&e, &data).unwrap().roc.auc, 1.0);
}

/// Mean inner-fold AUC of `c` for member `omitted`, recomputed from scratch.
fn oracle_inner_auc(data: &LabeledSet, folds: &[Vec<usize>], omitted: usize, c: f64) -> f64 {
    let mut aucs = Vec::new();
    for (j, test) in folds.iter().enumerate() {
        if j == omitted {
            continue;
        }
        let mut train: Vec<usize> =
            (0..folds.len()).filter(|&f| f != omitted && f != j).flat_map(|f| folds[f].clone()).collect();
        train.sort_unstable();
        let model = train_svm(&data.subset(&train), c).unwrap();
        let s: Vec<f64> = test.iter().map(|&i| model.score(data.example(i)).unwrap()).collect();
        let y: Vec<i8> = test.iter().map(|&i| data.label(i)).collect();
        aucs.push(pair_auc(&s, &y));
    }
    aucs.iter().sum::<f64>() / aucs.len() as f64
}

#[test]
fn grid_search_agrees_with_exhaustive_oracle() {
    let grid = vec![0.001, 0.1, 10.0];
    for seed in 0..3 {
        let data = gaussian_set(seed + 40, 80, 0.4);
        let cfg = EnsembleConfig { c_grid: grid.clone(), seed, ..Default::default() };
        let e = train_ensemble(&data, Group::E1, &cfg).unwrap();
        let plan = stratified_folds(data.labels(), cfg.folds, seed).unwrap();
        for (i, info) in e.info.iter().enumerate() {
            let oracle: Vec<f64> = grid.iter().map(|&c| oracle_inner_auc(&data, &plan.folds, i, c)).collect();
            for ((c, mean), want) in info.c_search.iter().zip(&oracle) {
                assert!((mean - want).abs() < 1e-6, "member {i}, C {c}: {mean} vs {want}");
            }
            let best = oracle.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let first_best = grid[oracle.iter().position(|&a| a >= best - 1e-6).unwrap()];
            assert_eq!(info.c, first_best, "member {i}: {oracle:?}");
        }
    }
}

#[test]
fn aomi_beats_mi_in_most_seeds() {
    let mut wins = 0;
    for seed in 0..20 {
        let (m1, m2) = end_to_end_auc(seed, Condition::Mi);
        let (a1, a2) = end_to_end_auc(seed, Condition::Aomi);
        if a1 + a2 > m1 + m2 {
            wins += 1;
        }
    }
    assert!(wins >= 16, "AOMI > MI in {wins}/20 seeds");
}

fn stub_member(bias: f64) -> SvmModel {
    SvmModel {
        kernel: nirs_bci::svm::Kernel::Linear,
        c: 1.0,
        penalty: Default::default(),
        bias,
        alphas: vec![],
        labels: vec![],
        support_vectors: vec![],
        weights: Some(vec![0.0]),
        dim: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn vote_counts_positive_members(signs in proptest::collection::vec(any::<bool>(), 6), k in 3usize..=6) {
        let members = signs.iter().map(|&s| stub_member(if s { 1.0 } else { -1.0 })).collect();
        let e = Ensemble::from_members(Group::E1, k, members).unwrap();
        let v = vote(&e, &[0.0]).unwrap();
        let p = signs.iter().filter(|&&s| s).count();
        prop_assert_eq!(v.positives, p);
        prop_assert_eq!(v.decision, majority_rule(p, 6, k).unwrap());
    }
}
