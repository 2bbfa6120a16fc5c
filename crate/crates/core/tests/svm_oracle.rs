mod common;

use common::*;
use nirs_bci::svm::{
    dual_objective, gram, train_svm, train_svm_detailed, weight_magnitudes, ChannelBlocks, Kernel, LabeledSet,
    SvmParams,
};
use proptest::prelude::*;
use rand::Rng;

fn labeled(x: &[Vec<f64>], y: &[i8]) -> LabeledSet {
    LabeledSet::new(x.to_vec(), y.to_vec()).unwrap()
}

#[test]
fn dual_objective_matches_brute_force_on_500_instances() {
    let mut rng = rng(77);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let m = rng.random_range(2..=6);
        let dim = rng.random_range(1..=4);
        let (x, y) = random_labeled(&mut rng, m, dim);
        let c = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let data = labeled(&x, &y);
        let (model, sol) = train_svm_detailed(&data, &SvmParams::with_c(c)).unwrap();
        let (best, _) = brute_force_dual(&x, &y, c);
        let ours = dual_value(&sol.alphas, &y, &x);
        worst = worst.max((ours - best).abs());
        assert!((ours - best).abs() < 1e-5, "ours {ours}, oracle {best}, C {c}, x {x:?}, y {y:?}");
        let kkt = model.kkt_violation(&data, &sol.alphas).unwrap();
        assert!(kkt < 1e-6, "KKT residual {kkt:e}");
    }
    eprintln!("largest objective gap {worst:e}");
}

#[test]
fn gram_matches_naive_dot_products() {
    let (x, _) = random_labeled(&mut rng(3), 9, 5);
    let g = gram(x.iter().map(Vec::as_slice), Kernel::Linear).unwrap();
    for i in 0..9 {
        for j in 0..9 {
            assert!((g.get(i, j) - dot(&x[i], &x[j])).abs() < 1e-12);
        }
    }
}

#[test]
fn weights_and_scores_match_naive_sums() {
    let (x, y) = random_labeled(&mut rng(4), 30, 6);
    let data = labeled(&x, &y);
    let (model, sol) = train_svm_detailed(&data, &SvmParams::with_c(1.0)).unwrap();
    let mut w = vec![0.0; 6];
    for i in 0..30 {
        for d in 0..6 {
            w[d] += sol.alphas[i] * y[i] as f64 * x[i][d];
        }
    }
    for (a, b) in w.iter().zip(model.weights().unwrap()) {
        assert!((a - b).abs() < 1e-10);
    }
    let z = [0.3, -0.2, 0.1, 0.5, -0.4, 0.0];
    assert!((model.score(&z).unwrap() - (dot(&w, &z) + sol.bias)).abs() < 1e-10);
    let mags = weight_magnitudes(&w, &ChannelBlocks::contiguous(2, 3)).unwrap();
    let naive = [w[..3].iter().map(|v| v.abs()).sum::<f64>(), w[3..].iter().map(|v| v.abs()).sum::<f64>()];
    assert!((mags[0] - naive[0]).abs() < 1e-12 && (mags[1] - naive[1]).abs() < 1e-12);
    assert!((dual_objective(&sol.alphas, &y, &gram(x.iter().map(Vec::as_slice), Kernel::Linear).unwrap())
        - dual_value(&sol.alphas, &y, &x))
    .abs()
        < 1e-9);
}

#[test]
fn separable_set_is_classified_perfectly_with_large_c() {
    let mut r = rng(9);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..10 {
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        x.push(vec![side * (1.0 + r.random_range(0.0..1.0)), r.random_range(-1.0..1.0)]);
        y.push(side as i8);
    }
    let model = train_svm(&labeled(&x, &y), 1e4).unwrap();
    for (xi, &yi) in x.iter().zip(&y) {
        assert_eq!(model.decide(xi).unwrap().1, yi);
        assert!(yi as f64 * model.score(xi).unwrap() >= 1.0 - 1e-6);
    }
}

#[test]
fn conflicting_duplicates_sit_at_the_bound() {
    let x = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.0], vec![2.0, -1.0]];
    let y = vec![1, -1, -1, 1];
    let (_, sol) = train_svm_detailed(&labeled(&x, &y), &SvmParams::with_c(1.0)).unwrap();
    let (best, _) = brute_force_dual(&x, &y, 1.0);
    assert!((dual_value(&sol.alphas, &y, &x) - best).abs() < 1e-6);
    assert!((sol.alphas[0] - 1.0).abs() < 1e-9 && (sol.alphas[1] - 1.0).abs() < 1e-9);
}

#[test]
fn training_is_deterministic() {
    let (x, y) = random_labeled(&mut rng(12), 40, 5);
    let a = train_svm(&labeled(&x, &y), 0.5).unwrap();
    let b = train_svm(&labeled(&x, &y), 0.5).unwrap();
    assert_eq!(a, b);
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<i8>)> {
    (3usize..=12, 1usize..=4).prop_flat_map(|(m, d)| {
        (
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, d), m),
            proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], m),
        )
            .prop_map(|(x, mut y)| {
                y[0] = 1;
                y[1] = -1;
                (x, y)
            })
    })
}

/// At most `dim` random points: the Gram matrix is almost surely nonsingular,
/// so the dual optimum is unique.
fn independent_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<i8>)> {
    (2usize..=6).prop_flat_map(|d| (2usize..=d, Just(d))).prop_flat_map(|(m, d)| {
        (
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, d), m),
            proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], m),
        )
            .prop_map(|(x, mut y)| {
                y[0] = 1;
                y[1] = -1;
                (x, y)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn solution_is_dual_feasible((x, y) in instance(), c in 0.05f64..20.0) {
        let (_, sol) = train_svm_detailed(&labeled(&x, &y), &SvmParams::with_c(c)).unwrap();
        let eq: f64 = sol.alphas.iter().zip(&y).map(|(a, &yi)| a * yi as f64).sum();
        prop_assert!(eq.abs() < 1e-9 * c.max(1.0) * x.len() as f64);
        prop_assert!(sol.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
    }

    #[test]
    fn kkt_residuals_are_small((x, y) in instance(), c in 0.05f64..20.0) {
        let data = labeled(&x, &y);
        let (model, sol) = train_svm_detailed(&data, &SvmParams::with_c(c)).unwrap();
        prop_assert!(model.kkt_violation(&data, &sol.alphas).unwrap() < 1e-6);
    }

    #[test]
    fn scaling_inputs_preserves_support_set((x, y) in independent_instance(), s in 0.25f64..4.0) {
        let data = labeled(&x, &y);
        let (_, a) = train_svm_detailed(&data, &SvmParams::with_c(1.0)).unwrap();
        let (_, b) = train_svm_detailed(&data.scaled(s), &SvmParams::with_c(1.0 / (s * s))).unwrap();
        // Scaled multipliers are α / s².
        let margin = 1e-4;
        for (ai, bi) in a.alphas.iter().zip(&b.alphas) {
            let bi = bi * s * s;
            if *ai > margin {
                prop_assert!(bi > 0.0, "α {ai} became {bi}");
            }
            if bi > margin {
                prop_assert!(*ai > 0.0, "α {bi} appeared after scaling");
            }
        }
    }
}
