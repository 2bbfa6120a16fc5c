mod common;

use common::*;
use ndarray::Array2;
use nirs_bci::pca::{fit, pca_directions, project, ComponentCount, PcaOptions};
use proptest::prelude::*;
use rand::Rng;

fn to_array(a: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), a[0].len()), |(i, j)| a[i][j])
}

/// Angle between two lines through the origin.
fn line_angle(u: &[f64], v: &[f64]) -> f64 {
    let s = dot(u, v).signum();
    let chord = u.iter().zip(v).map(|(a, b)| (a - s * b).powi(2)).sum::<f64>().sqrt();
    2.0 * (chord / 2.0).min(1.0).asin()
}

/// Checks one matrix; returns the number of directions compared.
fn check_against_oracle(a: &[Vec<f64>]) -> usize {
    let l = a.len();
    let m = a[0].len();
    let k = l.min(m);
    let basis = pca_directions(to_array(a).view(), k, &PcaOptions::default()).unwrap();
    let g = gram_of_columns(&center_columns(a));
    let (vals, vecs) = jacobi_eigen(&g);
    let trace: f64 = (0..m).map(|i| g[i][i]).sum();

    let mut compared = 0;
    for j in 0..k {
        let below = if j + 1 < m { vals[j] - vals[j + 1] } else { f64::INFINITY };
        let above = if j > 0 { vals[j - 1] - vals[j] } else { f64::INFINITY };
        if below > 1e-6 && above > 1e-6 {
            let angle = line_angle(&basis.directions[j], &vecs[j]);
            assert!(angle < 1e-6, "direction {j}: angle {angle:e} (λ = {:?})", vals);
            compared += 1;
        }
        assert!((basis.eigenvalues[j] - vals[j]).abs() <= 1e-8 * trace.max(1.0));
    }
    if k == m {
        let sum: f64 = basis.eigenvalues.iter().sum();
        assert!((sum - trace).abs() <= 1e-8 * trace.max(1.0), "Σλ = {sum}, trace = {trace}");
    }
    compared
}

#[test]
fn two_hundred_random_matrices_match_dense_oracle() {
    let mut rng = rng(2024);
    let mut compared = 0;
    for _ in 0..200 {
        let l = rng.random_range(2..=12);
        let m = rng.random_range(1..=12);
        compared += check_against_oracle(&random_matrix(&mut rng, l, m));
    }
    assert!(compared > 500, "only {compared} separated directions compared");
}

#[test]
fn eigenvalue_sum_equals_trace_on_tall_matrices() {
    let mut rng = rng(5);
    for _ in 0..50 {
        let m = rng.random_range(1..=8);
        let a = random_matrix(&mut rng, m + 4, m);
        let model = fit(to_array(&a).view(), ComponentCount::Fixed(m), &PcaOptions::default()).unwrap();
        let sum: f64 = model.basis.eigenvalues.iter().sum();
        assert!((sum - model.total_variance).abs() < 1e-8 * model.total_variance.max(1.0));
    }
}

#[test]
fn seeded_six_by_four_matches_oracle() {
    let a = random_matrix(&mut rng(11), 6, 4);
    assert!(check_against_oracle(&a) >= 3);
}

fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=12, 1usize..=12).prop_flat_map(|(l, m)| {
        proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, m), l)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn directions_are_orthonormal(a in matrix_strategy()) {
        let k = a.len().min(a[0].len());
        let b = pca_directions(to_array(&a).view(), k, &PcaOptions::default()).unwrap();
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(&b.directions[i], &b.directions[j]) - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn variance_is_non_increasing(a in matrix_strategy()) {
        let k = a.len().min(a[0].len());
        let b = pca_directions(to_array(&a).view(), k, &PcaOptions::default()).unwrap();
        let centred = to_array(&center_columns(&a));
        let z = project(centred.view(), &b).unwrap();
        let var: Vec<f64> = z.columns().into_iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let scale = var.first().copied().unwrap_or(0.0).max(1.0);
        for w in var.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8 * scale);
        }
        for w in b.eigenvalues.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8 * scale);
        }
    }

    #[test]
    fn projection_is_linear(
        a in matrix_strategy(),
        s in -5.0f64..5.0,
        t in -5.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let l = a.len();
        let m = a[0].len();
        let b = pca_directions(to_array(&a).view(), l.min(m), &PcaOptions::default()).unwrap();
        let mut r = rng(seed);
        let x = to_array(&random_matrix(&mut r, 3, m));
        let y = to_array(&random_matrix(&mut r, 3, m));
        let lhs = project((&x * s + &y * t).view(), &b).unwrap();
        let rhs = project(x.view(), &b).unwrap() * s + project(y.view(), &b).unwrap() * t;
        for (p, q) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }
}
