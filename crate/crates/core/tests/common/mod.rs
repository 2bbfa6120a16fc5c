//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// `AᵀA` of a row-major matrix.
pub fn gram_of_columns(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a[0].len();
    let mut g = vec![vec![0.0; m]; m];
    for row in a {
        for i in 0..m {
            for j in 0..m {
                g[i][j] += row[i] * row[j];
            }
        }
    }
    g
}

pub fn center_columns(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len() as f64;
    let m = a[0].len();
    let means: Vec<f64> = (0..m).map(|j| a.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    a.iter().map(|r| r.iter().zip(&means).map(|(v, mu)| v - mu).collect()).collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with matching unit eigenvectors.
pub fn jacobi_eigen(s: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = s.len();
    let mut a: Vec<Vec<f64>> = s.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s_ = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s_ * akq;
                    a[k][q] = s_ * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s_ * aqk;
                    a[q][k] = s_ * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s_ * vkq;
                    row[q] = s_ * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Minimum-norm least-squares solution of a symmetric system via its
/// eigendecomposition. Returns `None` when the system is inconsistent.
pub fn symmetric_pinv_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    if n == 0 {
        return Some(vec![]);
    }
    let (vals, vecs) = jacobi_eigen(a);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut x = vec![0.0; n];
    for (lam, u) in vals.iter().zip(&vecs) {
        if lam.abs() <= 1e-10 * scale {
            continue;
        }
        let coef = u.iter().zip(b).map(|(ui, bi)| ui * bi).sum::<f64>() / lam;
        x.iter_mut().zip(u).for_each(|(xi, ui)| *xi += coef * ui);
    }
    let resid: f64 = (0..n)
        .map(|i| {
            let r = a[i].iter().zip(&x).map(|(aij, xj)| aij * xj).sum::<f64>() - b[i];
            r * r
        })
        .sum::<f64>()
        .sqrt();
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    (resid <= 1e-8 * bn).then_some(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual objective `Σα − ½ Σ α_i α_j y_i y_j x_i·x_j`.
pub fn dual_value(alpha: &[f64], y: &[i8], x: &[Vec<f64>]) -> f64 {
    let n = alpha.len();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += alpha[i] * alpha[j] * (y[i] * y[j]) as f64 * dot(&x[i], &x[j]);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * q
}

/// Exact optimum of the SVM dual by enumerating every assignment of the
/// multipliers to {0, C, free} and solving the equality-constrained KKT system
/// of the free ones. Exponential; intended for `m ≤ 6`.
pub fn brute_force_dual(x: &[Vec<f64>], y: &[i8], c: f64) -> (f64, Vec<f64>) {
    let m = x.len();
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let q = |i: usize, j: usize| yf[i] * yf[j] * dot(&x[i], &x[j]);
    let mut best = (f64::NEG_INFINITY, vec![0.0; m]);
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let mut state = vec![0u8; m];
        let mut k = code;
        for s in state.iter_mut() {
            *s = (k % 3) as u8;
            k /= 3;
        }
        let free: Vec<usize> = (0..m).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let nf = free.len();
        // [Q_FF  y_F][α_F]   [1 − Q_FB α_B]
        // [y_Fᵀ   0 ][ ν ] = [  −y_Bᵀ α_B  ]
        let mut a = vec![vec![0.0; nf + 1]; nf + 1];
        let mut b = vec![0.0; nf + 1];
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                a[r][s] = q(i, j);
            }
            a[r][nf] = yf[i];
            a[nf][r] = yf[i];
            b[r] = 1.0 - (0..m).filter(|&j| state[j] == 1).map(|j| q(i, j) * c).sum::<f64>();
        }
        b[nf] = -(0..m).filter(|&j| state[j] == 1).map(|j| yf[j] * c).sum::<f64>();
        let sol = if nf == 0 {
            if b[0].abs() > 1e-12 {
                continue;
            }
            Some(vec![0.0])
        } else {
            symmetric_pinv_solve(&a, &b)
        };
        let Some(sol) = sol else { continue };
        if free.iter().enumerate().any(|(r, _)| sol[r] < -1e-12 || sol[r] > c + 1e-12) {
            continue;
        }
        for (r, &i) in free.iter().enumerate() {
            alpha[i] = sol[r].clamp(0.0, c);
        }
        let eq: f64 = alpha.iter().zip(&yf).map(|(a, y)| a * y).sum();
        if eq.abs() > 1e-9 {
            continue;
        }
        let v = dual_value(&alpha, y, x);
        if v > best.0 {
            best = (v, alpha);
        }
    }
    best
}

/// Random labelled set of size `m` in `dim` dimensions with both classes.
pub fn random_labeled(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<i8>) {
    let x = random_matrix(rng, m, dim);
    let mut y: Vec<i8> = (0..m).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    y[0] = 1;
    y[1] = -1;
    (x, y)
}

/// Mann–Whitney AUC by explicit pair enumeration.
pub fn pair_auc(scores: &[f64], labels: &[i8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != -1 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

use nirs_bci::channel_select::{ChannelData, RceMode};
use nirs_bci::ensemble::Ensemble;
use nirs_bci::dataio::{generate_synthetic, BlockTiming, Condition, GeneratorConfig, SessionSet};
use nirs_bci::features::{extract_windows, task_set, FeatureSettings, FeatureSpec, WindowConfig};
use nirs_bci::pca::ComponentCount;
use nirs_bci::pipeline::{evaluate_group, select_channels, train_pair, PipelineConfig};
use nirs_bci::svm::LabeledSet;

pub const PLANTED: [u16; 4] = [3, 9, 22, 40];
pub const RIGHT_CHANNELS: [u16; 4] = [5, 12, 19, 26];
pub const LEFT_CHANNELS: [u16; 4] = [8, 15, 30, 37];

/// Two sessions with lateralised responses: RIGHT on one channel set, LEFT on
/// another.
pub fn lateral_sessions(seed: u64, snr: f64, condition: Condition, trials: usize) -> SessionSet {
    let g = GeneratorConfig {
        right_channels: RIGHT_CHANNELS.into_iter().collect(),
        left_channels: LEFT_CHANNELS.into_iter().collect(),
        snr,
        condition,
        trials_per_session: trials,
        seed,
        ..Default::default()
    };
    generate_synthetic(&g, 2, BlockTiming::default()).expect("generator")
}

/// Pipeline settings used by the end-to-end tests: non-overlapping windows
/// after the hemodynamic settle, three components per channel, fast RCE.
pub fn e2e_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.window = WindowConfig { len: 42, hop: 42, settle_s: 6.0 };
    cfg.features.count = ComponentCount::Fixed(3);
    cfg.rce.mode = RceMode::Fast;
    cfg.rce.seed = seed;
    cfg.ensemble.seed = seed;
    cfg
}

pub fn split(set: &SessionSet) -> (SessionSet, SessionSet) {
    (
        SessionSet::new(vec![set.sessions[0].clone()]),
        SessionSet::new(vec![set.sessions[1].clone()]),
    )
}

/// Ensembles trained on the first session of a lateralised pair, with the
/// held-out second session.
pub struct Trained {
    pub test: SessionSet,
    pub channels: Vec<u16>,
    pub e1: Ensemble,
    pub e2: Ensemble,
    pub cfg: PipelineConfig,
}

pub fn train_lateral(seed: u64, condition: Condition) -> Trained {
    train_lateral_at(seed, 0.7, condition)
}

pub fn train_lateral_at(seed: u64, snr: f64, condition: Condition) -> Trained {
    let set = lateral_sessions(seed, snr, condition, 20);
    let (train, test) = split(&set);
    let cfg = e2e_config(seed);
    let ranking = select_channels(&train, &cfg).expect("rce");
    let (e1, e2) = train_pair(&train, &ranking.survivors, &cfg).expect("training");
    Trained { test, channels: ranking.survivors, e1, e2, cfg }
}

/// Train on the first session, test on the second; held-out AUC of E1, E2.
pub fn end_to_end_auc(seed: u64, condition: Condition) -> (f64, f64) {
    let t = train_lateral(seed, condition);
    let a1 = evaluate_group(&t.e1, &t.test, &t.cfg.window).expect("eval").roc.auc;
    let a2 = evaluate_group(&t.e2, &t.test, &t.cfg.window).expect("eval").roc.auc;
    (a1, a2)
}

/// Task-versus-rest channel data with four planted channels, 40 examples per
/// class.
pub fn planted_channel_data(seed: u64) -> ChannelData {
    let g = GeneratorConfig {
        task_channels: PLANTED.into_iter().collect(),
        snr: 5.0,
        trials_per_session: 10,
        seed,
        ..Default::default()
    };
    let set = generate_synthetic(&g, 1, BlockTiming::default()).expect("generator");
    let montage = set.sessions[0].channel_ids().to_vec();
    let wcfg = WindowConfig { len: 42, hop: 42, settle_s: 6.0 };
    let windows = extract_windows(&set, &wcfg).expect("windows");
    let views: Vec<_> = windows.iter().map(|w| w.samples.view()).collect();
    let settings = FeatureSettings { count: ComponentCount::Fixed(3), ..Default::default() };
    let spec = FeatureSpec::fit(&views, &montage, &montage, &settings).expect("features");
    let all = task_set(&spec, &windows, &montage).expect("task set").task_vs_rest();
    let mut keep = Vec::new();
    for class in [1i8, -1] {
        keep.extend((0..all.len()).filter(|&i| all.label(i) == class).take(40));
    }
    keep.sort_unstable();
    let subset: LabeledSet = all.subset(&keep);
    assert_eq!(subset.labels().iter().filter(|&&y| y == 1).count(), 40);
    assert_eq!(subset.labels().iter().filter(|&&y| y == -1).count(), 40);
    ChannelData::new(montage, spec.k(), subset).expect("channel data")
}
