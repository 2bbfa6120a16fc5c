//! Principal directions by power iteration and deflation.
//!
//! For a trial matrix `X` (`rows × m`, rows are observations) each direction
//! `u_j` is the leading eigenvector of the deflated Gram matrix
//! `X_jᵀ X_j`, with `X_{j+1} = X_j (I − u_j u_jᵀ / u_jᵀ u_j)`. The deflation is
//! carried out on the `m × m` Gram matrix, `G_{j+1} = P_j G_j P_j`, which is
//! algebraically identical and independent of the row count.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("power iteration for component {component} did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        component: usize,
        iterations: usize,
        residual: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaOptions {
    /// Subtract column means before extracting directions.
    pub center: bool,
    /// Stop when successive iterates differ by less than this (2-norm).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PcaOptions {
    fn default() -> Self {
        PcaOptions {
            center: true,
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

/// How many directions to extract.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ComponentCount {
    Fixed(usize),
    /// Smallest `k` whose eigenvalues capture at least this fraction of the
    /// total variance.
    Variance(f64),
}

impl Default for ComponentCount {
    fn default() -> Self {
        ComponentCount::Variance(0.95)
    }
}

/// Ordered unit directions `u_1..u_k` and their variances `λ_1 ≥ … ≥ λ_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBasis {
    pub directions: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl ProjectionBasis {
    pub fn k(&self) -> usize {
        self.directions.len()
    }

    /// Length of each direction.
    pub fn dim(&self) -> usize {
        self.directions.first().map_or(0, Vec::len)
    }

    /// Standard-basis directions `e_1..e_k` in `R^m`.
    pub fn standard(m: usize, k: usize) -> Self {
        let directions = (0..k)
            .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        ProjectionBasis {
            directions,
            eigenvalues: vec![0.0; k],
        }
    }
}

/// A fitted basis together with the column means removed before fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub basis: ProjectionBasis,
    pub column_means: Option<Vec<f64>>,
    /// Trace of the (centred) Gram matrix the basis was fitted on.
    pub total_variance: f64,
}

impl PcaModel {
    /// Centre `x` with the stored means, then project.
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, PcaError> {
        match &self.column_means {
            Some(means) => {
                if means.len() != x.ncols() {
                    return Err(PcaError::InvalidArgument(format!(
                        "matrix has {} columns, model expects {}",
                        x.ncols(),
                        means.len()
                    )));
                }
                let mut centred = x.to_owned();
                for mut row in centred.rows_mut() {
                    row.iter_mut().zip(means).for_each(|(v, m)| *v -= m);
                }
                project(centred.view(), &self.basis)
            }
            None => project(x, &self.basis),
        }
    }
}

/// Streaming accumulator for a Gram matrix pooled over many matrices sharing
/// the column dimension.
#[derive(Clone, Debug)]
pub struct GramAccumulator {
    outer: Array2<f64>,
    sum: Array1<f64>,
    rows: usize,
}

impl GramAccumulator {
    pub fn new(m: usize) -> Self {
        GramAccumulator {
            outer: Array2::zeros((m, m)),
            sum: Array1::zeros(m),
            rows: 0,
        }
    }

    pub fn add(&mut self, x: ArrayView2<f64>) -> Result<(), PcaError> {
        if x.ncols() != self.sum.len() {
            return Err(PcaError::InvalidArgument(format!(
                "matrix has {} columns, accumulator expects {}",
                x.ncols(),
                self.sum.len()
            )));
        }
        check_finite(x)?;
        self.outer += &x.t().dot(&x);
        self.sum += &x.sum_axis(Axis(0));
        self.rows += x.nrows();
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Gram matrix of the stacked rows, optionally after column centring.
    fn finish(&self, center: bool) -> (Array2<f64>, Option<Vec<f64>>) {
        if !center || self.rows == 0 {
            return (self.outer.clone(), None);
        }
        let n = self.rows as f64;
        let mean = &self.sum / n;
        let m = mean.len();
        let mut g = self.outer.clone();
        for i in 0..m {
            for j in 0..m {
                g[[i, j]] -= n * mean[i] * mean[j];
            }
        }
        (g, Some(mean.to_vec()))
    }

    /// Fit directions on everything accumulated so far.
    pub fn fit(&self, count: ComponentCount, opts: &PcaOptions) -> Result<PcaModel, PcaError> {
        let m = self.sum.len();
        let k_max = self.rows.min(m);
        let (gram, means) = self.finish(opts.center);
        let basis = directions_from_gram(&gram, count, k_max, opts)?;
        Ok(PcaModel {
            basis,
            column_means: means,
            total_variance: trace(&gram),
        })
    }
}

fn check_finite(x: ArrayView2<f64>) -> Result<(), PcaError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PcaError::InvalidArgument("matrix contains non-finite values".into()))
    }
}

fn trace(g: &Array2<f64>) -> f64 {
    g.diag().sum()
}

/// Fit a PCA model on a single matrix.
pub fn fit(x: ArrayView2<f64>, count: ComponentCount, opts: &PcaOptions) -> Result<PcaModel, PcaError> {
    let mut acc = GramAccumulator::new(x.ncols());
    acc.add(x)?;
    acc.fit(count, opts)
}

/// The first `k` principal directions of `x` (`l × m`), `1 ≤ k ≤ min(l, m)`.
pub fn pca_directions(x: ArrayView2<f64>, k: usize, opts: &PcaOptions) -> Result<ProjectionBasis, PcaError> {
    let limit = x.nrows().min(x.ncols());
    if k == 0 || k > limit {
        return Err(PcaError::InvalidArgument(format!(
            "k = {k} outside 1..={limit} for a {}×{} matrix",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(fit(x, ComponentCount::Fixed(k), opts)?.basis)
}

/// Features `X u_1, …, X u_k` as an `l × k` matrix.
pub fn project(x: ArrayView2<f64>, basis: &ProjectionBasis) -> Result<Array2<f64>, PcaError> {
    if basis.k() > 0 && basis.dim() != x.ncols() {
        return Err(PcaError::InvalidArgument(format!(
            "basis dimension {} does not match {} columns",
            basis.dim(),
            x.ncols()
        )));
    }
    let mut out = Array2::zeros((x.nrows(), basis.k()));
    for (r, row) in x.rows().into_iter().enumerate() {
        for (j, u) in basis.directions.iter().enumerate() {
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(u) {
                acc += a * b;
            }
            out[[r, j]] = acc;
        }
    }
    Ok(out)
}

fn directions_from_gram(
    gram: &Array2<f64>,
    count: ComponentCount,
    k_max: usize,
    opts: &PcaOptions,
) -> Result<ProjectionBasis, PcaError> {
    let m = gram.nrows();
    let (k_limit, variance_target) = match count {
        ComponentCount::Fixed(k) => {
            if k == 0 || k > k_max {
                return Err(PcaError::InvalidArgument(format!("k = {k} outside 1..={k_max}")));
            }
            (k, None)
        }
        ComponentCount::Variance(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(PcaError::InvalidArgument(format!(
                    "variance fraction must lie in (0, 1], got {f}"
                )));
            }
            if k_max == 0 {
                return Err(PcaError::InvalidArgument("no rows to fit".into()));
            }
            (k_max, Some(f))
        }
    };
    let total = trace(gram);
    // Eigenvalues below this are treated as exact zeros.
    let floor = total.abs().max(f64::MIN_POSITIVE) * 1e-14;

    let mut deflated = gram.clone();
    let mut directions: Vec<Array1<f64>> = Vec::with_capacity(k_limit);
    let mut eigenvalues = Vec::with_capacity(k_limit);
    let mut captured = 0.0;
    for component in 0..k_limit {
        let u = leading_eigenvector(&deflated, &directions, component, floor, opts)?;
        let lambda = u.dot(&gram.dot(&u)).max(0.0);
        deflate(&mut deflated, &u);
        captured += lambda;
        directions.push(u);
        eigenvalues.push(lambda);
        if let Some(f) = variance_target {
            if captured >= f * total {
                break;
            }
        }
    }
    debug_assert!(directions.iter().all(|u| u.len() == m));
    Ok(ProjectionBasis {
        directions: directions.into_iter().map(|u| u.to_vec()).collect(),
        eigenvalues,
    })
}

/// `G ← P G P` with `P = I − u uᵀ` for unit `u`.
fn deflate(g: &mut Array2<f64>, u: &Array1<f64>) {
    let gu = g.dot(u);
    let ugu = u.dot(&gu);
    let m = u.len();
    for i in 0..m {
        for j in 0..m {
            g[[i, j]] += -u[i] * gu[j] - gu[i] * u[j] + ugu * u[i] * u[j];
        }
    }
}

fn orthogonalize(v: &mut Array1<f64>, against: &[Array1<f64>]) {
    for u in against {
        let c = v.dot(u);
        v.scaled_add(-c, u);
    }
}

fn normalize(v: &mut Array1<f64>) -> f64 {
    let n = v.dot(v).sqrt();
    if n > 0.0 {
        *v /= n;
    }
    n
}

/// Power iteration on the symmetric PSD matrix `g`.
///
/// Every 32 iterations without convergence the iteration operator is
/// replaced by its normalised square, which raises the eigenvalue ratio that
/// governs the convergence rate to the power of two while keeping the same
/// eigenvectors.
fn leading_eigenvector(
    g: &Array2<f64>,
    previous: &[Array1<f64>],
    component: usize,
    floor: f64,
    opts: &PcaOptions,
) -> Result<Array1<f64>, PcaError> {
    let m = g.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + component as u64);
    let mut v = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
    orthogonalize(&mut v, previous);
    orthogonalize(&mut v, previous);
    if normalize(&mut v) == 0.0 {
        return Err(PcaError::InvalidArgument("no direction left to extract".into()));
    }

    // Remaining spectrum numerically zero: any orthogonal unit vector is an
    // eigenvector.
    if g.iter().map(|x| x * x).sum::<f64>().sqrt() <= floor {
        return Ok(canonical_sign(v));
    }

    let mut op = g.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut w = op.dot(&v);
        orthogonalize(&mut w, previous);
        if normalize(&mut w) == 0.0 {
            return Ok(canonical_sign(v));
        }
        if w.dot(&v) < 0.0 {
            w.mapv_inplace(|x| -x);
        }
        let delta = (&w - &v).dot(&(&w - &v)).sqrt();
        v = w;
        if delta < opts.tolerance {
            converged = true;
            break;
        }
        if iterations % 32 == 0 {
            op = op.dot(&op);
            let f = op.iter().map(|x| x * x).sum::<f64>().sqrt();
            if f > 0.0 {
                op /= f;
            }
        }
    }
    if !converged {
        let gv = g.dot(&v);
        let rq = v.dot(&gv);
        let residual = (&gv - &(&v * rq)).dot(&(&gv - &(&v * rq))).sqrt();
        return Err(PcaError::NonConvergence {
            component,
            iterations,
            residual,
        });
    }
    Ok(canonical_sign(v))
}

/// Flip so that the largest-magnitude entry is positive.
fn canonical_sign(mut v: Array1<f64>) -> Array1<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
    v
}
