//! Linear soft-margin SVM trained on the dual problem.
//!
//! The solver minimises `½ αᵀQα − eᵀα` with `Q_ij = y_i y_j K(x_i, x_j)`
//! subject to `0 ≤ α_i ≤ U` and `yᵀα = 0`, updating one pair of multipliers
//! at a time. The first index is the maximal KKT violator; its partner is
//! the violating index with the largest second-order objective decrease.
//! Iteration stops once the maximal violation drops below the tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training requires both classes, got only {0:+}")]
    SingleClass(i8),
    #[error("SMO did not converge after {updates} updates (max KKT violation {max_violation:e})")]
    NonConvergence { updates: usize, max_violation: f64 },
    #[error("unsupported model version `{0}`")]
    Version(String),
    #[error("model serialisation: {0}")]
    Serde(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    #[default]
    #[serde(rename = "LINEAR")]
    Linear,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => dot(a, b),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Training examples with `±1` labels, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<i8>,
}

impl LabeledSet {
    pub fn new(examples: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self, SvmError> {
        let dim = examples.first().map_or(0, Vec::len);
        if examples.iter().any(|e| e.len() != dim) {
            return Err(SvmError::InvalidArgument("examples have differing dimensions".into()));
        }
        Self::from_flat(dim, examples.into_iter().flatten().collect(), labels)
    }

    pub fn from_flat(dim: usize, data: Vec<f64>, labels: Vec<i8>) -> Result<Self, SvmError> {
        if data.len() != dim * labels.len() {
            return Err(SvmError::InvalidArgument(format!(
                "{} values for {} examples of dimension {dim}",
                data.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(SvmError::InvalidArgument(format!("label {bad} is not ±1")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::InvalidArgument("features must be finite".into()));
        }
        Ok(LabeledSet { dim, data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn example(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn examples(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.example(i))
    }

    pub fn label(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.example(i));
        }
        LabeledSet {
            dim: self.dim,
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keep only the listed feature columns, in the given order.
    pub fn select_features(&self, features: &[usize]) -> LabeledSet {
        let mut data = Vec::with_capacity(self.len() * features.len());
        for x in self.examples() {
            data.extend(features.iter().map(|&f| x[f]));
        }
        LabeledSet {
            dim: features.len(),
            data,
            labels: self.labels.clone(),
        }
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&1) && self.labels.contains(&-1)
    }

    pub fn scaled(&self, s: f64) -> LabeledSet {
        LabeledSet {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Symmetric matrix of pairwise kernel values.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    pub fn zeros(n: usize) -> Self {
        GramMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Principal submatrix on `indices`.
    pub fn submatrix(&self, indices: &[usize]) -> GramMatrix {
        let n = indices.len();
        let mut data = Vec::with_capacity(n * n);
        for &i in indices {
            let row = self.row(i);
            data.extend(indices.iter().map(|&j| row[j]));
        }
        GramMatrix { n, data }
    }

    pub fn add_assign(&mut self, other: &GramMatrix) {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn sub_assign(&mut self, other: &GramMatrix) {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a -= b);
    }
}

/// `K_ij = K(x_i, x_j)` over a non-empty list of equal-length examples.
pub fn gram<'a, I>(examples: I, kernel: Kernel) -> Result<GramMatrix, SvmError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let xs: Vec<&[f64]> = examples.into_iter().collect();
    let Some(first) = xs.first() else {
        return Err(SvmError::InvalidArgument("gram of an empty example list".into()));
    };
    if xs.iter().any(|x| x.len() != first.len()) {
        return Err(SvmError::InvalidArgument("examples have differing dimensions".into()));
    }
    let n = xs.len();
    let mut g = GramMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(xs[i], xs[j]);
            g.data[i * n + j] = v;
            g.data[j * n + i] = v;
        }
    }
    Ok(g)
}

/// Whether `C` multiplies the slack sum (the usual soft margin) or divides it.
///
/// With `Reciprocal` the box constraint on the multipliers becomes `1/C`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyForm {
    #[default]
    Conventional,
    Reciprocal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub penalty: PenaltyForm,
    pub kernel: Kernel,
    /// Maximal KKT violation at which SMO stops.
    pub tolerance: f64,
    pub max_updates: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            penalty: PenaltyForm::Conventional,
            kernel: Kernel::Linear,
            tolerance: 1e-6,
            max_updates: 1_000_000,
        }
    }
}

impl SvmParams {
    pub fn with_c(c: f64) -> Self {
        SvmParams { c, ..SvmParams::default() }
    }

    /// Upper bound on every multiplier.
    pub fn upper_bound(&self) -> f64 {
        match self.penalty {
            PenaltyForm::Conventional => self.c,
            PenaltyForm::Reciprocal => 1.0 / self.c,
        }
    }

    fn validate(&self) -> Result<(), SvmError> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SvmError::InvalidArgument(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(SvmError::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Optimal multipliers and bias of one dual problem.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub upper: f64,
    pub updates: usize,
    pub max_violation: f64,
}

impl DualSolution {
    /// `w = Σ α_i y_i x_i`, accumulated in index order.
    pub fn weights<'a>(&self, examples: impl IntoIterator<Item = &'a [f64]>, labels: &[i8], dim: usize) -> Vec<f64> {
        let mut w = vec![0.0; dim];
        for ((x, &y), &a) in examples.into_iter().zip(labels).zip(&self.alphas) {
            if a != 0.0 {
                let c = a * y as f64;
                w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += c * xi);
            }
        }
        w
    }
}

const TAU: f64 = 1e-12;

/// SMO on a precomputed Gram matrix.
pub fn solve_dual(
    gram: &GramMatrix,
    labels: &[i8],
    upper: f64,
    tolerance: f64,
    max_updates: usize,
) -> Result<DualSolution, SvmError> {
    let n = labels.len();
    if gram.size() != n {
        return Err(SvmError::InvalidArgument(format!(
            "gram is {0}×{0} but {n} labels were given",
            gram.size()
        )));
    }
    if n == 0 {
        return Err(SvmError::InvalidArgument("no training examples".into()));
    }
    if !labels.contains(&1) {
        return Err(SvmError::SingleClass(-1));
    }
    if !labels.contains(&-1) {
        return Err(SvmError::SingleClass(1));
    }
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut alpha = vec![0.0; n];
    // Gradient of the objective, Qα − e.
    let mut grad = vec![-1.0; n];
    let mut updates = 0;

    loop {
        let (i, j, gap) = select_pair(&alpha, &grad, &y, upper);
        if gap < tolerance || i.is_none() || j.is_none() {
            break;
        }
        if updates >= max_updates {
            return Err(SvmError::NonConvergence {
                updates,
                max_violation: gap,
            });
        }
        let i = i.unwrap();
        let j = second_order_partner(i, &alpha, &grad, &y, upper, gram).unwrap_or(j.unwrap());
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let k_ii = gram.get(i, i);
        let k_jj = gram.get(j, j);
        let k_ij = gram.get(i, j);
        if y[i] != y[j] {
            let quad = (k_ii + k_jj + 2.0 * y[i] * y[j] * k_ij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > upper {
                    alpha[i] = upper;
                    alpha[j] = upper - diff;
                }
            } else if alpha[j] > upper {
                alpha[j] = upper;
                alpha[i] = upper + diff;
            }
        } else {
            let quad = (k_ii + k_jj - 2.0 * y[i] * y[j] * k_ij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > upper {
                if alpha[i] > upper {
                    alpha[i] = upper;
                    alpha[j] = sum - upper;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > upper {
                if alpha[j] > upper {
                    alpha[j] = upper;
                    alpha[i] = sum - upper;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let d_i = alpha[i] - old_i;
        let d_j = alpha[j] - old_j;
        let (row_i, row_j) = (gram.row(i), gram.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * row_i[t] * d_i + y[j] * row_j[t] * d_j);
        }
        updates += 1;
    }

    let (_, _, max_violation) = select_pair(&alpha, &grad, &y, upper);
    let bias = bias_from_gradient(&alpha, &grad, &y, upper);
    Ok(DualSolution {
        alphas: alpha,
        bias,
        upper,
        updates,
        max_violation: max_violation.max(0.0),
    })
}

/// Maximal violating pair: `i = argmax_{I_up} −y G`, `j = argmin_{I_low} −y G`.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], upper: f64) -> (Option<usize>, Option<usize>, f64) {
    let mut g_max = f64::NEG_INFINITY;
    let mut g_min = f64::INFINITY;
    let (mut i_best, mut j_best) = (None, None);
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        let in_up = (y[t] > 0.0 && alpha[t] < upper) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] < 0.0 && alpha[t] < upper) || (y[t] > 0.0 && alpha[t] > 0.0);
        if in_up && v > g_max {
            g_max = v;
            i_best = Some(t);
        }
        if in_low && v < g_min {
            g_min = v;
            j_best = Some(t);
        }
    }
    (i_best, j_best, g_max - g_min)
}

/// Partner of the maximal violator `i`: the violating `t ∈ I_low` with the
/// largest second-order decrease `b² / a`, `b = −y_i G_i + y_t G_t`,
/// `a = K_ii + K_tt − 2 K_it`.
fn second_order_partner(
    i: usize,
    alpha: &[f64],
    grad: &[f64],
    y: &[f64],
    upper: f64,
    gram: &GramMatrix,
) -> Option<usize> {
    let g_i = -y[i] * grad[i];
    let row_i = gram.row(i);
    let k_ii = row_i[i];
    let mut best = None;
    let mut best_gain = f64::NEG_INFINITY;
    for t in 0..alpha.len() {
        let in_low = (y[t] < 0.0 && alpha[t] < upper) || (y[t] > 0.0 && alpha[t] > 0.0);
        if !in_low {
            continue;
        }
        let b = g_i + y[t] * grad[t];
        if b <= 0.0 {
            continue;
        }
        let a = (k_ii + gram.get(t, t) - 2.0 * row_i[t]).max(TAU);
        let gain = b * b / a;
        if gain > best_gain {
            best_gain = gain;
            best = Some(t);
        }
    }
    best
}

/// Average of `y_j − Σ α_i y_i K_ij` over free multipliers; without any, the
/// midpoint of the bracket implied by the bound multipliers.
fn bias_from_gradient(alpha: &[f64], grad: &[f64], y: &[f64], upper: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut lower = f64::NEG_INFINITY;
    let mut upper_b = f64::INFINITY;
    for t in 0..alpha.len() {
        // y_t − Σ α_i y_i K_it  ==  −y_t G_t
        let v = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < upper {
            free_sum += v;
            free_n += 1;
        } else if (alpha[t] == 0.0) == (y[t] > 0.0) {
            lower = lower.max(v);
        } else {
            upper_b = upper_b.min(v);
        }
    }
    if free_n > 0 {
        free_sum / free_n as f64
    } else if lower.is_finite() && upper_b.is_finite() {
        0.5 * (lower + upper_b)
    } else if lower.is_finite() {
        lower
    } else if upper_b.is_finite() {
        upper_b
    } else {
        0.0
    }
}

/// Dual objective `Σ α − ½ Σ α_i α_j y_i y_j K_ij` (to be maximised).
pub fn dual_objective(alphas: &[f64], labels: &[i8], gram: &GramMatrix) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alphas[i] * alphas[j] * (labels[i] * labels[j]) as f64 * gram.get(i, j);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// A trained SVM holding its support vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub penalty: PenaltyForm,
    pub bias: f64,
    /// Multipliers of the support vectors (`α_i > 0`).
    pub alphas: Vec<f64>,
    pub labels: Vec<i8>,
    pub support_vectors: Vec<Vec<f64>>,
    /// `Σ α_i y_i x_i` for the linear kernel.
    pub weights: Option<Vec<f64>>,
    pub dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "version")]
enum VersionedModel {
    #[serde(rename = "svm-v1")]
    V1(SvmModel),
}

impl SvmModel {
    fn from_solution(data: &LabeledSet, sol: &DualSolution, params: &SvmParams) -> Self {
        let mut alphas = Vec::new();
        let mut labels = Vec::new();
        let mut support_vectors = Vec::new();
        for (i, &a) in sol.alphas.iter().enumerate() {
            if a > 0.0 {
                alphas.push(a);
                labels.push(data.label(i));
                support_vectors.push(data.example(i).to_vec());
            }
        }
        let weights = match params.kernel {
            Kernel::Linear => Some(linear_weights(&alphas, &labels, &support_vectors, data.dim())),
        };
        SvmModel {
            kernel: params.kernel,
            c: params.c,
            penalty: params.penalty,
            bias: sol.bias,
            alphas,
            labels,
            support_vectors,
            weights,
            dim: data.dim(),
        }
    }

    pub fn upper_bound(&self) -> f64 {
        match self.penalty {
            PenaltyForm::Conventional => self.c,
            PenaltyForm::Reciprocal => 1.0 / self.c,
        }
    }

    /// `Σ α_i y_i K(x_i, z) + b`.
    pub fn score(&self, z: &[f64]) -> Result<f64, SvmError> {
        if z.len() != self.dim {
            return Err(SvmError::InvalidArgument(format!(
                "input has dimension {}, model expects {}",
                z.len(),
                self.dim
            )));
        }
        let mut s = 0.0;
        for ((a, &y), x) in self.alphas.iter().zip(&self.labels).zip(&self.support_vectors) {
            s += a * y as f64 * self.kernel.eval(x, z);
        }
        Ok(s + self.bias)
    }

    /// Score and its sign; a zero score counts as `+1`.
    pub fn decide(&self, z: &[f64]) -> Result<(f64, i8), SvmError> {
        let s = self.score(z)?;
        Ok((s, if s >= 0.0 { 1 } else { -1 }))
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Largest KKT residual of this model on its training data.
    ///
    /// A multiplier is at a bound when it equals `0` (absent from the support
    /// set) or `C` exactly; SMO clips to the bounds exactly.
    pub fn kkt_violation(&self, data: &LabeledSet, alphas: &[f64]) -> Result<f64, SvmError> {
        let upper = self.upper_bound();
        let mut worst: f64 = 0.0;
        for (i, x) in data.examples().enumerate() {
            let margin = data.label(i) as f64 * self.score(x)?;
            let r = if alphas[i] == 0.0 {
                (1.0 - margin).max(0.0)
            } else if alphas[i] >= upper {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(r);
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&VersionedModel::V1(self.clone())).expect("model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, SvmError> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| SvmError::Serde(e.to_string()))?;
        match v.get("version").and_then(|v| v.as_str()) {
            Some("svm-v1") => {}
            Some(other) => return Err(SvmError::Version(other.to_string())),
            None => return Err(SvmError::Serde("missing `version`".into())),
        }
        match serde_json::from_value(v).map_err(|e| SvmError::Serde(e.to_string()))? {
            VersionedModel::V1(m) => Ok(m),
        }
    }
}

fn linear_weights(alphas: &[f64], labels: &[i8], xs: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    for ((a, &y), x) in alphas.iter().zip(labels).zip(xs) {
        let c = a * y as f64;
        w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += c * xi);
    }
    w
}

/// Train on `data`; also returns the full multiplier vector (one per example).
pub fn train_svm_detailed(data: &LabeledSet, params: &SvmParams) -> Result<(SvmModel, DualSolution), SvmError> {
    params.validate()?;
    if data.is_empty() {
        return Err(SvmError::InvalidArgument("no training examples".into()));
    }
    let g = gram(data.examples(), params.kernel)?;
    train_with_gram(data, &g, params)
}

/// Train using a Gram matrix precomputed for `data`.
pub fn train_with_gram(
    data: &LabeledSet,
    gram: &GramMatrix,
    params: &SvmParams,
) -> Result<(SvmModel, DualSolution), SvmError> {
    params.validate()?;
    let sol = solve_dual(gram, data.labels(), params.upper_bound(), params.tolerance, params.max_updates)?;
    Ok((SvmModel::from_solution(data, &sol, params), sol))
}

pub fn train_svm(data: &LabeledSet, c: f64) -> Result<SvmModel, SvmError> {
    train_svm_detailed(data, &SvmParams::with_c(c)).map(|(m, _)| m)
}

/// A partition of feature indices into per-channel blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelBlocks {
    blocks: Vec<Vec<usize>>,
}

impl ChannelBlocks {
    /// Every index in `0..dim` must appear in exactly one block.
    pub fn new(blocks: Vec<Vec<usize>>, dim: usize) -> Result<Self, SvmError> {
        let mut seen = vec![false; dim];
        for &i in blocks.iter().flatten() {
            if i >= dim {
                return Err(SvmError::InvalidArgument(format!("feature index {i} ≥ dimension {dim}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(SvmError::InvalidArgument(format!("feature index {i} appears twice")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(SvmError::InvalidArgument(format!("feature index {missing} is in no block")));
        }
        Ok(ChannelBlocks { blocks })
    }

    /// `channels` consecutive blocks of `per_channel` features each.
    pub fn contiguous(channels: usize, per_channel: usize) -> Self {
        ChannelBlocks {
            blocks: (0..channels)
                .map(|c| (c * per_channel..(c + 1) * per_channel).collect())
                .collect(),
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
}

/// Per block, the sum of `|w_l|` over its feature indices.
pub fn weight_magnitudes(weights: &[f64], blocks: &ChannelBlocks) -> Result<Vec<f64>, SvmError> {
    let dim: usize = blocks.blocks.iter().map(Vec::len).sum();
    if dim != weights.len() {
        return Err(SvmError::InvalidArgument(format!(
            "blocks cover {dim} features, weight vector has {}",
            weights.len()
        )));
    }
    Ok(blocks
        .blocks
        .iter()
        .map(|b| b.iter().map(|&i| weights[i].abs()).sum())
        .collect())
}
