//! k-of-n majority-voting SVM groups.
//!
//! Group `E1` separates RIGHT from REST, `E2` separates LEFT from REST. Each
//! of the `n` members is a linear SVM trained on the data with one
//! cross-validation fold held out (member `i` omits fold `i`). A pattern is
//! POSITIVE when at least `k` members vote `+1`, NEGATIVE when at most `n − k`
//! do, and UNKNOWN otherwise. The continuous ensemble score is the mean member
//! score.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataio::TaskLabel;
use crate::features::FeatureSpec;
use crate::metrics::{mann_whitney_auc, roc_auc, stratified_folds, MetricsError, RocResult};
use crate::svm::{self, GramMatrix, Kernel, LabeledSet, SvmError, SvmModel, SvmParams};

pub const ENSEMBLE_VERSION: &str = "ens-v1";

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("unsupported ensemble version `{0}`")]
    Version(String),
    #[error("malformed ensemble bundle: {0}")]
    Serde(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    E1,
    E2,
}

impl Group {
    /// The task trained as the positive class.
    pub fn positive_label(self) -> TaskLabel {
        match self {
            Group::E1 => TaskLabel::Right,
            Group::E2 => TaskLabel::Left,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::E1 => "E1",
            Group::E2 => "E2",
        })
    }
}

impl std::str::FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "E1" => Ok(Group::E1),
            "E2" => Ok(Group::E2),
            _ => Err(format!("unknown group `{s}` (expected E1 or E2)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Positive,
    Negative,
    Unknown,
}

impl Decision {
    /// `+1`, `−1`, or `0` for the unknown outcome.
    pub fn value(self) -> i8 {
        match self {
            Decision::Positive => 1,
            Decision::Negative => -1,
            Decision::Unknown => 0,
        }
    }
}

/// Checks `n/2 ≤ k ≤ n`, `n ≥ 1`.
pub fn check_threshold(n: usize, k: usize) -> Result<(), EnsembleError> {
    if n == 0 || k > n || 2 * k < n {
        return Err(EnsembleError::InvalidArgument(format!(
            "vote threshold k = {k} must satisfy n/2 ≤ k ≤ n for n = {n}"
        )));
    }
    Ok(())
}

/// The k-of-n rule on a count of positive votes.
pub fn majority_rule(positives: usize, n: usize, k: usize) -> Result<Decision, EnsembleError> {
    check_threshold(n, k)?;
    if positives > n {
        return Err(EnsembleError::InvalidArgument(format!("{positives} positive votes out of {n}")));
    }
    Ok(if positives >= k {
        Decision::Positive
    } else if positives <= n - k {
        Decision::Negative
    } else {
        Decision::Unknown
    })
}

/// Member outputs for one pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub decision: Decision,
    pub positives: usize,
    /// Mean member score.
    pub score: f64,
    pub member_scores: Vec<f64>,
}

/// `y[j][i] = 1` when member `i` assigns pattern `j` its true class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VoteMatrix {
    pub rows: Vec<Vec<u8>>,
    pub members: usize,
}

impl VoteMatrix {
    pub fn patterns(&self) -> usize {
        self.rows.len()
    }

    /// Correct assignments of member `i`.
    pub fn n1(&self, i: usize) -> usize {
        self.rows.iter().map(|r| r[i] as usize).sum()
    }

    /// Incorrect assignments of member `i`.
    pub fn n0(&self, i: usize) -> usize {
        self.patterns() - self.n1(i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n: usize,
    pub k: usize,
    pub folds: usize,
    pub c_grid: Vec<f64>,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n: 6,
            k: 4,
            folds: 10,
            c_grid: vec![1.0],
            seed: 0,
            tolerance: 1e-6,
        }
    }
}

/// Training record of one member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberInfo {
    pub omitted_fold: usize,
    pub fold_seed: u64,
    pub c: f64,
    /// AUC on the omitted fold.
    pub holdout_auc: Option<f64>,
    /// Mean inner-fold AUC per candidate C, in grid order. Empty when the
    /// grid has a single value.
    pub c_search: Vec<(f64, f64)>,
    /// Inner-fold AUCs of the chosen C.
    pub fold_aucs: Vec<f64>,
    pub training_auc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub group: Group,
    pub k: usize,
    pub members: Vec<SvmModel>,
    pub info: Vec<MemberInfo>,
    /// How raw windows become the members' inputs.
    pub features: Option<FeatureSpec>,
}

#[derive(Serialize, Deserialize)]
struct Bundle {
    version: String,
    group: Group,
    k: usize,
    n: usize,
    members: Vec<Value>,
    info: Vec<MemberInfo>,
    features: Option<FeatureSpec>,
}

impl Ensemble {
    /// Assemble an ensemble from already trained members.
    pub fn from_members(group: Group, k: usize, members: Vec<SvmModel>) -> Result<Self, EnsembleError> {
        check_threshold(members.len(), k)?;
        let dim = members[0].dim;
        if members.iter().any(|m| m.dim != dim) {
            return Err(EnsembleError::InvalidArgument("members differ in feature dimension".into()));
        }
        Ok(Ensemble {
            group,
            k,
            members,
            info: Vec::new(),
            features: None,
        })
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim
    }

    pub fn with_threshold(&self, k: usize) -> Result<Self, EnsembleError> {
        check_threshold(self.n(), k)?;
        Ok(Ensemble { k, ..self.clone() })
    }

    pub fn to_json(&self) -> String {
        let bundle = Bundle {
            version: ENSEMBLE_VERSION.into(),
            group: self.group,
            k: self.k,
            n: self.n(),
            members: self
                .members
                .iter()
                .map(|m| serde_json::from_str(&m.to_json()).expect("valid json"))
                .collect(),
            info: self.info.clone(),
            features: self.features.clone(),
        };
        serde_json::to_string_pretty(&bundle).expect("bundle serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, EnsembleError> {
        let bundle: Bundle = serde_json::from_str(s).map_err(|e| EnsembleError::Serde(e.to_string()))?;
        if bundle.version != ENSEMBLE_VERSION {
            return Err(EnsembleError::Version(bundle.version));
        }
        if bundle.members.len() != bundle.n {
            return Err(EnsembleError::Serde(format!(
                "bundle declares {} members but holds {}",
                bundle.n,
                bundle.members.len()
            )));
        }
        let members = bundle
            .members
            .iter()
            .map(|v| SvmModel::from_json(&v.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut e = Ensemble::from_members(bundle.group, bundle.k, members)?;
        e.info = bundle.info;
        e.features = bundle.features;
        Ok(e)
    }
}

/// Mean inner-fold AUC of `c` when training on `outer` minus each inner fold.
fn inner_cv(
    data: &LabeledSet,
    gram: &GramMatrix,
    folds: &[Vec<usize>],
    omitted: usize,
    c: f64,
    tolerance: f64,
) -> Result<Vec<f64>, EnsembleError> {
    let params = SvmParams {
        tolerance,
        ..SvmParams::with_c(c)
    };
    let mut aucs = Vec::new();
    for (j, test) in folds.iter().enumerate() {
        if j == omitted {
            continue;
        }
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != omitted && *f != j)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let sub = data.subset(&train);
        if !sub.has_both_classes() {
            continue;
        }
        let (model, _) = svm::train_with_gram(&sub, &gram.submatrix(&train), &params)?;
        let scores = test.iter().map(|&i| model.score(data.example(i))).collect::<Result<Vec<_>, _>>()?;
        let labels: Vec<i8> = test.iter().map(|&i| data.label(i)).collect();
        match mann_whitney_auc(&scores, &labels) {
            Ok(a) => aucs.push(a),
            Err(MetricsError::UndefinedAuc { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(aucs)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Train `cfg.n` members on fold rotations of `data` (labels already `±1` for
/// the group).
pub fn train_ensemble(data: &LabeledSet, group: Group, cfg: &EnsembleConfig) -> Result<Ensemble, EnsembleError> {
    check_threshold(cfg.n, cfg.k)?;
    if cfg.c_grid.is_empty() {
        return Err(EnsembleError::InvalidArgument("empty C grid".into()));
    }
    if let Some(c) = cfg.c_grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(EnsembleError::InvalidArgument(format!("C values must be positive, got {c}")));
    }
    if cfg.n > cfg.folds {
        return Err(EnsembleError::InvalidArgument(format!(
            "{} members need at least as many folds, got {}",
            cfg.n, cfg.folds
        )));
    }
    for (i, &y) in data.labels().iter().enumerate() {
        if y != 1 && y != -1 {
            return Err(EnsembleError::InvalidArgument(format!("label {y} at example {i} is not ±1")));
        }
    }
    if !data.has_both_classes() {
        let only = data.labels().first().copied().unwrap_or(-1);
        return Err(SvmError::SingleClass(only).into());
    }
    if data.len() < 2 * cfg.folds {
        return Err(EnsembleError::InvalidArgument(format!(
            "{} examples are fewer than twice the fold count {}",
            data.len(),
            cfg.folds
        )));
    }
    let plan = stratified_folds(data.labels(), cfg.folds, cfg.seed)?;
    let gram = svm::gram(data.examples(), Kernel::Linear)?;

    let trained: Vec<(SvmModel, MemberInfo)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| -> Result<_, EnsembleError> {
            let (c, c_search, fold_aucs) = if cfg.c_grid.len() == 1 {
                (cfg.c_grid[0], Vec::new(), Vec::new())
            } else {
                let mut best: Option<(f64, f64, Vec<f64>)> = None;
                let mut search = Vec::new();
                for &c in &cfg.c_grid {
                    let aucs = inner_cv(data, &gram, &plan.folds, i, c, cfg.tolerance)?;
                    let m = mean(&aucs);
                    search.push((c, m));
                    let better = match &best {
                        None => true,
                        Some((bc, bm, _)) => m > *bm || (m == *bm && c < *bc) || bm.is_nan() && !m.is_nan(),
                    };
                    if better {
                        best = Some((c, m, aucs));
                    }
                }
                let (c, _, aucs) = best.expect("non-empty grid");
                (c, search, aucs)
            };
            let train = plan.complement(&[i]);
            let sub = data.subset(&train);
            let params = SvmParams {
                tolerance: cfg.tolerance,
                ..SvmParams::with_c(c)
            };
            let (model, _) = svm::train_with_gram(&sub, &gram.submatrix(&train), &params)?;
            let test = plan.fold(i);
            let score = |idx: &[usize]| -> Result<(Vec<f64>, Vec<i8>), SvmError> {
                let s = idx.iter().map(|&j| model.score(data.example(j))).collect::<Result<_, _>>()?;
                Ok((s, idx.iter().map(|&j| data.label(j)).collect()))
            };
            let (hs, hl) = score(&test)?;
            let (ts, tl) = score(&train)?;
            let info = MemberInfo {
                omitted_fold: i,
                fold_seed: cfg.seed,
                c,
                holdout_auc: mann_whitney_auc(&hs, &hl).ok(),
                c_search,
                fold_aucs,
                training_auc: mann_whitney_auc(&ts, &tl)?,
            };
            Ok((model, info))
        })
        .collect::<Result<_, _>>()?;

    let (members, info): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    let mut e = Ensemble::from_members(group, cfg.k, members)?;
    e.info = info;
    Ok(e)
}

/// Member votes and the k-of-n decision for one pattern.
pub fn vote(ensemble: &Ensemble, z: &[f64]) -> Result<Vote, EnsembleError> {
    let mut member_scores = Vec::with_capacity(ensemble.n());
    let mut positives = 0;
    for m in &ensemble.members {
        let (s, sign) = m.decide(z)?;
        member_scores.push(s);
        if sign > 0 {
            positives += 1;
        }
    }
    let score = member_scores.iter().sum::<f64>() / ensemble.n() as f64;
    Ok(Vote {
        decision: majority_rule(positives, ensemble.n(), ensemble.k)?,
        positives,
        score,
        member_scores,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub votes: VoteMatrix,
    pub roc: RocResult,
    pub decisions: Vec<Decision>,
    pub unknown: usize,
}

/// Vote matrix and ROC of the mean member score on `test`.
pub fn evaluate_ensemble(ensemble: &Ensemble, test: &LabeledSet) -> Result<Evaluation, EnsembleError> {
    let pos = test.labels().iter().filter(|&&y| y > 0).count();
    if pos == 0 || pos == test.len() {
        return Err(MetricsError::UndefinedAuc {
            positives: pos,
            negatives: test.len() - pos,
        }
        .into());
    }
    let votes: Vec<Vote> = test
        .examples()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|z| vote(ensemble, z))
        .collect::<Result<_, _>>()?;
    let rows = votes
        .iter()
        .zip(test.labels())
        .map(|(v, &y)| {
            v.member_scores
                .iter()
                .map(|&s| {
                    let sign = if s >= 0.0 { 1 } else { -1 };
                    u8::from(sign == y)
                })
                .collect()
        })
        .collect();
    let scores: Vec<f64> = votes.iter().map(|v| v.score).collect();
    let decisions: Vec<Decision> = votes.iter().map(|v| v.decision).collect();
    Ok(Evaluation {
        votes: VoteMatrix {
            rows,
            members: ensemble.n(),
        },
        roc: roc_auc(&scores, test.labels())?,
        unknown: decisions.iter().filter(|&&d| d == Decision::Unknown).count(),
        decisions,
    })
}
