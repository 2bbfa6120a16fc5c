//! ROC/AUC, performance regions, the command gate and fold planning.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// AUC above which a command moves the device.
pub const DEFAULT_GATE: f64 = 0.70;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("AUC is undefined without both classes ({positives} positives, {negatives} negatives)")]
    UndefinedAuc { positives: usize, negatives: usize },
}

/// Performance band of an AUC value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Region {
    /// `(0.80, 1]`
    Best,
    /// `(0.70, 0.80]`
    Accept,
    /// `(0.60, 0.70]`
    Worst,
    /// `[0, 0.60]`
    Fail,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Best => "BEST",
            Region::Accept => "ACCEPT",
            Region::Worst => "WORST",
            Region::Fail => "FAIL",
        })
    }
}

/// Intervals are open below and closed above.
pub fn region(auc: f64) -> Result<Region, MetricsError> {
    if !(0.0..=1.0).contains(&auc) {
        return Err(MetricsError::InvalidArgument(format!("AUC {auc} outside [0, 1]")));
    }
    Ok(if auc > 0.80 {
        Region::Best
    } else if auc > 0.70 {
        Region::Accept
    } else if auc > 0.60 {
        Region::Worst
    } else {
        Region::Fail
    })
}

/// `true` iff `auc` strictly exceeds the gate.
pub fn command_gate(auc: f64) -> bool {
    gate_with(auc, DEFAULT_GATE)
}

pub fn gate_with(auc: f64, threshold: f64) -> bool {
    auc > threshold
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RocPoint {
    /// Scores `≥ threshold` are called positive; `+∞` for the origin.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocResult {
    pub auc: f64,
    pub points: Vec<RocPoint>,
    pub region: Region,
}

fn class_counts(labels: &[i8]) -> Result<(usize, usize), MetricsError> {
    let mut p = 0;
    let mut n = 0;
    for &y in labels {
        match y {
            1 => p += 1,
            -1 => n += 1,
            other => {
                return Err(MetricsError::InvalidArgument(format!("label {other} is not ±1")));
            }
        }
    }
    Ok((p, n))
}

fn check_inputs(scores: &[f64], labels: &[i8]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::InvalidArgument("scores must be finite".into()));
    }
    let (p, n) = class_counts(labels)?;
    if p == 0 || n == 0 {
        return Err(MetricsError::UndefinedAuc {
            positives: p,
            negatives: n,
        });
    }
    Ok((p, n))
}

/// Mann–Whitney statistic: the fraction of (positive, negative) pairs the
/// scores order correctly, ties counting one half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[i8]) -> Result<f64, MetricsError> {
    let (p, n) = check_inputs(scores, labels)?;
    let mut neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == -1)
        .map(|(&s, _)| s)
        .collect();
    neg.sort_by(f64::total_cmp);
    // Twice the pair count, so ties stay integral.
    let mut twice: u128 = 0;
    for (&s, _) in scores.iter().zip(labels).filter(|(_, &y)| y == 1) {
        let below = neg.partition_point(|&v| v < s);
        let not_above = neg.partition_point(|&v| v <= s);
        twice += 2 * below as u128 + (not_above - below) as u128;
    }
    Ok(twice as f64 / (2.0 * p as f64 * n as f64))
}

/// ROC curve from `(0,0)` to `(1,1)`, one point per distinct score.
pub fn roc_points(scores: &[f64], labels: &[i8]) -> Result<Vec<RocPoint>, MetricsError> {
    let (p, n) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC polyline.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum()
}

pub fn roc_auc(scores: &[f64], labels: &[i8]) -> Result<RocResult, MetricsError> {
    let auc = mann_whitney_auc(scores, labels)?;
    let points = roc_points(scores, labels)?;
    Ok(RocResult {
        auc,
        points,
        region: region(auc)?,
    })
}

/// Write `threshold,fpr,tpr` rows.
pub fn write_roc_csv<W: Write>(roc: &RocResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "threshold,fpr,tpr")?;
    for p in &roc.points {
        writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    Ok(())
}

/// `p` disjoint index sets covering `0..m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// All indices outside the listed folds, ascending.
    pub fn complement(&self, excluded: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| !excluded.contains(f))
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn fold(&self, f: usize) -> Vec<usize> {
        let mut v = self.folds[f].clone();
        v.sort_unstable();
        v
    }
}

fn check_fold_args(m: usize, p: usize) -> Result<(), MetricsError> {
    if p < 2 {
        return Err(MetricsError::InvalidArgument(format!("need at least 2 folds, got {p}")));
    }
    if m < p {
        return Err(MetricsError::InvalidArgument(format!("{m} examples cannot fill {p} folds")));
    }
    Ok(())
}

/// Seeded shuffle of `0..m` dealt round-robin into `p` folds.
pub fn tenfold(m: usize, p: usize, seed: u64) -> Result<FoldPlan, MetricsError> {
    check_fold_args(m, p)?;
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(deal(idx, p, seed))
}

/// Like [`tenfold`], but each class is shuffled separately and dealt in turn
/// so that every fold receives a near-equal share of both classes.
pub fn stratified_folds(labels: &[i8], p: usize, seed: u64) -> Result<FoldPlan, MetricsError> {
    check_fold_args(labels.len(), p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(labels.len());
    for class in [1i8, -1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        order.extend(idx);
    }
    Ok(deal(order, p, seed))
}

fn deal(order: Vec<usize>, p: usize, seed: u64) -> FoldPlan {
    let mut folds = vec![Vec::new(); p];
    for (t, i) in order.into_iter().enumerate() {
        folds[t % p].push(i);
    }
    FoldPlan { folds, seed }
}
