//! Recursive channel elimination.
//!
//! Per cross-validation fold, channels are removed one at a time until the
//! target count survives. Each round scores channels with linear SVMs trained
//! on the training part of the fold and eliminates the channel with the
//! smallest ranking score `R = (1/|Ch|) Σ_{l ∈ Ch} |w_l|`:
//!
//! - [`RceMode::Full`] retrains once per surviving channel with that channel
//!   temporarily removed; `Ch` is the set of remaining features.
//! - [`RceMode::Fast`] trains once per round; `Ch` is each channel's own
//!   feature block.
//!
//! Folds are merged into one survivor set by mean survival round, then mean
//! final score, then lower channel id.
//!
//! Feature Gram matrices are additive over channels, so per-channel Gram
//! blocks are computed once and every candidate subset's Gram matrix is a sum
//! or difference of them.

use std::collections::BTreeSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{stratified_folds, MetricsError};
use crate::svm::{self, GramMatrix, Kernel, LabeledSet, SvmError, SvmParams};

#[derive(Debug, Error, PartialEq)]
pub enum RceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("every fold was degenerate; no ranking could be computed")]
    AllFoldsSkipped,
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Labelled examples whose features are grouped in equal per-channel blocks,
/// in the order of `channel_ids`.
#[derive(Clone, Debug)]
pub struct ChannelData {
    channel_ids: Vec<u16>,
    per_channel: usize,
    set: LabeledSet,
}

impl ChannelData {
    pub fn new(channel_ids: Vec<u16>, per_channel: usize, set: LabeledSet) -> Result<Self, RceError> {
        if channel_ids.is_empty() || per_channel == 0 {
            return Err(RceError::InvalidArgument("need at least one channel and one feature per channel".into()));
        }
        if set.dim() != channel_ids.len() * per_channel {
            return Err(RceError::InvalidArgument(format!(
                "{} features do not split into {} channels × {per_channel}",
                set.dim(),
                channel_ids.len()
            )));
        }
        let unique: BTreeSet<u16> = channel_ids.iter().copied().collect();
        if unique.len() != channel_ids.len() {
            return Err(RceError::InvalidArgument("duplicate channel ids".into()));
        }
        Ok(ChannelData {
            channel_ids,
            per_channel,
            set,
        })
    }

    pub fn channel_ids(&self) -> &[u16] {
        &self.channel_ids
    }

    pub fn per_channel(&self) -> usize {
        self.per_channel
    }

    pub fn set(&self) -> &LabeledSet {
        &self.set
    }

    fn block(&self, example: usize, channel: usize) -> &[f64] {
        let x = self.set.example(example);
        &x[channel * self.per_channel..(channel + 1) * self.per_channel]
    }

    /// Reorder channels (and their feature blocks).
    pub fn permuted(&self, order: &[usize]) -> ChannelData {
        let features: Vec<usize> = order
            .iter()
            .flat_map(|&c| c * self.per_channel..(c + 1) * self.per_channel)
            .collect();
        ChannelData {
            channel_ids: order.iter().map(|&c| self.channel_ids[c]).collect(),
            per_channel: self.per_channel,
            set: self.set.select_features(&features),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RceMode {
    #[default]
    Full,
    Fast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RceConfig {
    pub target: usize,
    pub folds: usize,
    pub c: f64,
    pub mode: RceMode,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for RceConfig {
    fn default() -> Self {
        RceConfig {
            target: crate::DEFAULT_TARGET_CHANNELS,
            folds: 10,
            c: 1.0,
            mode: RceMode::Full,
            seed: 0,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Channels present when the round started.
    pub channels: usize,
    pub eliminated: Option<u16>,
    /// Ranking score of every surviving channel this round.
    pub scores: Vec<(u16, f64)>,
    /// 0/1 error on the held-out fold of the model behind the decision.
    pub test_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldHistory {
    pub fold: usize,
    /// Set when the fold was degenerate and left out of the ranking.
    pub skipped: Option<String>,
    /// Eliminated channels, first eliminated first.
    pub eliminated: Vec<u16>,
    pub survivors: Vec<u16>,
    pub rounds: Vec<RoundRecord>,
    /// Held-out error with the target channel count.
    pub test_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub per_fold: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorPoint {
    pub channels: usize,
    pub mean_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelRanking {
    /// Non-surviving channels, first eliminated first.
    pub ranked: Vec<u16>,
    /// Retained channels, strongest first.
    pub survivors: Vec<u16>,
    pub folds: Vec<FoldHistory>,
    /// Mean held-out error for each channel count visited.
    pub error_curve: Vec<ErrorPoint>,
    pub generalization: ErrorSummary,
}

/// Mean 0/1 error over folds.
pub fn generalization_error(per_fold: &[f64]) -> Result<ErrorSummary, RceError> {
    if per_fold.is_empty() {
        return Err(RceError::InvalidArgument("no fold results".into()));
    }
    Ok(ErrorSummary {
        mean: per_fold.iter().sum::<f64>() / per_fold.len() as f64,
        per_fold: per_fold.to_vec(),
    })
}

/// Per-channel Gram blocks over all examples.
fn channel_grams(data: &ChannelData) -> Vec<GramMatrix> {
    (0..data.channel_ids.len())
        .into_par_iter()
        .map(|c| {
            svm::gram((0..data.set.len()).map(|i| data.block(i, c)), Kernel::Linear)
                .expect("non-empty, equal-length blocks")
        })
        .collect()
}

struct Scored {
    score: f64,
    test_error: f64,
}

struct FoldContext<'a> {
    data: &'a ChannelData,
    train: Vec<usize>,
    test: Vec<usize>,
    labels: Vec<i8>,
    grams: Vec<GramMatrix>,
    params: SvmParams,
}

impl FoldContext<'_> {
    fn gram_of(&self, channels: &[usize]) -> GramMatrix {
        let mut g = GramMatrix::zeros(self.train.len());
        for &c in channels {
            g.add_assign(&self.grams[c]);
        }
        g
    }

    /// Train on `channels` with Gram `g`; returns per-channel weight blocks,
    /// bias and held-out error.
    fn train(&self, channels: &[usize], g: &GramMatrix) -> Result<(Vec<Vec<f64>>, f64), SvmError> {
        let sol = svm::solve_dual(g, &self.labels, self.params.upper_bound(), self.params.tolerance, self.params.max_updates)?;
        let k = self.data.per_channel;
        let mut w = vec![vec![0.0; k]; channels.len()];
        for (t, &i) in self.train.iter().enumerate() {
            let a = sol.alphas[t];
            if a == 0.0 {
                continue;
            }
            let coef = a * self.labels[t] as f64;
            for (slot, &c) in channels.iter().enumerate() {
                w[slot].iter_mut().zip(self.data.block(i, c)).for_each(|(wi, xi)| *wi += coef * xi);
            }
        }
        Ok((w, sol.bias))
    }

    fn test_error(&self, channels: &[usize], w: &[Vec<f64>], bias: f64) -> f64 {
        if self.test.is_empty() {
            return 0.0;
        }
        let wrong = self
            .test
            .iter()
            .filter(|&&i| {
                let s: f64 = channels
                    .iter()
                    .zip(w)
                    .map(|(&c, wc)| svm::dot(wc, self.data.block(i, c)))
                    .sum::<f64>()
                    + bias;
                let predicted = if s >= 0.0 { 1 } else { -1 };
                predicted != self.data.set.label(i)
            })
            .count();
        wrong as f64 / self.test.len() as f64
    }

    /// Score every channel in `surviving`.
    fn score_round(&self, surviving: &[usize], total: &GramMatrix, mode: RceMode) -> Result<Vec<Scored>, SvmError> {
        let k = self.data.per_channel as f64;
        match mode {
            RceMode::Fast => {
                let (w, b) = self.train(surviving, total)?;
                let err = self.test_error(surviving, &w, b);
                Ok(w
                    .iter()
                    .map(|wc| Scored {
                        score: wc.iter().map(|v| v.abs()).sum::<f64>() / k,
                        test_error: err,
                    })
                    .collect())
            }
            RceMode::Full => surviving
                .par_iter()
                .map(|&removed| {
                    let rest: Vec<usize> = surviving.iter().copied().filter(|&c| c != removed).collect();
                    if rest.is_empty() {
                        return Ok(Scored { score: 0.0, test_error: 0.0 });
                    }
                    let mut g = total.clone();
                    g.sub_assign(&self.grams[removed]);
                    let (w, b) = self.train(&rest, &g)?;
                    let n_features = rest.len() as f64 * k;
                    let score = w.iter().flatten().map(|v| v.abs()).sum::<f64>() / n_features;
                    Ok(Scored {
                        score,
                        test_error: self.test_error(&rest, &w, b),
                    })
                })
                .collect(),
        }
    }
}

fn run_fold(
    data: &ChannelData,
    all_grams: &[GramMatrix],
    fold: usize,
    train: Vec<usize>,
    test: Vec<usize>,
    cfg: &RceConfig,
) -> Result<(FoldHistory, Vec<f64>), RceError> {
    let ids = &data.channel_ids;
    let labels: Vec<i8> = train.iter().map(|&i| data.set.label(i)).collect();
    if !(labels.contains(&1) && labels.contains(&-1)) {
        let reason = format!("fold {fold}: training part holds a single class");
        warn!("recursive channel elimination: {reason}, fold skipped");
        return Ok((
            FoldHistory {
                fold,
                skipped: Some(reason),
                eliminated: vec![],
                survivors: vec![],
                rounds: vec![],
                test_error: f64::NAN,
            },
            vec![],
        ));
    }
    let ctx = FoldContext {
        data,
        grams: all_grams.iter().map(|g| g.submatrix(&train)).collect(),
        labels,
        train,
        test,
        params: SvmParams {
            tolerance: cfg.tolerance,
            ..SvmParams::with_c(cfg.c)
        },
    };

    let mut surviving: Vec<usize> = (0..ids.len()).collect();
    let mut total = ctx.gram_of(&surviving);
    let mut rounds = Vec::new();
    let mut eliminated = Vec::new();
    // Final ranking score per channel position.
    let mut last_score = vec![0.0; ids.len()];
    let mut round = 0;
    loop {
        round += 1;
        let scored = ctx.score_round(&surviving, &total, cfg.mode)?;
        for (&c, s) in surviving.iter().zip(&scored) {
            last_score[c] = s.score;
        }
        let scores: Vec<(u16, f64)> = surviving.iter().zip(&scored).map(|(&c, s)| (ids[c], s.score)).collect();
        if surviving.len() <= cfg.target {
            let err = scored.first().map_or(0.0, |s| s.test_error);
            let err = if cfg.mode == RceMode::Full {
                // Held-out error of the model on all survivors.
                let (w, b) = ctx.train(&surviving, &total)?;
                ctx.test_error(&surviving, &w, b)
            } else {
                err
            };
            rounds.push(RoundRecord {
                round,
                channels: surviving.len(),
                eliminated: None,
                scores,
                test_error: err,
            });
            break;
        }
        // argmin score, ties to the lower channel id
        let pos = (0..surviving.len())
            .min_by(|&a, &b| {
                scored[a]
                    .score
                    .total_cmp(&scored[b].score)
                    .then(ids[surviving[a]].cmp(&ids[surviving[b]]))
            })
            .expect("non-empty");
        let victim = surviving.remove(pos);
        total.sub_assign(&ctx.grams[victim]);
        eliminated.push(ids[victim]);
        rounds.push(RoundRecord {
            round,
            channels: surviving.len() + 1,
            eliminated: Some(ids[victim]),
            scores,
            test_error: scored[pos].test_error,
        });
    }
    let test_error = rounds.last().map_or(0.0, |r| r.test_error);
    let survivors = surviving.iter().map(|&c| ids[c]).collect();
    Ok((
        FoldHistory {
            fold,
            skipped: None,
            eliminated,
            survivors,
            rounds,
            test_error,
        },
        last_score,
    ))
}

/// Recursive channel elimination down to `cfg.target` channels.
pub fn rce(data: &ChannelData, cfg: &RceConfig) -> Result<ChannelRanking, RceError> {
    let n_channels = data.channel_ids.len();
    if cfg.target == 0 || cfg.target > n_channels {
        return Err(RceError::InvalidArgument(format!(
            "target {} outside 1..={n_channels}",
            cfg.target
        )));
    }
    if !(cfg.c > 0.0) {
        return Err(RceError::InvalidArgument(format!("C must be positive, got {}", cfg.c)));
    }
    let plan = stratified_folds(data.set.labels(), cfg.folds, cfg.seed)?;
    let grams = channel_grams(data);
    let results: Vec<(FoldHistory, Vec<f64>)> = (0..plan.len())
        .into_par_iter()
        .map(|f| run_fold(data, &grams, f, plan.complement(&[f]), plan.fold(f), cfg))
        .collect::<Result<_, _>>()?;

    let active: Vec<&(FoldHistory, Vec<f64>)> = results.iter().filter(|(h, _)| h.skipped.is_none()).collect();
    if active.is_empty() {
        return Err(RceError::AllFoldsSkipped);
    }
    let rounds_total = n_channels - cfg.target;
    let nf = active.len() as f64;
    let mut keys: Vec<(usize, f64, f64)> = (0..n_channels)
        .map(|c| {
            let id = data.channel_ids[c];
            let survival: f64 = active
                .iter()
                .map(|(h, _)| match h.eliminated.iter().position(|&e| e == id) {
                    Some(p) => (p + 1) as f64,
                    None => (rounds_total + 1) as f64,
                })
                .sum::<f64>()
                / nf;
            let score: f64 = active.iter().map(|(_, s)| s[c]).sum::<f64>() / nf;
            (c, survival, score)
        })
        .collect();
    // strongest first
    keys.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(b.2.total_cmp(&a.2))
            .then(data.channel_ids[a.0].cmp(&data.channel_ids[b.0]))
    });
    let survivors: Vec<u16> = keys[..cfg.target].iter().map(|k| data.channel_ids[k.0]).collect();
    let ranked: Vec<u16> = keys[cfg.target..].iter().rev().map(|k| data.channel_ids[k.0]).collect();

    let error_curve = (cfg.target..=n_channels)
        .rev()
        .map(|channels| {
            let errs: Vec<f64> = active
                .iter()
                .filter_map(|(h, _)| h.rounds.iter().find(|r| r.channels == channels).map(|r| r.test_error))
                .collect();
            ErrorPoint {
                channels,
                mean_error: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
            }
        })
        .collect();
    let per_fold: Vec<f64> = active.iter().map(|(h, _)| h.test_error).collect();
    Ok(ChannelRanking {
        ranked,
        survivors,
        folds: results.into_iter().map(|(h, _)| h).collect(),
        error_curve,
        generalization: generalization_error(&per_fold)?,
    })
}
