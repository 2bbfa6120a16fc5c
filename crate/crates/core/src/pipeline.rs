//! End-to-end helpers: channel selection, ensemble training, evaluation and
//! batch decoding of recorded sessions.

use serde::{Deserialize, Serialize};

use crate::channel_select::{rce, ChannelData, ChannelRanking, RceConfig};
use crate::dataio::SessionSet;
use crate::ensemble::{evaluate_ensemble, train_ensemble, vote, Ensemble, EnsembleConfig, Evaluation, Group, Vote};
use crate::features::{extract_windows, task_set, ExampleWindow, FeatureSpec, FeatureSettings, WindowConfig};
use crate::online::{BlockTag, WindowOutcome};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub features: FeatureSettings,
    pub rce: RceConfig,
    pub ensemble: EnsembleConfig,
}

fn montage(set: &SessionSet) -> Result<Vec<u16>> {
    set.sessions
        .first()
        .map(|s| s.channel_ids().to_vec())
        .ok_or_else(|| Error::Invalid("dataset holds no sessions".into()))
}

fn windows(set: &SessionSet, cfg: &WindowConfig) -> Result<Vec<ExampleWindow>> {
    let w = extract_windows(set, cfg)?;
    if w.is_empty() {
        return Err(Error::Invalid("no complete window fits in any block".into()));
    }
    Ok(w)
}

fn views(w: &[ExampleWindow]) -> Vec<ndarray::ArrayView2<'_, f64>> {
    w.iter().map(|w| w.samples.view()).collect()
}

/// Fit the feature extractor on every window of `set`, restricted to
/// `channel_ids`.
pub fn fit_features(set: &SessionSet, channel_ids: &[u16], cfg: &PipelineConfig) -> Result<FeatureSpec> {
    let montage = montage(set)?;
    let w = windows(set, &cfg.window)?;
    Ok(FeatureSpec::fit(&views(&w), &montage, channel_ids, &cfg.features)?)
}

/// Task-versus-rest examples over the full montage, grouped by channel.
pub fn channel_data(set: &SessionSet, cfg: &PipelineConfig) -> Result<ChannelData> {
    let montage = montage(set)?;
    let w = windows(set, &cfg.window)?;
    let spec = FeatureSpec::fit(&views(&w), &montage, &montage, &cfg.features)?;
    let ts = task_set(&spec, &w, &montage)?;
    Ok(ChannelData::new(montage, spec.k(), ts.task_vs_rest())?)
}

/// Recursive channel elimination on the task-versus-rest problem.
pub fn select_channels(set: &SessionSet, cfg: &PipelineConfig) -> Result<ChannelRanking> {
    Ok(rce(&channel_data(set, cfg)?, &cfg.rce)?)
}

fn train_one(set: &SessionSet, spec: &FeatureSpec, group: Group, cfg: &PipelineConfig) -> Result<Ensemble> {
    let montage = montage(set)?;
    let w = windows(set, &cfg.window)?;
    let data = task_set(spec, &w, &montage)?.restrict_to(group);
    let mut e = train_ensemble(&data, group, &cfg.ensemble)?;
    e.features = Some(spec.clone());
    Ok(e)
}

/// Train one group on `channel_ids`.
pub fn train_group(set: &SessionSet, channel_ids: &[u16], group: Group, cfg: &PipelineConfig) -> Result<Ensemble> {
    let spec = fit_features(set, channel_ids, cfg)?;
    train_one(set, &spec, group, cfg)
}

/// Train E1 and E2 on a shared feature extractor.
pub fn train_pair(set: &SessionSet, channel_ids: &[u16], cfg: &PipelineConfig) -> Result<(Ensemble, Ensemble)> {
    let spec = fit_features(set, channel_ids, cfg)?;
    Ok((train_one(set, &spec, Group::E1, cfg)?, train_one(set, &spec, Group::E2, cfg)?))
}

fn spec_of(e: &Ensemble) -> Result<&FeatureSpec> {
    e.features
        .as_ref()
        .ok_or_else(|| Error::Invalid(format!("ensemble {} carries no feature spec", e.group)))
}

/// Held-out evaluation of `ensemble` on the windows of `set`.
pub fn evaluate_group(ensemble: &Ensemble, set: &SessionSet, window: &WindowConfig) -> Result<Evaluation> {
    let montage = montage(set)?;
    let w = windows(set, window)?;
    let data = task_set(spec_of(ensemble)?, &w, &montage)?.restrict_to(ensemble.group);
    Ok(evaluate_ensemble(ensemble, &data)?)
}

/// Per-window votes of both ensembles, computed in batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchVote {
    pub session: usize,
    pub trial: usize,
    pub block: usize,
    pub offset: usize,
    pub vote_e1: Vote,
    pub vote_e2: Vote,
}

pub fn batch_votes(e1: &Ensemble, e2: &Ensemble, set: &SessionSet, window: &WindowConfig) -> Result<Vec<BatchVote>> {
    let montage = montage(set)?;
    let spec1 = spec_of(e1)?;
    let spec2 = spec_of(e2)?;
    extract_windows(set, window)?
        .iter()
        .map(|w| {
            let z1 = spec1.transform_montage(w.samples.view(), &montage)?;
            let z2 = spec2.transform_montage(w.samples.view(), &montage)?;
            Ok(BatchVote {
                session: w.session,
                trial: w.trial,
                block: w.block,
                offset: w.offset,
                vote_e1: vote(e1, &z1)?,
                vote_e2: vote(e2, &z2)?,
            })
        })
        .collect()
}

fn same_vote(a: &Vote, b: &Vote) -> bool {
    a.decision == b.decision
        && a.positives == b.positives
        && a.score.to_bits() == b.score.to_bits()
        && a.member_scores.len() == b.member_scores.len()
        && a.member_scores.iter().zip(&b.member_scores).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Windows whose streamed votes differ from the batch votes, bit for bit.
/// A difference in window count counts every unmatched window.
pub fn count_mismatches(batch: &[BatchVote], online: &[WindowOutcome]) -> usize {
    let key = |t: &BlockTag, offset: usize| (t.session, t.trial, t.block, offset);
    let mut mismatches = batch.len().abs_diff(online.len());
    for (b, o) in batch.iter().zip(online) {
        if (b.session, b.trial, b.block, b.offset) != key(&o.tag, o.offset)
            || !same_vote(&b.vote_e1, &o.vote_e1)
            || !same_vote(&b.vote_e2, &o.vote_e2)
        {
            mismatches += 1;
        }
    }
    mismatches
}
