//! Online decoding: ensemble scores per window, AUC against a rest baseline,
//! and gated direction commands.

use serde::{Deserialize, Serialize};

use crate::ensemble::{vote, Decision, Ensemble, EnsembleError, Vote};
use crate::features::{channel_rows, select_rows};
use crate::metrics::{gate_with, mann_whitney_auc, DEFAULT_GATE};

use super::protocol::{Command, Direction};
use super::window::{BlockTag, Window};
use crate::dataio::BlockKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub gate: f64,
    /// Rest windows required before task windows are judged.
    pub min_baseline: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            gate: DEFAULT_GATE,
            min_baseline: 10,
        }
    }
}

/// RIGHT when E1 passes the gate and beats E2, LEFT symmetrically, NONE on
/// an exact tie or when neither passes.
pub fn arbitrate(auc_e1: f64, auc_e2: f64, gate: f64) -> Direction {
    let g1 = gate_with(auc_e1, gate);
    let g2 = gate_with(auc_e2, gate);
    if g1 && (!g2 || auc_e1 > auc_e2) {
        Direction::Right
    } else if g2 && (!g1 || auc_e2 > auc_e1) {
        Direction::Left
    } else {
        Direction::None
    }
}

/// Ensemble scores gathered over a block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreBuffer {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
}

impl ScoreBuffer {
    pub fn len(&self) -> usize {
        self.e1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e1.is_empty()
    }

    pub fn push(&mut self, e1: f64, e2: f64) {
        self.e1.push(e1);
        self.e2.push(e2);
    }

    pub fn clear(&mut self) {
        self.e1.clear();
        self.e2.clear();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub direction: Direction,
    pub auc_e1: f64,
    pub auc_e2: f64,
    /// Set when the baseline was too short to judge.
    pub insufficient_baseline: bool,
}

/// AUC of the task scores against the baseline for each ensemble.
pub fn decode_scores(task: &ScoreBuffer, baseline: &ScoreBuffer, cfg: &DecoderConfig) -> DecodeResult {
    if baseline.len() < cfg.min_baseline.max(1) || task.is_empty() {
        return DecodeResult {
            direction: Direction::None,
            auc_e1: 0.5,
            auc_e2: 0.5,
            insufficient_baseline: baseline.len() < cfg.min_baseline.max(1),
        };
    }
    let auc = |t: &[f64], b: &[f64]| {
        let scores: Vec<f64> = t.iter().chain(b).copied().collect();
        let labels: Vec<i8> = t.iter().map(|_| 1).chain(b.iter().map(|_| -1)).collect();
        mann_whitney_auc(&scores, &labels).expect("both classes present")
    };
    let auc_e1 = auc(&task.e1, &baseline.e1);
    let auc_e2 = auc(&task.e2, &baseline.e2);
    DecodeResult {
        direction: arbitrate(auc_e1, auc_e2, cfg.gate),
        auc_e1,
        auc_e2,
        insufficient_baseline: false,
    }
}

/// Votes of both ensembles on one window whose rows are `channel_ids`
/// (`samples × channels` as streamed).
pub fn window_votes(e1: &Ensemble, e2: &Ensemble, window: &Window, channel_ids: &[u16]) -> Result<(Vote, Vote), EnsembleError> {
    let x = window.channel_major();
    let mut out = Vec::with_capacity(2);
    for e in [e1, e2] {
        let spec = e
            .features
            .as_ref()
            .ok_or_else(|| EnsembleError::InvalidArgument(format!("ensemble {} carries no feature spec", e.group)))?;
        let rows = channel_rows(channel_ids, &spec.channel_ids).map_err(EnsembleError::InvalidArgument)?;
        let z = spec
            .transform(select_rows(x.view(), &rows).view())
            .map_err(|err| EnsembleError::InvalidArgument(err.to_string()))?;
        out.push(vote(e, &z)?);
    }
    let v2 = out.pop().expect("two votes");
    Ok((out.pop().expect("two votes"), v2))
}

/// Decode one task window given the block's earlier task scores and the
/// rest baseline.
pub fn decode_window(
    e1: &Ensemble,
    e2: &Ensemble,
    window: &Window,
    channel_ids: &[u16],
    task_so_far: &ScoreBuffer,
    baseline: &ScoreBuffer,
    cfg: &DecoderConfig,
) -> Result<(Vote, Vote, DecodeResult), EnsembleError> {
    let (v1, v2) = window_votes(e1, e2, window, channel_ids)?;
    let mut task = task_so_far.clone();
    task.push(v1.score, v2.score);
    let r = decode_scores(&task, baseline, cfg);
    Ok((v1, v2, r))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowOutcome {
    pub tag: BlockTag,
    pub offset: usize,
    pub start_time: f64,
    pub vote_e1: Vote,
    pub vote_e2: Vote,
    /// Either per-window vote was UNKNOWN.
    pub unknown: bool,
    pub command: Option<Command>,
    pub result: Option<DecodeResult>,
}

/// Stateful decoder over a window sequence. The baseline restarts with every
/// rest block; task scores accumulate over a task block.
#[derive(Debug)]
pub struct Decoder {
    e1: Ensemble,
    e2: Ensemble,
    channel_ids: Vec<u16>,
    cfg: DecoderConfig,
    baseline: ScoreBuffer,
    task: ScoreBuffer,
    current: Option<BlockTag>,
    seq: u32,
}

impl Decoder {
    pub fn new(e1: Ensemble, e2: Ensemble, channel_ids: Vec<u16>, cfg: DecoderConfig) -> Result<Self, EnsembleError> {
        for e in [&e1, &e2] {
            let spec = e
                .features
                .as_ref()
                .ok_or_else(|| EnsembleError::InvalidArgument(format!("ensemble {} carries no feature spec", e.group)))?;
            channel_rows(&channel_ids, &spec.channel_ids).map_err(EnsembleError::InvalidArgument)?;
        }
        Ok(Decoder {
            e1,
            e2,
            channel_ids,
            cfg,
            baseline: ScoreBuffer::default(),
            task: ScoreBuffer::default(),
            current: None,
            seq: 0,
        })
    }

    pub fn last_seq(&self) -> u32 {
        self.seq
    }

    pub fn process(&mut self, window: &Window) -> Result<WindowOutcome, EnsembleError> {
        if self.current != Some(window.tag) {
            self.current = Some(window.tag);
            match window.tag.kind {
                BlockKind::Rest => self.baseline.clear(),
                BlockKind::Task => self.task.clear(),
            }
        }
        let (v1, v2) = window_votes(&self.e1, &self.e2, window, &self.channel_ids)?;
        let unknown = v1.decision == Decision::Unknown || v2.decision == Decision::Unknown;
        let (command, result) = match window.tag.kind {
            BlockKind::Rest => {
                self.baseline.push(v1.score, v2.score);
                (None, None)
            }
            BlockKind::Task => {
                self.task.push(v1.score, v2.score);
                let r = decode_scores(&self.task, &self.baseline, &self.cfg);
                if r.insufficient_baseline {
                    log::warn!(
                        "trial {}: baseline holds {} windows, {} needed; emitting NONE",
                        window.tag.trial,
                        self.baseline.len(),
                        self.cfg.min_baseline
                    );
                }
                self.seq += 1;
                let cmd = Command {
                    seq: self.seq,
                    direction: r.direction,
                    auc_e1: r.auc_e1 as f32,
                    auc_e2: r.auc_e2 as f32,
                };
                (Some(cmd), Some(r))
            }
        };
        Ok(WindowOutcome {
            tag: window.tag,
            offset: window.offset,
            start_time: window.start_time,
            vote_e1: v1,
            vote_e2: v2,
            unknown,
            command,
            result,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arbitration() {
        assert_eq!(arbitrate(0.9, 0.5, 0.7), Direction::Right);
        assert_eq!(arbitrate(0.5, 0.9, 0.7), Direction::Left);
        assert_eq!(arbitrate(0.9, 0.8, 0.7), Direction::Right);
        assert_eq!(arbitrate(0.8, 0.8, 0.7), Direction::None);
        assert_eq!(arbitrate(0.70, 0.6, 0.7), Direction::None);
        assert_eq!(arbitrate(0.7, 0.7, 0.7), Direction::None);
    }

    #[test]
    fn perfect_e1_separation_gives_right() {
        let base = ScoreBuffer {
            e1: (0..10).map(|i| -1.0 - i as f64).collect(),
            e2: (0..10).map(|i| i as f64).collect(),
        };
        let task = ScoreBuffer {
            e1: vec![5.0, 6.0],
            e2: vec![4.5, 4.5],
        };
        let r = decode_scores(&task, &base, &DecoderConfig::default());
        assert_eq!(r.direction, Direction::Right);
        assert_eq!(r.auc_e1, 1.0);
        assert_eq!(r.auc_e2, 0.5);
    }

    #[test]
    fn gate_blocks_weak_aucs() {
        let base = ScoreBuffer {
            e1: (0..10).map(|i| i as f64).collect(),
            e2: (0..10).map(|i| i as f64).collect(),
        };
        let task = ScoreBuffer { e1: vec![4.5], e2: vec![6.5] };
        let r = decode_scores(&task, &base, &DecoderConfig::default());
        assert!(r.auc_e1 <= 0.7 && r.auc_e2 <= 0.7);
        assert_eq!(r.direction, Direction::None);
    }

    #[test]
    fn short_baseline_is_flagged() {
        let base = ScoreBuffer { e1: vec![0.0; 3], e2: vec![0.0; 3] };
        let task = ScoreBuffer { e1: vec![9.0], e2: vec![0.0] };
        let r = decode_scores(&task, &base, &DecoderConfig::default());
        assert!(r.insufficient_baseline);
        assert_eq!(r.direction, Direction::None);
    }
}
