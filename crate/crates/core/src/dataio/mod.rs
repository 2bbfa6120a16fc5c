//! Dataset model, synthetic generator, trial segmentation and file format.
//!
//! A [`Trial`] is one Rest → Task → Rest recording stored channel-major
//! (`channels × samples`). Only oxy-Hb concentration changes are modelled.

mod format;
mod generator;
mod segment;

use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{load_dataset, save_dataset, DATASET_INDEX, DATASET_VERSION};
pub use generator::{generate_synthetic, hrf_kernel, GeneratorConfig};
pub use segment::{block_lengths, segment_trials, Segment};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid trial: {0}")]
    InvalidTrial(String),
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("segmentation error in trial {trial}: block timing needs {needed} samples, trial has {available}")]
    Segmentation {
        trial: usize,
        needed: usize,
        available: usize,
    },
    #[error("parse error in {}:{line}, field `{field}`: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        field: String,
        message: String,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Mental task performed during a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskLabel {
    Right,
    Left,
    Rest,
}

impl TaskLabel {
    pub fn is_task(self) -> bool {
        !matches!(self, TaskLabel::Rest)
    }

    /// Binary class in task-versus-rest contexts: any task is `+1`, rest `-1`.
    pub fn class(self) -> i8 {
        if self.is_task() {
            1
        } else {
            -1
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskLabel::Right => "RIGHT",
            TaskLabel::Left => "LEFT",
            TaskLabel::Rest => "REST",
        }
    }
}

impl std::str::FromStr for TaskLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RIGHT" => Ok(TaskLabel::Right),
            "LEFT" => Ok(TaskLabel::Left),
            "REST" => Ok(TaskLabel::Rest),
            other => Err(format!("unknown task label `{other}`")),
        }
    }
}

/// Experimental condition of a session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Pure motor imagery.
    #[serde(rename = "MI")]
    Mi,
    /// Action observation combined with motor imagery.
    #[serde(rename = "AOMI")]
    Aomi,
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MI" => Ok(Condition::Mi),
            "AOMI" => Ok(Condition::Aomi),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Rest,
    Task,
}

/// Durations of the Rest → Task → Rest blocks, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTiming {
    pub rest_pre_s: f64,
    pub task_s: f64,
    pub rest_post_s: f64,
}

impl Default for BlockTiming {
    fn default() -> Self {
        BlockTiming {
            rest_pre_s: 15.0,
            task_s: 20.0,
            rest_post_s: 15.0,
        }
    }
}

impl BlockTiming {
    pub fn validate(&self) -> Result<(), DataError> {
        for (name, v) in [
            ("rest_pre_s", self.rest_pre_s),
            ("task_s", self.task_s),
            ("rest_post_s", self.rest_post_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(DataError::Config(format!(
                    "block duration {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn blocks(&self) -> [(BlockKind, f64); 3] {
        [
            (BlockKind::Rest, self.rest_pre_s),
            (BlockKind::Task, self.task_s),
            (BlockKind::Rest, self.rest_post_s),
        ]
    }
}

/// One labelled Rest → Task → Rest recording.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    samples: Array2<f64>,
    label: TaskLabel,
    sample_rate_hz: f64,
    channel_ids: Vec<u16>,
}

impl Trial {
    /// `samples` is `channels × samples`, one row per entry of `channel_ids`.
    pub fn new(
        samples: Array2<f64>,
        label: TaskLabel,
        sample_rate_hz: f64,
        channel_ids: Vec<u16>,
    ) -> Result<Self, DataError> {
        if samples.nrows() != channel_ids.len() {
            return Err(DataError::InvalidTrial(format!(
                "{} sample rows for {} channel ids",
                samples.nrows(),
                channel_ids.len()
            )));
        }
        if samples.ncols() == 0 {
            return Err(DataError::InvalidTrial("trial has no samples".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(DataError::InvalidTrial(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        validate_channel_ids(&channel_ids).map_err(DataError::InvalidTrial)?;
        Ok(Trial {
            samples,
            label,
            sample_rate_hz,
            channel_ids,
        })
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn label(&self) -> TaskLabel {
        self.label
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_ids(&self) -> &[u16] {
        &self.channel_ids
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }
}

pub(crate) fn validate_channel_ids(ids: &[u16]) -> Result<(), String> {
    for (i, &id) in ids.iter().enumerate() {
        if !(1..=crate::DEFAULT_CHANNEL_COUNT).contains(&id) {
            return Err(format!("channel id {id} outside 1..=45"));
        }
        if i > 0 && ids[i - 1] >= id {
            return Err(format!(
                "channel ids must be strictly increasing ({} then {id})",
                ids[i - 1]
            ));
        }
    }
    Ok(())
}

/// A recording session: trials sharing one montage, sample rate and timing.
#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    trials: Vec<Trial>,
    block_timing: BlockTiming,
    condition: Condition,
    subject_id: String,
    seed: u64,
    /// Montage and rate, kept so that a session with no trials still
    /// round-trips through the file format.
    channel_ids: Vec<u16>,
    sample_rate_hz: f64,
}

impl Session {
    pub fn new(
        trials: Vec<Trial>,
        block_timing: BlockTiming,
        condition: Condition,
        subject_id: impl Into<String>,
        seed: u64,
    ) -> Result<Self, DataError> {
        let (channel_ids, rate) = match trials.first() {
            Some(t) => (t.channel_ids.clone(), t.sample_rate_hz),
            None => (Vec::new(), crate::DEFAULT_SAMPLE_RATE_HZ),
        };
        Self::with_montage(trials, block_timing, condition, subject_id, seed, channel_ids, rate)
    }

    pub fn with_montage(
        trials: Vec<Trial>,
        block_timing: BlockTiming,
        condition: Condition,
        subject_id: impl Into<String>,
        seed: u64,
        channel_ids: Vec<u16>,
        sample_rate_hz: f64,
    ) -> Result<Self, DataError> {
        block_timing.validate()?;
        validate_channel_ids(&channel_ids).map_err(DataError::InvalidSession)?;
        for (i, t) in trials.iter().enumerate() {
            if t.channel_ids != channel_ids {
                return Err(DataError::InvalidSession(format!(
                    "trial {i} channel ids differ from the session montage"
                )));
            }
            if t.sample_rate_hz != sample_rate_hz {
                return Err(DataError::InvalidSession(format!(
                    "trial {i} sample rate {} differs from session rate {sample_rate_hz}",
                    t.sample_rate_hz
                )));
            }
        }
        Ok(Session {
            trials,
            block_timing,
            condition,
            subject_id: subject_id.into(),
            seed,
            channel_ids,
            sample_rate_hz,
        })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn block_timing(&self) -> BlockTiming {
        self.block_timing
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn channel_ids(&self) -> &[u16] {
        &self.channel_ids
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionSet {
    pub sessions: Vec<Session>,
}

impl SessionSet {
    pub fn new(sessions: Vec<Session>) -> Self {
        SessionSet { sessions }
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn trial_count(&self) -> usize {
        self.sessions.iter().map(|s| s.trials.len()).sum()
    }
}
