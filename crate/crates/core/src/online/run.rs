//! The streaming loop: a producer thread windows the sample stream into a
//! bounded queue, the consumer decodes windows and emits commands.

use std::sync::mpsc::sync_channel;
use std::time::{Duration, Instant};

use log::info;
use serde::{Deserialize, Serialize};

use crate::dataio::{BlockKind, SessionSet, TaskLabel};
use crate::ensemble::Ensemble;
use crate::features::WindowConfig;
use crate::Error;

use super::decoder::{Decoder, DecoderConfig, WindowOutcome};
use super::protocol::{Command, Direction};
use super::window::{session_samples, StreamError, Window, Windower};

pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub window: WindowConfig,
    pub decoder: DecoderConfig,
    pub queue_capacity: usize,
    /// Replay speed relative to real time; `None` replays as fast as possible.
    pub speed: Option<f64>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            window: WindowConfig::default(),
            decoder: DecoderConfig::default(),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            speed: None,
        }
    }
}

/// Outcome of one task block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskPeriod {
    pub session: usize,
    pub trial: usize,
    pub label: TaskLabel,
    /// Direction of the last command in the block.
    pub decision: Direction,
    pub commands: usize,
    /// Seconds from block onset to the end of the first window whose command
    /// passed the gate.
    pub onset_latency_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamReport {
    pub outcomes: Vec<WindowOutcome>,
    pub periods: Vec<TaskPeriod>,
    pub max_decode_ms: f64,
    pub mean_decode_ms: f64,
}

impl StreamReport {
    /// Fraction of task periods whose decision matches the performed task.
    pub fn accuracy(&self) -> f64 {
        if self.periods.is_empty() {
            return 0.0;
        }
        let hits = self
            .periods
            .iter()
            .filter(|p| {
                matches!(
                    (p.label, p.decision),
                    (TaskLabel::Right, Direction::Right) | (TaskLabel::Left, Direction::Left)
                )
            })
            .count();
        hits as f64 / self.periods.len() as f64
    }
}

/// Replay `set` (restricted to `channel_ids`) through the streaming path.
/// `on_command` sees every emitted command in order.
pub fn run_stream(
    set: &SessionSet,
    channel_ids: &[u16],
    e1: &Ensemble,
    e2: &Ensemble,
    cfg: &StreamConfig,
    mut on_command: impl FnMut(&Command) -> Result<(), Error>,
) -> Result<StreamReport, Error> {
    if cfg.queue_capacity == 0 {
        return Err(StreamError::Config("queue capacity must be ≥ 1".into()).into());
    }
    let Some(first) = set.sessions.first() else {
        return Ok(StreamReport {
            outcomes: vec![],
            periods: vec![],
            max_decode_ms: 0.0,
            mean_decode_ms: 0.0,
        });
    };
    let fs = first.sample_rate_hz();
    let mut decoder = Decoder::new(e1.clone(), e2.clone(), channel_ids.to_vec(), cfg.decoder.clone())?;
    let (tx, rx) = sync_channel::<Result<Window, StreamError>>(cfg.queue_capacity);

    std::thread::scope(|scope| -> Result<StreamReport, Error> {
        scope.spawn(move || {
            let produce = || -> Result<(), StreamError> {
                let mut windower = Windower::new(cfg.window.clone(), channel_ids.len(), fs)?;
                let started = Instant::now();
                let mut emitted = 0u64;
                for (si, session) in set.sessions.iter().enumerate() {
                    for sample in session_samples(session, si, channel_ids)? {
                        if let Some(speed) = cfg.speed {
                            let due = Duration::from_secs_f64(emitted as f64 / (fs * speed));
                            if let Some(wait) = due.checked_sub(started.elapsed()) {
                                std::thread::sleep(wait);
                            }
                        }
                        emitted += 1;
                        if let Some(w) = windower.push(&sample)? {
                            tx.send(Ok(w)).map_err(|_| StreamError::Closed("decoder stopped".into()))?;
                        }
                    }
                }
                Ok(())
            };
            if let Err(e) = produce() {
                let _ = tx.send(Err(e));
            }
        });

        let mut outcomes = Vec::new();
        let mut periods: Vec<TaskPeriod> = Vec::new();
        let mut timings = Vec::new();
        for item in rx {
            let window = item?;
            let t0 = Instant::now();
            let out = decoder.process(&window)?;
            timings.push(t0.elapsed().as_secs_f64() * 1e3);
            if let Some(cmd) = &out.command {
                on_command(cmd)?;
                let tag = out.tag;
                let new_period = periods
                    .last()
                    .is_none_or(|p| (p.session, p.trial) != (tag.session, tag.trial));
                if new_period {
                    periods.push(TaskPeriod {
                        session: tag.session,
                        trial: tag.trial,
                        label: tag.label,
                        decision: Direction::None,
                        commands: 0,
                        onset_latency_s: None,
                    });
                }
                let p = periods.last_mut().expect("period exists");
                p.decision = cmd.direction;
                p.commands += 1;
                if p.onset_latency_s.is_none() && cmd.direction != Direction::None {
                    let latency = (out.offset + cfg.window.len) as f64 / fs;
                    info!(
                        "session {} trial {}: first gated command {:?} {:.2} s after task onset",
                        tag.session, tag.trial, cmd.direction, latency
                    );
                    p.onset_latency_s = Some(latency);
                }
            }
            debug_assert!(out.tag.kind == BlockKind::Task || out.command.is_none());
            outcomes.push(out);
        }
        let max_decode_ms = timings.iter().copied().fold(0.0, f64::max);
        let mean_decode_ms = timings.iter().sum::<f64>() / timings.len().max(1) as f64;
        Ok(StreamReport {
            outcomes,
            periods,
            max_decode_ms,
            mean_decode_ms,
        })
    })
}
