//! Block-aware sliding windows over a sample stream.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{block_lengths, BlockKind, Session, TaskLabel};
use crate::features::WindowConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("channel dropout at t = {t:.3} s: channel {channel} has no sample")]
    Dropout { t: f64, channel: usize },
    #[error("sample at t = {t:.3} s carries {got} channels, stream has {expected}")]
    ChannelCount { t: f64, expected: usize, got: usize },
    #[error("invalid stream configuration: {0}")]
    Config(String),
    #[error("stream closed: {0}")]
    Closed(String),
}

/// Which block a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockTag {
    pub session: usize,
    pub trial: usize,
    /// Position of the block inside its trial.
    pub block: usize,
    pub kind: BlockKind,
    pub label: TaskLabel,
}

/// One multichannel sample; `None` marks a missing value.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamSample {
    pub t: f64,
    pub tag: BlockTag,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// `samples × channels`.
    pub samples: Array2<f64>,
    pub start_time: f64,
    /// Offset of the first sample inside its block.
    pub offset: usize,
    pub tag: BlockTag,
}

impl Window {
    /// `channels × samples`, the layout the feature extractor expects.
    pub fn channel_major(&self) -> Array2<f64> {
        self.samples.t().to_owned()
    }
}

/// Emits a window every `hop` samples once `len` samples of the current block
/// (after the settle skip) are buffered. A change of block tag restarts the
/// buffer, so no window straddles two blocks.
#[derive(Debug)]
pub struct Windower {
    cfg: WindowConfig,
    channels: usize,
    skip: usize,
    tag: Option<BlockTag>,
    /// Position inside the current block of the next sample.
    position: usize,
    buffer: Vec<Vec<f64>>,
    times: Vec<f64>,
}

impl Windower {
    pub fn new(cfg: WindowConfig, channels: usize, sample_rate_hz: f64) -> Result<Self, StreamError> {
        cfg.validate().map_err(StreamError::Config)?;
        if channels == 0 {
            return Err(StreamError::Config("stream needs at least one channel".into()));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(StreamError::Config(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        Ok(Windower {
            skip: cfg.skip(sample_rate_hz),
            cfg,
            channels,
            tag: None,
            position: 0,
            buffer: Vec::new(),
            times: Vec::new(),
        })
    }

    pub fn push(&mut self, sample: &StreamSample) -> Result<Option<Window>, StreamError> {
        if sample.values.len() != self.channels {
            return Err(StreamError::ChannelCount {
                t: sample.t,
                expected: self.channels,
                got: sample.values.len(),
            });
        }
        let mut row = Vec::with_capacity(self.channels);
        for (channel, v) in sample.values.iter().enumerate() {
            match v {
                Some(x) if x.is_finite() => row.push(*x),
                _ => return Err(StreamError::Dropout { t: sample.t, channel }),
            }
        }
        if self.tag != Some(sample.tag) {
            self.tag = Some(sample.tag);
            self.position = 0;
            self.buffer.clear();
            self.times.clear();
        }
        let pos = self.position;
        self.position += 1;
        if pos < self.skip {
            return Ok(None);
        }
        self.buffer.push(row);
        self.times.push(sample.t);
        if self.buffer.len() > self.cfg.len {
            self.buffer.remove(0);
            self.times.remove(0);
        }
        let filled = pos + 1 - self.skip;
        if filled < self.cfg.len || !(filled - self.cfg.len).is_multiple_of(self.cfg.hop) {
            return Ok(None);
        }
        let flat: Vec<f64> = self.buffer.iter().flatten().copied().collect();
        Ok(Some(Window {
            samples: Array2::from_shape_vec((self.cfg.len, self.channels), flat).expect("full buffer"),
            start_time: self.times[0],
            offset: pos + 1 - self.cfg.len,
            tag: sample.tag,
        }))
    }
}

/// Windows of an untagged `channels × n` recording.
pub fn window_stream(samples: &Array2<f64>, len: usize, hop: usize, sample_rate_hz: f64) -> Result<Vec<Window>, StreamError> {
    let cfg = WindowConfig { len, hop, settle_s: 0.0 };
    let mut w = Windower::new(cfg, samples.nrows(), sample_rate_hz)?;
    let tag = BlockTag {
        session: 0,
        trial: 0,
        block: 0,
        kind: BlockKind::Task,
        label: TaskLabel::Rest,
    };
    let mut out = Vec::new();
    for (i, col) in samples.columns().into_iter().enumerate() {
        let s = StreamSample {
            t: i as f64 / sample_rate_hz,
            tag,
            values: col.iter().map(|&v| Some(v)).collect(),
        };
        out.extend(w.push(&s)?);
    }
    Ok(out)
}

/// The samples of `session` restricted to `channel_ids`, in recording order
/// with block tags. Time restarts at zero in every trial.
pub fn session_samples<'a>(
    session: &'a Session,
    session_index: usize,
    channel_ids: &[u16],
) -> Result<impl Iterator<Item = StreamSample> + 'a, StreamError> {
    let rows = crate::features::channel_rows(session.channel_ids(), channel_ids).map_err(StreamError::Config)?;
    let fs = session.sample_rate_hz();
    let timing = session.block_timing();
    let lens = block_lengths(&timing, fs);
    let kinds = timing.blocks().map(|(k, _)| k);
    let needed: usize = lens.iter().sum();
    if let Some(t) = session.trials().iter().position(|t| t.n_samples() < needed) {
        return Err(StreamError::Config(format!("trial {t} is shorter than its block timing")));
    }
    Ok(session.trials().iter().enumerate().flat_map(move |(ti, trial)| {
        let rows = rows.clone();
        let mut start = 0;
        let spans: Vec<(usize, usize, usize)> = lens
            .iter()
            .enumerate()
            .map(|(b, &len)| {
                let s = (b, start, start + len);
                start += len;
                s
            })
            .collect();
        spans.into_iter().flat_map(move |(b, from, to)| {
            let rows = rows.clone();
            let tag = BlockTag {
                session: session_index,
                trial: ti,
                block: b,
                kind: kinds[b],
                label: match kinds[b] {
                    BlockKind::Rest => TaskLabel::Rest,
                    BlockKind::Task => trial.label(),
                },
            };
            (from..to).map(move |i| StreamSample {
                t: i as f64 / fs,
                tag,
                values: rows.iter().map(|&r| Some(trial.samples()[[r, i]])).collect(),
            })
        })
    }))
}
