//! Block-aligned windowing and PCA feature extraction.
//!
//! A window is a `channels × window_len` slice of one block. PCA runs over
//! the time axis: each channel row of a window is one observation, and the
//! features of a window are its projections onto the principal directions,
//! laid out channel-major (`k` features per channel).

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataio::{segment_trials, BlockKind, DataError, SessionSet, TaskLabel};
use crate::ensemble::{EnsembleError, Group};
use crate::pca::{self, ComponentCount, GramAccumulator, PcaError, PcaModel, PcaOptions};
use crate::svm::LabeledSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub len: usize,
    pub hop: usize,
    /// Seconds skipped at the start of every block before the first window.
    pub settle_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            len: crate::DEFAULT_WINDOW_LEN,
            hop: 14,
            settle_s: 0.0,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.len == 0 || self.hop == 0 {
            return Err(format!("window length and hop must be ≥ 1 (len {}, hop {})", self.len, self.hop));
        }
        if !(self.settle_s >= 0.0) {
            return Err(format!("settle time must be ≥ 0, got {}", self.settle_s));
        }
        Ok(())
    }

    /// Samples skipped at a block start.
    pub fn skip(&self, sample_rate_hz: f64) -> usize {
        (self.settle_s * sample_rate_hz).round() as usize
    }

    /// Window start offsets inside a block of `n` samples.
    pub fn starts(&self, n: usize, sample_rate_hz: f64) -> Vec<usize> {
        window_starts(n, self.skip(sample_rate_hz), self.len, self.hop)
    }
}

/// `skip, skip + hop, …` for every window that fits in `n` samples.
pub fn window_starts(n: usize, skip: usize, len: usize, hop: usize) -> Vec<usize> {
    if len == 0 || hop == 0 || skip + len > n {
        return Vec::new();
    }
    (skip..=n - len).step_by(hop).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleWindow {
    pub session: usize,
    pub trial: usize,
    pub block: usize,
    pub kind: BlockKind,
    pub label: TaskLabel,
    /// Offset of the window inside its block.
    pub offset: usize,
    /// `channels × len`, rows in montage order.
    pub samples: Array2<f64>,
}

/// Every window of every block. All sessions must share one montage and rate.
pub fn extract_windows(set: &SessionSet, cfg: &WindowConfig) -> Result<Vec<ExampleWindow>, DataError> {
    cfg.validate().map_err(DataError::Config)?;
    check_montage(set)?;
    let mut out = Vec::new();
    for (si, session) in set.sessions.iter().enumerate() {
        let fs = session.sample_rate_hz();
        for seg in segment_trials(session)? {
            for offset in cfg.starts(seg.samples.ncols(), fs) {
                out.push(ExampleWindow {
                    session: si,
                    trial: seg.trial,
                    block: seg.block,
                    kind: seg.kind,
                    label: seg.label,
                    offset,
                    samples: seg.samples.slice(ndarray::s![.., offset..offset + cfg.len]).to_owned(),
                });
            }
        }
    }
    Ok(out)
}

fn check_montage(set: &SessionSet) -> Result<(), DataError> {
    let Some(first) = set.sessions.first() else {
        return Ok(());
    };
    for (i, s) in set.sessions.iter().enumerate().skip(1) {
        if s.channel_ids() != first.channel_ids() || s.sample_rate_hz() != first.sample_rate_hz() {
            return Err(DataError::InvalidSession(format!(
                "session {i} differs from session 0 in montage or sample rate"
            )));
        }
    }
    Ok(())
}

/// Row indices of `selected` inside `montage`.
pub fn channel_rows(montage: &[u16], selected: &[u16]) -> Result<Vec<usize>, String> {
    selected
        .iter()
        .map(|id| {
            montage
                .iter()
                .position(|m| m == id)
                .ok_or_else(|| format!("channel {id} is not part of the montage"))
        })
        .collect()
}

pub fn select_rows(x: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(0), rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PcaMode {
    /// One basis fitted on all training windows.
    Pooled,
    /// A fresh basis per window, with a fixed component count.
    PerWindow { k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSettings {
    pub mode: PcaMode,
    pub count: ComponentCount,
    pub options: PcaOptions,
    /// Standardise every feature with training mean and deviation.
    pub standardize: bool,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            mode: PcaMode::Pooled,
            count: ComponentCount::default(),
            options: PcaOptions::default(),
            standardize: false,
        }
    }
}

/// Per-feature affine map `(x − mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fit on row vectors; zero-variance features keep unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            var.iter_mut().zip(r).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

/// Everything needed to turn a raw window into a feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Channels in feature order.
    pub channel_ids: Vec<u16>,
    pub window_len: usize,
    pub mode: PcaMode,
    pub options: PcaOptions,
    /// Present in pooled mode.
    pub model: Option<PcaModel>,
    pub standardizer: Option<Standardizer>,
}

impl FeatureSpec {
    /// Fit on training windows whose rows follow `montage`.
    pub fn fit(
        windows: &[ArrayView2<f64>],
        montage: &[u16],
        channel_ids: &[u16],
        settings: &FeatureSettings,
    ) -> Result<FeatureSpec, FeatureError> {
        let rows = channel_rows(montage, channel_ids).map_err(FeatureError::InvalidArgument)?;
        let window_len = windows
            .first()
            .map(|w| w.ncols())
            .ok_or_else(|| FeatureError::InvalidArgument("no training windows".into()))?;
        let model = match settings.mode {
            PcaMode::Pooled => {
                let mut acc = GramAccumulator::new(window_len);
                for w in windows {
                    acc.add(select_rows(*w, &rows).view())?;
                }
                Some(acc.fit(settings.count, &settings.options)?)
            }
            PcaMode::PerWindow { k } => {
                if k == 0 || k > window_len.min(channel_ids.len()) {
                    return Err(FeatureError::InvalidArgument(format!(
                        "per-window PCA needs 1 ≤ k ≤ {}, got {k}",
                        window_len.min(channel_ids.len())
                    )));
                }
                None
            }
        };
        let mut spec = FeatureSpec {
            channel_ids: channel_ids.to_vec(),
            window_len,
            mode: settings.mode,
            options: settings.options,
            model,
            standardizer: None,
        };
        if settings.standardize {
            let raw = windows
                .iter()
                .map(|w| spec.transform(select_rows(*w, &rows).view()))
                .collect::<Result<Vec<_>, _>>()?;
            spec.standardizer = Some(Standardizer::fit(&raw));
        }
        Ok(spec)
    }

    /// Features per channel.
    pub fn k(&self) -> usize {
        match (&self.mode, &self.model) {
            (PcaMode::PerWindow { k }, _) => *k,
            (PcaMode::Pooled, Some(m)) => m.basis.k(),
            (PcaMode::Pooled, None) => 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.channel_ids.len() * self.k()
    }

    /// Feature vector of a window whose rows are exactly `channel_ids`.
    pub fn transform(&self, window: ArrayView2<f64>) -> Result<Vec<f64>, FeatureError> {
        if window.nrows() != self.channel_ids.len() || window.ncols() != self.window_len {
            return Err(FeatureError::InvalidArgument(format!(
                "window is {}×{}, expected {}×{}",
                window.nrows(),
                window.ncols(),
                self.channel_ids.len(),
                self.window_len
            )));
        }
        let projected = match (&self.mode, &self.model) {
            (PcaMode::Pooled, Some(m)) => m.transform(window)?,
            (PcaMode::PerWindow { k }, _) => pca::fit(window, ComponentCount::Fixed(*k), &self.options)?.transform(window)?,
            (PcaMode::Pooled, None) => {
                return Err(FeatureError::InvalidArgument("pooled spec without a fitted model".into()))
            }
        };
        let mut z: Vec<f64> = projected.iter().copied().collect();
        if let Some(st) = &self.standardizer {
            st.apply(&mut z);
        }
        Ok(z)
    }

    /// Feature vector of a window whose rows follow `montage`.
    pub fn transform_montage(&self, window: ArrayView2<f64>, montage: &[u16]) -> Result<Vec<f64>, FeatureError> {
        let rows = channel_rows(montage, &self.channel_ids).map_err(FeatureError::InvalidArgument)?;
        self.transform(select_rows(window, &rows).view())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Pca(#[from] PcaError),
}

/// Feature vectors with their task labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSet {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<TaskLabel>,
}

impl TaskSet {
    pub fn new(examples: Vec<Vec<f64>>, labels: Vec<TaskLabel>) -> Result<Self, EnsembleError> {
        if examples.len() != labels.len() {
            return Err(EnsembleError::InvalidArgument(format!(
                "{} examples but {} labels",
                examples.len(),
                labels.len()
            )));
        }
        let dim = examples.first().map_or(0, Vec::len);
        if examples.iter().any(|x| x.len() != dim) {
            return Err(EnsembleError::InvalidArgument("examples differ in dimension".into()));
        }
        Ok(TaskSet {
            dim,
            data: examples.concat(),
            labels,
        })
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

    pub fn labels(&self) -> &[TaskLabel] {
        &self.labels
    }

    fn labeled(&self, keep: &[usize], class: impl Fn(TaskLabel) -> i8) -> LabeledSet {
        let data = keep.iter().flat_map(|&i| self.example(i).iter().copied()).collect();
        let labels = keep.iter().map(|&i| class(self.labels[i])).collect();
        LabeledSet::from_flat(self.dim, data, labels).expect("consistent layout")
    }

    /// The group's ±1 problem. Examples of the other task are an error.
    pub fn for_group(&self, group: Group) -> Result<LabeledSet, EnsembleError> {
        let wanted = group.positive_label();
        if let Some(bad) = self.labels.iter().find(|&&l| l != wanted && l != TaskLabel::Rest) {
            return Err(EnsembleError::InvalidArgument(format!(
                "group {group} trains {} against REST, found a {} example",
                wanted.as_str(),
                bad.as_str()
            )));
        }
        let all: Vec<usize> = (0..self.len()).collect();
        Ok(self.labeled(&all, |l| if l == wanted { 1 } else { -1 }))
    }

    /// The group's ±1 problem after dropping the other task's examples.
    pub fn restrict_to(&self, group: Group) -> LabeledSet {
        let wanted = group.positive_label();
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.labels[i] == wanted || self.labels[i] == TaskLabel::Rest)
            .collect();
        self.labeled(&keep, |l| if l == wanted { 1 } else { -1 })
    }

    /// Any task (`+1`) against rest (`−1`).
    pub fn task_vs_rest(&self) -> LabeledSet {
        let all: Vec<usize> = (0..self.len()).collect();
        self.labeled(&all, TaskLabel::class)
    }
}

/// Feature vectors of `windows` (rows in `montage` order).
pub fn task_set(spec: &FeatureSpec, windows: &[ExampleWindow], montage: &[u16]) -> Result<TaskSet, FeatureError> {
    let rows = channel_rows(montage, &spec.channel_ids).map_err(FeatureError::InvalidArgument)?;
    let examples = windows
        .iter()
        .map(|w| spec.transform(select_rows(w.samples.view(), &rows).view()))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = windows.iter().map(|w| w.label).collect();
    TaskSet::new(examples, labels).map_err(|e| FeatureError::InvalidArgument(e.to_string()))
}
