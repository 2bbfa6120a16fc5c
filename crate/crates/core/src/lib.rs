//! Hemodynamic brain-computer interface decoding.
//!
//! The crate covers the full offline and online decoding chain for
//! multichannel oxy-Hb recordings:
//!
//! - [`dataio`]: the dataset model, a synthetic hemodynamic generator, trial
//!   segmentation and the CSV + JSON manifest file format.
//! - [`pca`]: deflation-based principal directions used as the feature
//!   extractor.
//! - [`svm`]: a linear soft-margin SVM trained by SMO on the dual problem.
//! - [`channel_select`]: recursive channel elimination over cross-validation
//!   folds.
//! - [`ensemble`]: k-of-n majority-voting SVM groups with an unknown outcome.
//! - [`metrics`]: ROC/AUC, performance regions, the command gate and fold
//!   planning.
//! - [`features`]: windowing and the PCA feature pipeline shared by the
//!   offline and online paths.
//! - [`online`]: streaming windows, the online decoder, the UDP wire protocol
//!   and the haptic device simulator.
//! - [`pipeline`]: end-to-end helpers tying the stages together.

pub mod channel_select;
pub mod dataio;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod metrics;
pub mod online;
pub mod pca;
pub mod pipeline;
pub mod svm;

pub use error::{Error, Result};

/// Sampling frequency of the recordings the pipeline was designed around.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 14.28;
/// Number of recording channels in the full montage.
pub const DEFAULT_CHANNEL_COUNT: u16 = 45;
/// Channels retained by recursive channel elimination.
pub const DEFAULT_TARGET_CHANNELS: usize = 20;
/// Samples per online decoding window.
pub const DEFAULT_WINDOW_LEN: usize = 42;
