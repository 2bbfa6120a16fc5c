//! Crate-level error wrapping the per-module error types.

use thiserror::Error;

use crate::channel_select::RceError;
use crate::dataio::DataError;
use crate::ensemble::EnsembleError;
use crate::features::FeatureError;
use crate::metrics::MetricsError;
use crate::online::{ProtocolError, StreamError};
use crate::pca::PcaError;
use crate::svm::SvmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Rce(#[from] RceError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Pca(PcaError::NonConvergence { .. }) => ErrorKind::Numeric,
            Error::Svm(SvmError::NonConvergence { .. }) => ErrorKind::Numeric,
            Error::Rce(RceError::Svm(SvmError::NonConvergence { .. })) => ErrorKind::Numeric,
            Error::Ensemble(EnsembleError::Svm(SvmError::NonConvergence { .. })) => {
                ErrorKind::Numeric
            }
            Error::Feature(FeatureError::Pca(PcaError::NonConvergence { .. })) => ErrorKind::Numeric,
            Error::Invalid(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}
