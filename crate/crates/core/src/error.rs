use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the extraction and analysis pipeline.
#[derive(Debug, Error)]
pub enum VesselError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("cannot write {path}: {reason}")]
    Write { path: PathBuf, reason: String },

    #[error("image has zero width or height")]
    EmptyImage,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("expected a {expected}-channel image, got {actual} channel(s)")]
    ChannelCount { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("undefined metric {metric}: {reason}")]
    Undefined { metric: &'static str, reason: String },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<VesselError>,
    },
}

impl VesselError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        VesselError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Wraps an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        VesselError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = VesselError> = std::result::Result<T, E>;
