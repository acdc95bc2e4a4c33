use thiserror::Error;

/// Errors produced by the quantizers, codecs, predictors and metrics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cell ({col}, {row}) is outside the {width}x{height} heatmap")]
    EncodeOutOfBounds {
        col: i64,
        row: i64,
        width: usize,
        height: usize,
    },

    #[error("invalid heatmap: {0}")]
    InvalidHeatmap(String),

    #[error("activation set weights sum to zero")]
    DegenerateSet,

    #[error("normalization distance must be positive, got {0}")]
    InvalidNormalization(f64),

    #[error("no visible landmarks to evaluate")]
    EmptyEvaluation,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
