use thiserror::Error;

/// Errors produced by the advaug engine.
#[derive(Error, Debug)]
pub enum Error {
    /// Tensor operation received incompatible shapes.
    #[error("shape mismatch in `{op}`: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    /// An operation was called with an invalid argument.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    /// A configuration value failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset construction or loading failed.
    #[error("data error: {0}")]
    Data(String),

    /// A domain-generalization loss was fed target-domain samples.
    #[error("domain-generalization loss received target-domain samples")]
    TargetInDgLoss,

    /// Training aborted because the loss became non-finite.
    #[error("non-finite loss at epoch {epoch}, step {step}: {diagnostics}")]
    NanLoss {
        epoch: usize,
        step: usize,
        diagnostics: String,
    },

    /// Checkpoint file could not be parsed.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("image decode error for {path}: {source}")]
    ImageDecode {
        path: String,
        source: image::ImageError,
    },

    #[error("image encode error: {0}")]
    ImageEncode(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
