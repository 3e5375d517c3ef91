use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdaError>;

#[derive(Debug, Error)]
pub enum SdaError {
    #[error("invalid geometry for region `{region}`: {reason}")]
    InvalidGeometry { region: String, reason: String },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("point ({x}, {y}) lies outside the raster extent")]
    OutOfBounds { x: f64, y: f64 },

    #[error("region `{region}` has no population support (zero mass)")]
    DegenerateOffset { region: String },

    #[error("degenerate weights: {0}")]
    DegenerateWeight(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance matrix for phi = {phi} is not positive definite: {message}")]
    NumericalDegeneracy { phi: f64, message: String },

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("numerical consistency error: {0}")]
    NumericalConsistency(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SdaError {
    /// I/O error tagged with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SdaError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        SdaError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Name of the pipeline stage an error originates from, for CLI diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            SdaError::InvalidGeometry { .. } => "geometry",
            SdaError::Parse { .. } | SdaError::Io { .. } | SdaError::Config(_) => "input",
            SdaError::OutOfBounds { .. } | SdaError::DegenerateOffset { .. } => "raster",
            SdaError::DegenerateWeight(_) => "quadrature",
            SdaError::Domain(_) | SdaError::NumericalDegeneracy { .. } => "covariance",
            SdaError::Convergence(_) => "latent",
            SdaError::NumericalConsistency(_) => "predict",
            SdaError::Shape(_) | SdaError::Size(_) => "sim",
        }
    }
}
