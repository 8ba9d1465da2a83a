use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing sidecar {0}")]
    MissingSidecar(PathBuf),

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("region of interest out of bounds: {0}")]
    RoiOutOfBounds(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pixel ({x}, {y}) has no finite samples")]
    NoFiniteSamples { x: usize, y: usize },

    #[error("pulse detection failed: {0}")]
    PulseDetection(String),

    #[error("{0} out of range")]
    OutOfRange(String),

    #[error("singular value decomposition did not converge")]
    SvdNonConvergence,

    #[error("degenerate least-squares design: {0}")]
    DegenerateDesign(String),

    #[error("map has zero variance over its valid pixels")]
    ZeroVariance,

    #[error("too few valid pixels: need {needed}, have {have}")]
    TooFewValid { needed: usize, have: usize },

    #[error("map is not standardized")]
    NotStandardized,

    #[error("image encoding failed: {0}")]
    Image(String),

    #[error("report is missing section \"{0}\"")]
    MissingSection(&'static str),

    #[error("report schema violation: {0}")]
    Schema(String),

    #[error("endpoint requires an API key but ${0} is not set")]
    MissingCredentials(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("endpoint returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },

    #[error("malformed response body: {0}")]
    MalformedResponse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Input-data problems, as opposed to algorithmic or transport failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MissingSidecar(_)
                | Error::Json { .. }
                | Error::SizeMismatch { .. }
                | Error::InvalidDimensions(_)
                | Error::RoiOutOfBounds(_)
                | Error::DimensionMismatch(_)
                | Error::InvalidConfig(_)
                | Error::NoFiniteSamples { .. }
        )
    }

    pub fn is_transport_error(&self) -> bool {
        matches!(
            self,
            Error::MissingCredentials(_)
                | Error::Transport(_)
                | Error::HttpStatus { .. }
                | Error::MalformedResponse(_)
        )
    }
}
