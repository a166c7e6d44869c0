use std::fmt;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("spans do not tile the grid: {0}")]
    NonRectangular(String),
    #[error("malformed markup: {0}")]
    MalformedMarkup(String),
    #[error("bad coordinate marker: {0}")]
    BadCoordMarker(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("cell {cell} has no bounding box")]
    MissingBox { cell: usize },
    #[error("table has cells without bounding boxes")]
    MissingBoxes,
    #[error("table has no image size")]
    MissingImageSize,
    #[error("index ({index}) out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("negative coordinate {0}")]
    NegativeCoord(f64),
    #[error("character {0:?} is not in the text vocabulary")]
    TextNotEncodable(char),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("unrecoverable token sequence: {0}")]
    Unrecoverable(String),
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("prediction weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("unusable region: {0}")]
    Unusable(String),
    #[error("cell {cell} too small to hold text")]
    CellTooSmall { cell: usize },
    #[error("channel {channel} has zero variance")]
    StatDegenerate { channel: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::WeightsNotNormalized(_) => ErrorClass::Config,
            Error::NonFiniteInput(_)
            | Error::NonFiniteLoss { .. }
            | Error::ShapeMismatch(_)
            | Error::StatDegenerate { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        };
        f.write_str(s)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
