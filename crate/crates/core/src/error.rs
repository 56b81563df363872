use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Two points that must be distinct coincide, or every ray is parallel.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("circular mean is undefined (resultant length {0:e})")]
    UndefinedMean(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("subset size k={k} is outside 3..={n}")]
    InvalidArity { n: usize, k: usize },

    #[error("no pose pair produced a camera candidate")]
    NoValidPairs,

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid depth {0}")]
    InvalidDepth(f64),

    #[error("empty input")]
    EmptyInput,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl Error {
    /// Stable snake_case name for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::UndefinedMean(_) => "undefined_mean",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::InvalidArity { .. } => "invalid_arity",
            Error::NoValidPairs => "no_valid_pairs",
            Error::OutOfRange(_) => "out_of_range",
            Error::InvalidDepth(_) => "invalid_depth",
            Error::EmptyInput => "empty_input",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
