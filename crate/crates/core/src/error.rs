use thiserror::Error;

/// Errors returned by the numeric core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("letter {letter} is outside the alphabet of size {alphabet}")]
    LetterOutOfRange { letter: usize, alphabet: usize },

    #[error("exponent {t} outside [0, {dim}]")]
    ExponentOutOfRange { t: f64, dim: usize },

    #[error(
        "capacity exceeded: {what} needs {requested} items but the cap is {cap}; \
         lower the depth or raise the cap"
    )]
    Capacity { what: &'static str, requested: u128, cap: u128 },

    #[error("system violates hypotheses: {0}")]
    Hypothesis(String),

    #[error("operation requires dimension {required}, system has dimension {found}")]
    UnsupportedDimension { required: usize, found: usize },

    #[error("word of length {len} is too short, need at least {needed}")]
    PrefixTooShort { len: usize, needed: usize },

    #[error("cylinder of length {len} exceeds the measure's resolvable level {level}")]
    LevelExceeded { len: usize, level: usize },
}

pub type Result<V, E = Error> = std::result::Result<V, E>;
