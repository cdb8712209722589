use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("invalid price {value} for {ticker} at line {line}")]
    InvalidPrice {
        line: u64,
        ticker: String,
        value: f64,
    },

    #[error("only {0} ticker(s) survive the full-presence filter, need at least 2")]
    TooFewInstruments(usize),

    #[error("only {0} trading date(s) in range, need at least 2")]
    TooFewDates(usize),

    #[error("no trading dates")]
    NoTradingDates,

    #[error("empty universe")]
    EmptyUniverse,

    #[error("duplicate ticker {0}")]
    DuplicateTicker(String),

    #[error("unknown sector abbreviation {sector:?} for {ticker}")]
    UnknownSector { ticker: String, sector: String },

    #[error("ticker {0} is not in the universe")]
    UnknownTicker(String),

    #[error("zero return variance for {ticker} in epoch ending {tau}")]
    ZeroVariance { ticker: String, tau: NaiveDate },

    #[error("insufficient history: need {needed} observations, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("epsilon {0} outside [0, 1)")]
    InvalidEpsilon(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("epsilon mismatch: model uses {expected}, frame has {found}")]
    EpsilonMismatch { expected: f64, found: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    Misaligned { expected: usize, found: usize },

    #[error("invalid distance matrix: {0}")]
    InvalidDistances(String),

    #[error("k = {k} exceeds number of points {n}")]
    TooManyClusters { k: usize, n: usize },

    #[error("no landscape cell with k >= {0}")]
    NoEligibleCells(usize),

    #[error("dates are not strictly increasing at position {0}")]
    NonIncreasingDates(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidEpsilon(_) | Error::InvalidParameter(_) => ErrorClass::Usage,
            Error::Numerical(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
