use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal too short: {len} samples, window needs {window}")]
    SignalTooShort { len: usize, window: usize },

    #[error("track/segment length mismatch: track has {track} samples, segment needs {segment}")]
    TrackLengthMismatch { track: usize, segment: usize },

    #[error("band/axis mismatch: band [{lo} Hz, {hi} Hz] not covered by axis [{axis_lo} Hz, {axis_hi} Hz]")]
    BandAxisMismatch {
        lo: f64,
        hi: f64,
        axis_lo: f64,
        axis_hi: f64,
    },

    #[error("interval [{onset} s, {offset} s] lies outside the record (0 s to {duration} s)")]
    IntervalOutsideRecord {
        onset: f64,
        offset: f64,
        duration: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid permutation of {len} feature indices")]
    InvalidPermutation { len: usize },

    #[error("class {label} has {have} samples, needs at least {need}")]
    ClassTooSmall {
        label: char,
        have: usize,
        need: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        match self {
            Error::InvalidConfig(_) => true,
            Error::Trial { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
