use thiserror::Error;

use crate::types::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch{}: expected {expected}, got {got}", at_frame(.frame))]
    DimensionMismatch {
        expected: usize,
        got: usize,
        frame: Option<usize>,
    },

    #[error("non-finite value in {0}")]
    NonFiniteInput(String),

    #[error("k-means needs at least {k} samples, got {samples}")]
    FewerSamplesThanK { k: usize, samples: usize },

    #[error("window [{start}, {end}] out of range for {len} frames")]
    IndexOutOfRange { start: usize, end: usize, len: usize },

    #[error("frame {0}: no semantic payload (words or semantic vector)")]
    MissingSemantic(usize),

    #[error("frame {0}: no word list")]
    MissingWords(usize),

    #[error("no positive examples for class {0}")]
    NoPositiveExamples(String),

    #[error("no negative examples for class {0}")]
    NoNegativeExamples(String),

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("sequence has no label track")]
    MissingLabels,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("sequence {id} failed validation: {}", join(.violations))]
    InvalidSequence { id: String, violations: Vec<Violation> },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Input or configuration problems, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::NonFiniteInput(_)
                | Error::FewerSamplesThanK { .. }
                | Error::MissingSemantic(_)
                | Error::MissingWords(_)
                | Error::MissingLabels
                | Error::LengthMismatch(..)
                | Error::InvalidConfig(_)
                | Error::InvalidSequence { .. }
                | Error::Parse { .. }
        )
    }
}

fn at_frame(frame: &Option<usize>) -> String {
    match frame {
        Some(f) => format!(" at frame {f}"),
        None => String::new(),
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
