use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{source_name}:{line}: invalid UTF-8")]
    Encoding { source_name: String, line: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("duplicate triple in {split} at line {line}: {triple}")]
    DuplicateTriple {
        split: String,
        line: usize,
        triple: String,
    },

    #[error("triple {triple} occurs in both {first} and {second}")]
    SplitOverlap {
        first: String,
        second: String,
        triple: String,
    },

    #[error("{kind} id {id} out of range (table size {len})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        len: usize,
    },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("target triple {0} is not a known true triple")]
    TargetNotInIndex(String),

    #[error("evaluation set is empty after applying the OOV policy")]
    EmptyEvaluation,

    #[error("degenerate sample: all paired differences are zero")]
    DegenerateSample,

    #[error("label mismatch: missing from first set {missing_in_first:?}, missing from second set {missing_in_second:?}")]
    LabelMismatch {
        missing_in_first: Vec<String>,
        missing_in_second: Vec<String>,
    },

    #[error("output directory {} is not empty (use force to overwrite)", .0.display())]
    OutputNotEmpty(PathBuf),

    #[error("output directory {} is the input directory", .0.display())]
    OutputIsInput(PathBuf),

    #[error("vocabulary hash mismatch: checkpoint {checkpoint}, dataset {dataset}")]
    VocabMismatch { checkpoint: String, dataset: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed fixture: {0}")]
    Fixture(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
