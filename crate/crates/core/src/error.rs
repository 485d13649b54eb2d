use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown label {label:?}")]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        label: String,
    },
    #[error("{path}:{line}: record has no label but a labeled corpus was requested")]
    MissingLabel { path: PathBuf, line: usize },
    #[error("invalid class label space: {0}")]
    LabelSpace(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("regularization strength must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("need at least two distinct labels to fit, found {0}")]
    TooFewClasses(usize),
    #[error("translation budget {budget} is smaller than the class count {classes}")]
    BudgetTooSmall { budget: usize, classes: usize },
    #[error(
        "the teacher covers no unlabeled target document; \
         increase the translation budget or use a dictionary with better coverage"
    )]
    ZeroCoverage,
    #[error("cannot train a student on an empty pseudo-labeled set")]
    EmptyTrainingSet,
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("unsupported artifact version {found} (expected {expected})")]
    ArtifactVersion { found: u32, expected: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
