use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped so the CLI can map them onto stable exit codes
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Pegasus size m={0}: must be at least 2")]
    InvalidSize(usize),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("embedding overflows the target graph: qubit {index} >= {num_qubits}")]
    EmbeddingOverflow { index: usize, num_qubits: usize },

    #[error("no valid embedding found: {0}")]
    NoValidEmbedding(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("incomplete assignment: qubit {0} has no spin")]
    IncompleteAssignment(u32),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("rejected sampler response: {0}")]
    RejectedResponse(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bit budget violation: {0}")]
    Allocation(String),

    #[error("csv error at row {row}, column {column}: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("missing artifact {path}: run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("epoch {epoch}: {source}")]
    Training {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::MissingArtifact { .. }
            | Error::Parameter(_)
            | Error::Allocation(_) => 2,
            Error::Validation(_) | Error::RejectedResponse(_) => 3,
            Error::Capacity(_) | Error::NoValidEmbedding(_) | Error::EmbeddingOverflow { .. } => 4,
            Error::Training { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
