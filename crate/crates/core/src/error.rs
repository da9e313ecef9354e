use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("world generation failed after {attempts} attempts: {reason}")]
    GenerationFailure { attempts: usize, reason: String },

    #[error("subgoal {subgoal} is unreachable from ({x}, {y})")]
    UnreachableGoal { subgoal: usize, x: i32, y: i32 },

    #[error("unknown subgoal id {0}")]
    UnknownSubgoal(usize),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("prefix {prefix} out of range 1..={max}")]
    PrefixOutOfRange { prefix: usize, max: usize },

    #[error("codebook collapse: {unused} of {total} entries unused")]
    CodebookCollapse { unused: usize, total: usize },

    #[error("need at least {needed} images, got {got}")]
    TooFewImages { needed: usize, got: usize },

    #[error("sequence of length {len} exceeds context {context}")]
    ContextOverflow { len: usize, context: usize },

    #[error("token id {id} outside vocabulary of size {size}")]
    UnknownToken { id: u32, size: usize },

    #[error("unknown token string {0:?}")]
    UnknownWord(String),

    #[error("loss mask selects no positions")]
    EmptyMask,

    #[error("action position mismatch: {0}")]
    PositionMismatch(String),

    #[error("replay failed: {0}")]
    ReplayFailure(String),

    #[error("grammar violation in mode {mode}: {detail}")]
    GrammarViolation { mode: String, detail: String },

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("{what} hash mismatch: expected {expected}, found {found}")]
    HashMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("unsupported {what} version {found}")]
    Version { what: String, found: u32 },

    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(what: &str, detail: impl Into<String>) -> Self {
        Error::Malformed {
            what: what.to_string(),
            detail: detail.into(),
        }
    }

    /// Short machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid-config",
            Error::GenerationFailure { .. } => "generation-failure",
            Error::UnreachableGoal { .. } => "unreachable-goal",
            Error::UnknownSubgoal(_) => "unknown-subgoal",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::PrefixOutOfRange { .. } => "prefix-out-of-range",
            Error::CodebookCollapse { .. } => "collapse-error",
            Error::TooFewImages { .. } => "too-few-images",
            Error::ContextOverflow { .. } => "context-overflow",
            Error::UnknownToken { .. } | Error::UnknownWord(_) => "unknown-token",
            Error::EmptyMask => "empty-mask",
            Error::PositionMismatch(_) => "position-mismatch",
            Error::ReplayFailure(_) => "replay-failure",
            Error::GrammarViolation { .. } => "decode-grammar-violation",
            Error::Divergence { .. } => "divergence",
            Error::HashMismatch { .. } => "hash-mismatch",
            Error::Version { .. } => "version",
            Error::Malformed { .. } => "malformed",
            Error::EmptyInput(_) => "empty-input",
            Error::MissingArtifact(_) => "missing-artifact",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
        }
    }
}
