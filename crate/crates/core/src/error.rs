use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the discovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("column `{0}` has no observed values to impute from")]
    Unimputable(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("classifier reached only {best_accuracy:.4} training accuracy (target {target:.2})")]
    LikelihoodConvergence { best_accuracy: f64, target: f64 },

    #[error("augmented Lagrangian stopped with h(W) = {h:.3e} > tolerance")]
    NotearsConvergence { h: f64 },

    #[error("no correctly classified samples remain")]
    EmptyCohort,

    #[error("only {shared} shared variables between `{x}` and `{y}` (need at least 4)")]
    InsufficientOverlap { x: String, y: String, shared: usize },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("could not balance outcome: positive rate {rate:.3} outside [0.35, 0.65]")]
    Balance { rate: f64 },

    #[error("could not draw a stratified split with both classes in every fold")]
    Split,

    #[error("evaluation mismatch: {0}")]
    EvalMismatch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status: 2 config/input, 3 data degeneracy, 4 evaluation
    /// mismatch, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Schema(_)
            | Error::Validation(_)
            | Error::Config(_)
            | Error::Json(_) => 2,
            Error::Unimputable(_)
            | Error::Degenerate(_)
            | Error::DegenerateLabels
            | Error::LikelihoodConvergence { .. }
            | Error::NotearsConvergence { .. }
            | Error::EmptyCohort
            | Error::InsufficientOverlap { .. }
            | Error::Balance { .. }
            | Error::Split => 3,
            Error::EvalMismatch(_) => 4,
            Error::Shape(_) | Error::Precondition(_) | Error::UnknownNode(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
