use thiserror::Error;

pub type Result<T, E = QlyapError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QlyapError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("state `{name}` is not normalized (norm {norm})")]
    NotNormalized { name: String, norm: f64 },

    #[error("state `{name}` must have dimension >= 2, found {dim}")]
    TooSmall { name: String, dim: usize },

    #[error("operator `{name}` is not square ({rows}x{cols})")]
    NotSquare {
        name: String,
        rows: usize,
        cols: usize,
    },

    #[error("operator `{name}` is not Hermitian: entry ({row}, {col}) deviates by {deviation:e}")]
    NotHermitian {
        name: String,
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("operator `{name}` is not traceless (trace {trace:e})")]
    NotTraceless { name: String, trace: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("assumption {assumption} does not hold: {detail}")]
    AssumptionFailed {
        assumption: &'static str,
        detail: String,
    },

    #[error("integration failure at step {step}: post-update norm {norm:e} (dt too large?)")]
    Integration { step: usize, norm: f64 },

    #[error("unknown controller `{0}`")]
    UnknownController(String),

    #[error("invalid field `{field}`: {reason}")]
    Definition { field: String, reason: String },

    #[error("failed to parse system definition: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl QlyapError {
    /// Input-validation errors, as opposed to numerical or I/O failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Self::Integration { .. } | Self::Io(_) | Self::Csv(_))
    }
}
