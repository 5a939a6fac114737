use thiserror::Error;

/// Everything that can go wrong while loading data, building control sets or
/// estimating disparity.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("zero-norm feature vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature vector has a non-finite entry at position {index}")]
    NonFinite { index: usize },

    #[error("feature vector must have at least one coordinate")]
    EmptyVector,

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("need at least {required} examples of label {label}, found {found}")]
    InsufficientClassExamples {
        label: u8,
        required: usize,
        found: usize,
    },

    #[error("need at least {required} examples, found {found}")]
    InsufficientExamples { required: usize, found: usize },

    #[error("group {group} has {size} element(s); at least 2 are required")]
    GroupTooSmall { group: u8, size: usize },

    #[error(
        "degenerate normalization for group {group}: u - l = {gap:e} (estimated gamma {gamma_hat:.6})"
    )]
    DegenerateNormalization { group: u8, gap: f64, gamma_hat: f64 },

    #[error("index {index} out of range for collection of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),

    #[error("invalid label {0:?}: expected 0, 1 or empty")]
    InvalidLabel(String),

    #[error("malformed feature file: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AuditError {
    /// Short machine-readable tag, used by the experiment harness to record
    /// failed cells.
    pub fn kind(&self) -> &'static str {
        match self {
            AuditError::ZeroVector => "zero_vector",
            AuditError::DimensionMismatch { .. } => "dimension_mismatch",
            AuditError::NonFinite { .. } => "non_finite",
            AuditError::EmptyVector => "empty_vector",
            AuditError::EmptySet(_) => "empty_set",
            AuditError::InsufficientClassExamples { .. } => "insufficient_class_examples",
            AuditError::InsufficientExamples { .. } => "insufficient_examples",
            AuditError::GroupTooSmall { .. } => "group_too_small",
            AuditError::DegenerateNormalization { .. } => "degenerate_normalization",
            AuditError::IndexOutOfRange { .. } => "index_out_of_range",
            AuditError::InvalidParameter(_) => "invalid_parameter",
            AuditError::InfeasibleConfig(_) => "infeasible_config",
            AuditError::InvalidLabel(_) => "invalid_label",
            AuditError::Format(_) => "format",
            AuditError::Csv(_) => "csv",
            AuditError::Json(_) => "json",
            AuditError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, AuditError>;
