use thiserror::Error;

/// Reasons a MIL-CSV document can be rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("expected {expected} features, found {found}")]
    RaggedRow { expected: usize, found: usize },
    #[error("cannot parse number `{0}`")]
    BadNumber(String),
    #[error("unknown label token `{0}`")]
    UnknownLabel(String),
    #[error("row has fewer than four fields")]
    MissingFields,
    #[error("bag `{bag}` was already labeled {previous}")]
    InconsistentBagLabel { bag: String, previous: String },
    #[error("non-finite feature value `{0}`")]
    NonFinite(String),
    #[error("no data rows")]
    Empty,
}

#[derive(Debug, Error)]
pub enum PmiError {
    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid kernel specification `{0}`")]
    InvalidKernel(String),

    #[error("infeasible box constraint: {vars} variables with upper bound {upper} cannot sum to 1")]
    Infeasible { vars: usize, upper: f64 },

    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("matrix is not symmetric: |Q[{row}][{col}] - Q[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("partition does not match the data: {0}")]
    PartitionMismatch(String),

    #[error("grid oracle limited to {max} variables, got {got}")]
    OracleTooLarge { max: usize, got: usize },

    #[error("not enough bags labeled {label} for {k} folds: have {have}")]
    InsufficientBags {
        label: String,
        k: usize,
        have: usize,
    },

    #[error("bag `{0}` has no bag label")]
    UnlabeledBag(String),

    #[error("instance {bag}/{instance} has no ground-truth label")]
    UnlabeledInstance { bag: String, instance: usize },

    #[error("solver failed at PMI iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<PmiError>,
    },

    #[error("malformed model file at line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PmiError>;
