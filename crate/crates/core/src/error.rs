use thiserror::Error;

/// Errors raised by state algebra, estimators and script execution.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate register label `{0}`")]
    DuplicateLabel(String),

    #[error("unknown register label `{0}`")]
    UnknownLabel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("bad dimensions: {0}")]
    BadDims(String),

    /// A state failed validation; the string names the violated invariant.
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("register sets overlap: `{0}` appears more than once")]
    OverlappingPartition(String),

    #[error("inconsistent component dimensions: {0}")]
    InconsistentDims(String),

    #[error("bad probabilities: {0}")]
    BadProbabilities(String),

    #[error("operation on Eve's registers is not reversible: {0}")]
    IrreversibleEveOp(String),

    #[error("extension too small: {0}")]
    DimensionTooSmall(String),

    #[error("dimension {dim} exceeds the budget of {budget}")]
    BudgetExceeded { dim: usize, budget: usize },

    #[error("value out of range: {0}")]
    BadRange(String),

    #[error("bad message alphabet: {0}")]
    BadMu(String),

    #[error("witness layouts clash: {0}")]
    LayoutClash(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownName(String),

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("bad ensemble: {0}")]
    BadEnsemble(String),

    #[error("register belongs to the wrong party: {0}")]
    WrongParty(String),

    #[error("message register is not classical: {0}")]
    NotClassical(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
