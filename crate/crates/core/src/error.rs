use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("feature id {0} out of range")]
    FeatureOutOfRange(u32),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("label {0} is not covered by the cluster tree")]
    UncoveredLabel(u32),
    #[error("no shortlist for point {0}")]
    MissingShortlist(usize),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no propensity for label {0}")]
    MissingPropensity(u32),
    #[error("label space mismatch: {0} vs {1}")]
    LabelSpaceMismatch(usize, usize),
    #[error("bound violated: {0}")]
    BoundViolated(String),
}

pub type Result<T> = core::result::Result<T, Error>;
