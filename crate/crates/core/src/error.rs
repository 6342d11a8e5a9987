use alloc::string::String;

/// Errors raised by the core estimation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("column `{0}` not found")]
    NamedColumnAbsent(String),
    #[error("cannot parse value at row {row}, column `{column}`: {reason}")]
    ParseFailure {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("positivity violated: {treated} treated and {control} control units")]
    PositivityViolation { treated: usize, control: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient degrees of freedom: n = {n}, p = {p}")]
    InsufficientDegreesOfFreedom { n: usize, p: usize },
    #[error("split leaves an empty child")]
    DegenerateSplit,
    #[error("no control candidates available for treated unit {0}")]
    NoCandidates(usize),
    #[error("brute-force oracle limited to 20 candidates, got {0}")]
    OracleTooLarge(usize),
    #[error("strategy requires binary outcomes in {{0, 1}}")]
    StrategyRequiresBinary,
    #[error("estimation impossible: {0}")]
    EstimationImpossible(String),
    #[error("invalid sample: requested {requested} treated units, {available} available")]
    InvalidSample { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid match problem: {0}")]
    InvalidProblem(String),
}

pub type Result<T> = core::result::Result<T, Error>;
