use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("conditioning event has zero probability")]
    ZeroProbabilityEvent,
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("invalid utility: {0}")]
    InvalidUtility(String),
    #[error("dominated action: utility gap {0} is not positive")]
    DominatedAction(f64),
    #[error("family {0} has no feasible structure")]
    EmptyFamily(String),
    #[error("inconsistent grouping: profiles {0} and {1} straddle the grouping tolerance")]
    InconsistentGrouping(String, String),
    #[error("too many observation classes: {0} (limit {1})")]
    TooManyClasses(usize, usize),
    #[error("epsilon {eps} out of range for {name}")]
    EpsilonOutOfRange { name: String, eps: f64 },
    #[error("unsupported family for this operation: {0}")]
    UnsupportedFamily(String),
    #[error("invalid aggregator: {0}")]
    InvalidAggregator(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("linear program failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
