use thiserror::Error;

/// Errors raised by the library.
///
/// Data errors (bad inputs) and internal faults (solver failures on inputs
/// that should always be solvable) are distinguished by [`Error::is_internal`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("negative probability mass {value} at category {category}")]
    NegativeMass { category: usize, value: f64 },

    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("at least 2 categories are required, got {0}")]
    TooFewCategories(usize),

    #[error("at most {max} categories are supported, got {k}")]
    KTooLarge { k: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("sample has no observed responses")]
    NoObservations,

    #[error("invalid marginal box: {0}")]
    InvalidBox(String),

    #[error("marginal box does not intersect the probability simplex (lower sum {lower_sum}, upper sum {upper_sum})")]
    InfeasibleBox { lower_sum: f64, upper_sum: f64 },

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("value {value} outside [0, {max}]")]
    OutOfRange { value: f64, max: f64 },

    #[error("endpoint value {value} is not attainable over the marginal boxes")]
    InfeasibleEndpoint { value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("linear program failure: {0}")]
    LpFailure(String),
}

impl Error {
    /// True for faults that valid inputs should never trigger.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::LpFailure(_) | Error::InfeasibleEndpoint { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
