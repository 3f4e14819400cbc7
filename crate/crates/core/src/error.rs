use thiserror::Error;

pub type Result<T> = std::result::Result<T, UrnError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UrnError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("kernel mass at state {state:?} sums to {mass} (tolerance 1e-9)")]
    KernelMass { mass: f64, state: Vec<u64> },

    #[error("move {movement:?} drives type {index} negative at state {state:?}")]
    NegativeCount {
        movement: Vec<i32>,
        index: usize,
        state: Vec<u64>,
    },

    #[error("time {t} is beyond the recorded horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("path covers tau up to {available}, but {needed} is required")]
    InsufficientHorizon { needed: f64, available: f64 },

    #[error("coordinate {index} reached {value:e} at t = {t} (integration blow-up)")]
    IntegrationBlowUp { index: usize, value: f64, t: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("trajectory left the simplex interior at t = {t} (coordinate {index} = {value:e})")]
    LeftInterior { index: usize, value: f64, t: f64 },

    #[error("not a point of the simplex: {0}")]
    NotOnSimplex(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("no strictly positive interior equilibrium")]
    NoInteriorEquilibrium,

    #[error("{0} attractors are not supported here")]
    Unsupported(&'static str),
}
