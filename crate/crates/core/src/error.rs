use thiserror::Error;

/// Errors raised by kernel construction, operator calculus, diagnostics and
/// the counterexample builder.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("transition table is empty")]
    Empty,

    #[error("transition table is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("row {row} is not stochastic (sum {sum}, min entry {min})")]
    NonStochasticRow { row: usize, sum: f64, min: f64 },

    #[error("chain is not ergodic (irreducible: {irreducible}, period: {period})")]
    NotErgodic { irreducible: bool, period: usize },

    #[error("iteration did not converge within {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("state {state} has zero stationary mass")]
    ZeroStationaryMass { state: usize },

    #[error("target weight of state {state} is not strictly positive")]
    ZeroTargetWeight { state: usize },

    #[error("weight graph is disconnected")]
    Disconnected,

    #[error("weight table is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },

    #[error("{count} states exceeds the dense cap of {cap}")]
    TooManyStates { count: usize, cap: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("observable is not centered under the stationary law (mean {mean:e})")]
    NotCentered { mean: f64 },

    #[error("no geometric decay certificate after {iterations} powers")]
    NoGeometricCertificate { iterations: usize },

    #[error("Poisson solve failed (residual {residual:e})")]
    SolveFailed { residual: f64 },

    #[error("long-run variance is negative beyond tolerance: {value:e}")]
    NegativeVariance { value: f64 },

    #[error("exact enumeration of {paths} paths is too large")]
    TooLargeForExact { paths: f64 },

    #[error("arcs do not fit on the circle (total length {total})")]
    ArcsDontFit { total: f64 },

    #[error("path of {n} steps exceeds the recording cap of {cap}; use the streaming walker")]
    PathTooLong { n: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
