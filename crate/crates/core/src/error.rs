use thiserror::Error;

use crate::qp::QpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network is disconnected: bus {bus} is unreachable from bus 1")]
    DisconnectedGraph { bus: usize },
    #[error("line {line} has non-positive weight {weight}")]
    NonpositiveWeight { line: usize, weight: f64 },
    #[error("reduced Laplacian is singular")]
    SingularLaplacian,
    #[error("invalid line {line}: {reason}")]
    InvalidLine { line: usize, reason: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("injections do not sum to zero (sum = {sum:e})")]
    UnbalancedInjection { sum: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("market clearing is infeasible for the given bids")]
    MarketInfeasible,
    #[error("feasible set is empty (no balanced dispatch respects the flow limits)")]
    Infeasible,
    #[error("at least two prosumers are required, found {0}")]
    TooFewProsumers(usize),
    #[error("baseline cost is not positive (J = {0}); ratio undefined")]
    DegenerateBaseline(f64),
    #[error("scan interval is empty: [{lo}, {hi}]")]
    ScanIntervalEmpty { lo: f64, hi: f64 },
    #[error("scenario does not have the three-bus single-limited-line topology: {0}")]
    WrongTopology(String),
    #[error("quadratic program failed: {0}")]
    Qp(#[from] QpError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
