use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected} weights, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("packet length L = {l} must be at least N + 1 = {} for photon number N = {n}", n + 1)]
    PacketTooShort { l: usize, n: usize },

    #[error("optimizer failed to converge: {0}")]
    NotConverged(String),

    #[error("decoy estimation failed: {0}")]
    Estimation(String),

    #[error("attack metrics undefined: {0}")]
    DegenerateAttack(String),
}

pub type Result<T> = std::result::Result<T, Error>;
