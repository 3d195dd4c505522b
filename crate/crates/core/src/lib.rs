//! Security analysis toolkit for round-robin differential-phase-shift QKD.
//!
//! * [`entropy`]: binary entropy and the two-argument entropy `phi`.
//! * [`bound`]: leakage bounds with and without the error-rate constraint,
//!   tolerable error rates.
//! * [`rates`]: channel models and asymptotic secret-key rates.
//! * [`decoy`]: three-intensity decoy estimation and experimental key rates.
//! * [`attack`]: explicit single-photon collective attacks with exact Holevo
//!   leakage, used to check the bound empirically.

pub mod attack;
pub mod bound;
pub mod decoy;
pub mod entropy;
pub mod error;
pub mod rates;

pub use bound::{
    corollary_holds, error_floor, leakage, leakage_bound, leakage_objective, original_bound,
    tolerant_error, BoundMode, BoundQuery, BoundResult, SimplexWeights, SolverOptions,
};
pub use entropy::{h2, h2_checked, phi, Probability};
pub use error::{Error, Result};
