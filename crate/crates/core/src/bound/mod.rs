//! Upper bounds on the eavesdropper's information per sifted key bit.
//!
//! For an `L`-pulse packet carrying `N` photons the leakage is bounded by the
//! maximum, over weights `x_1 .. x_{N+1}` on the probability simplex, of
//!
//! ```text
//!     sum_{n=1}^{N} phi((L - n) x_n, n x_{n+1}) / (L - 1)
//! ```
//!
//! and, when the observed bit error rate `E` is available, the weights are
//! further restricted to `error_floor(x) <= E`. The older phase-error-free
//! bound `h2(N / (L - 1))` is provided for comparison.

mod problem;
mod solver;

use crate::entropy::{h2_checked, phi_unchecked};
use crate::error::{Error, Result};

use problem::LeakageProblem;
use solver::BarrierSolver;
pub use solver::SolverOptions;

/// Which bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundMode {
    /// `h2(N / (L - 1))`, saturating at one bit once the argument reaches 1/2.
    Original,
    /// Maximum of the leakage objective over the whole simplex.
    Unconstrained,
    /// Maximum restricted to weights compatible with the observed error rate.
    Constrained,
}

impl BoundMode {
    pub const ALL: [BoundMode; 3] = [
        BoundMode::Original,
        BoundMode::Unconstrained,
        BoundMode::Constrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundMode::Original => "original",
            BoundMode::Unconstrained => "unconstrained",
            BoundMode::Constrained => "constrained",
        }
    }
}

impl std::str::FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(BoundMode::Original),
            "unconstrained" => Ok(BoundMode::Unconstrained),
            "constrained" => Ok(BoundMode::Constrained),
            other => Err(Error::InvalidParameter(format!(
                "unknown bound mode '{other}' (expected original, unconstrained or constrained)"
            ))),
        }
    }
}

impl std::fmt::Display for BoundMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A validated bound request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    l: usize,
    n: usize,
    error_rate: Option<f64>,
    mode: BoundMode,
}

impl BoundQuery {
    pub fn new(l: usize, n: usize, mode: BoundMode, error_rate: Option<f64>) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidParameter(format!(
                "packet length L = {l} must be at least 2"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidParameter(
                "photon number N must be at least 1".into(),
            ));
        }
        if mode != BoundMode::Original && l < n + 1 {
            return Err(Error::PacketTooShort { l, n });
        }
        match (mode, error_rate) {
            (BoundMode::Constrained, Some(e)) => {
                if !(0.0..=0.5).contains(&e) {
                    return Err(Error::Domain {
                        name: "error rate",
                        value: e,
                        domain: "[0, 0.5]",
                    });
                }
            }
            (BoundMode::Constrained, None) => {
                return Err(Error::InvalidParameter(
                    "the constrained bound needs an error rate".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(Error::InvalidParameter(format!(
                    "an error rate only applies to the constrained bound, not {mode}"
                )))
            }
            (_, None) => {}
        }
        Ok(BoundQuery {
            l,
            n,
            error_rate,
            mode,
        })
    }

    pub fn original(l: usize, n: usize) -> Result<Self> {
        Self::new(l, n, BoundMode::Original, None)
    }

    pub fn unconstrained(l: usize, n: usize) -> Result<Self> {
        Self::new(l, n, BoundMode::Unconstrained, None)
    }

    pub fn constrained(l: usize, n: usize, error_rate: f64) -> Result<Self> {
        Self::new(l, n, BoundMode::Constrained, Some(error_rate))
    }

    pub fn packet_length(&self) -> usize {
        self.l
    }

    pub fn photon_number(&self) -> usize {
        self.n
    }

    pub fn error_rate(&self) -> Option<f64> {
        self.error_rate
    }

    pub fn mode(&self) -> BoundMode {
        self.mode
    }
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidParameter("empty weight vector".into()));
        }
        if let Some(&bad) = x.iter().find(|v| !v.is_finite() || **v < -1e-15) {
            return Err(Error::Domain {
                name: "weight",
                value: bad,
                domain: "[0, inf)",
            });
        }
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Domain {
                name: "weight sum",
                value: sum,
                domain: "{1}",
            });
        }
        Ok(SimplexWeights(x.into_iter().map(|v| v.max(0.0)).collect()))
    }

    /// Normalizes an arbitrary nonnegative vector onto the simplex.
    pub fn normalized(x: Vec<f64>) -> Result<Self> {
        let sum: f64 = x.iter().map(|v| v.max(0.0)).sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidParameter(
                "cannot normalize a vector without positive mass".into(),
            ));
        }
        Self::new(x.into_iter().map(|v| v.max(0.0) / sum).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Outcome of a bound evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    /// Bits of leakage per sifted key bit, in `[0, 1]`.
    pub iae: f64,
    /// Maximizing weights; absent for the original bound, which is closed form.
    pub argmax: Option<SimplexWeights>,
    pub converged: bool,
    /// Certified upper bound on `true maximum - iae`.
    pub objective_gap_estimate: f64,
}

fn check_dims(l: usize, n: usize, weights: &SimplexWeights) -> Result<()> {
    if weights.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: weights.len(),
        });
    }
    if l < n + 1 {
        return Err(Error::PacketTooShort { l, n });
    }
    Ok(())
}

/// `sum_n phi((L - n) x_n, n x_{n+1}) / (L - 1)` for `N = weights.len() - 1`.
pub fn leakage_objective(l: usize, weights: &SimplexWeights) -> Result<f64> {
    let n = weights.len().saturating_sub(1);
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: weights.len(),
        });
    }
    check_dims(l, n, weights)?;
    let x = weights.as_slice();
    let total: f64 = (1..=n)
        .map(|k| phi_unchecked((l - k) as f64 * x[k - 1], k as f64 * x[k]))
        .sum();
    Ok(total / (l as f64 - 1.0))
}

/// Smallest error rate compatible with the weights: the balanced-pair sum
/// plus `(L - N - 1) x_{N+1} / 2`, all over `L - 1`. Pairs are
/// `(x_{2k}, x_{2k+1})` for odd `N` and `(x_{2k-1}, x_{2k})` for even `N`.
pub fn error_floor(l: usize, n: usize, weights: &SimplexWeights) -> Result<f64> {
    check_dims(l, n, weights)?;
    Ok(LeakageProblem::new(l, n).error_floor(weights.as_slice()))
}

/// Below this the constrained problem is solved on the zero-floor face.
const ZERO_ERROR: f64 = 1e-15;

fn solve_unconstrained(problem: &LeakageProblem, opts: &SolverOptions) -> solver::Outcome {
    let dim = problem.dim();
    let atoms = (0..dim).map(|k| vec![(k, 1.0)]).collect();
    BarrierSolver::new(problem, atoms, None, opts).solve(vec![1.0 / dim as f64; dim])
}

fn solve_zero_floor(problem: &LeakageProblem, opts: &SolverOptions) -> solver::Outcome {
    let atoms = problem.zero_floor_atoms();
    let m = atoms.len();
    if m == 1 {
        // A single admissible point.
        let mut x = vec![0.0; problem.dim()];
        for &(i, c) in &atoms[0] {
            x[i] = c;
        }
        let value = problem.objective(&x);
        return solver::Outcome {
            x,
            value,
            gap: 0.0,
            converged: true,
        };
    }
    BarrierSolver::new(problem, atoms, None, opts).solve(vec![1.0 / m as f64; m])
}

fn solve_capped(problem: &LeakageProblem, cap: f64, opts: &SolverOptions) -> solver::Outcome {
    let dim = problem.dim();
    // Strictly feasible start: shrink the zero-floor barycentre toward the
    // uniform point, which keeps the floor below cap / 2 by convexity.
    let mut face = vec![0.0; dim];
    let atoms = problem.zero_floor_atoms();
    for atom in &atoms {
        for &(i, c) in atom {
            face[i] += c / atoms.len() as f64;
        }
    }
    let uniform = vec![1.0 / dim as f64; dim];
    let floor_uniform = problem.error_floor(&uniform);
    let s = if floor_uniform > 0.0 {
        (0.5 * cap / floor_uniform).min(0.5)
    } else {
        0.5
    };
    let start: Vec<f64> = face
        .iter()
        .zip(&uniform)
        .map(|(f, u)| (1.0 - s) * f + s * u)
        .collect();
    let identity = (0..dim).map(|k| vec![(k, 1.0)]).collect();
    BarrierSolver::new(problem, identity, Some(cap), opts).solve(start)
}

fn to_result(outcome: solver::Outcome) -> Result<BoundResult> {
    let argmax = SimplexWeights::normalized(outcome.x)?;
    Ok(BoundResult {
        iae: outcome.value.clamp(0.0, 1.0),
        argmax: Some(argmax),
        converged: outcome.converged && outcome.value.is_finite(),
        objective_gap_estimate: outcome.gap,
    })
}

/// The original bound `h2(N / (L - 1))`, or one bit when `N / (L - 1) >= 1/2`.
pub fn original_bound(l: usize, n: usize) -> Result<f64> {
    if l < 2 {
        return Err(Error::InvalidParameter(format!(
            "packet length L = {l} must be at least 2"
        )));
    }
    let ratio = n as f64 / (l as f64 - 1.0);
    if ratio >= 0.5 {
        Ok(1.0)
    } else {
        h2_checked(ratio)
    }
}

/// Evaluates the requested bound.
///
/// Non-convergence is reported through [`BoundResult::converged`]; callers that
/// cannot tolerate it should check the flag.
pub fn leakage_bound(query: &BoundQuery, opts: &SolverOptions) -> Result<BoundResult> {
    let (l, n) = (query.l, query.n);
    match query.mode {
        BoundMode::Original => Ok(BoundResult {
            iae: original_bound(l, n)?,
            argmax: None,
            converged: true,
            objective_gap_estimate: 0.0,
        }),
        BoundMode::Unconstrained => {
            let problem = LeakageProblem::new(l, n);
            to_result(solve_unconstrained(&problem, opts))
        }
        BoundMode::Constrained => {
            let e = query.error_rate.expect("validated by BoundQuery");
            let problem = LeakageProblem::new(l, n);
            if e <= ZERO_ERROR {
                return to_result(solve_zero_floor(&problem, opts));
            }
            if e >= problem.max_floor() {
                return to_result(solve_unconstrained(&problem, opts));
            }
            let free = solve_unconstrained(&problem, opts);
            if problem.error_floor(&free.x) <= e {
                return to_result(free);
            }
            to_result(solve_capped(&problem, e, opts))
        }
    }
}

/// Convenience wrapper returning only the leakage value.
pub fn leakage(l: usize, n: usize, mode: BoundMode, error_rate: Option<f64>) -> Result<f64> {
    let query = BoundQuery::new(l, n, mode, error_rate)?;
    let result = leakage_bound(&query, &SolverOptions::default())?;
    if !result.converged {
        return Err(Error::NotConverged(format!(
            "{mode} bound at L = {l}, N = {n}, E = {error_rate:?}"
        )));
    }
    Ok(result.iae)
}

/// Bisection width for [`tolerant_error`].
pub const TOLERANCE_BISECTION_WIDTH: f64 = 1e-6;

/// Largest error rate `E` in `[0, 1/2]` at which `1 - h2(E) - I_AE(E)` is still
/// nonnegative, or `None` when no positive key fraction exists even at `E = 0`.
pub fn tolerant_error(l: usize, n: usize, mode: BoundMode) -> Result<Option<f64>> {
    if l < 2 || n < 1 {
        return Err(Error::InvalidParameter(format!(
            "need L >= 2 and N >= 1, got L = {l}, N = {n}"
        )));
    }
    let fixed = match mode {
        BoundMode::Constrained => None,
        other => Some(leakage(l, n, other, None)?),
    };
    let margin = |e: f64| -> Result<f64> {
        let iae = match fixed {
            Some(v) => v,
            None => leakage(l, n, BoundMode::Constrained, Some(e))?,
        };
        Ok(1.0 - h2_checked(e)? - iae)
    };
    if margin(0.0)? <= 1e-12 {
        return Ok(None);
    }
    if margin(0.5)? >= 0.0 {
        return Ok(Some(0.5));
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    while hi - lo > TOLERANCE_BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        if margin(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Whether the unconstrained bound stays strictly below one bit (by `1e-6`).
pub fn corollary_holds(l: usize, n: usize) -> Result<bool> {
    if l < n + 2 {
        return Err(Error::InvalidParameter(format!(
            "the check needs N <= L - 2, got L = {l}, N = {n}"
        )));
    }
    Ok(leakage(l, n, BoundMode::Unconstrained, None)? < 1.0 - 1e-6)
}
