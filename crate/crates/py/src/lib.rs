//! Python bindings: `import rrdps_py`.
//!
//! Results come back as small read-only classes; invalid arguments raise
//! `ValueError`, numerical failures `RuntimeError`.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rrdps_core::attack::{self, AncillaFamily, AttackSpec};
use rrdps_core::decoy::{self, DecoyIntensities, DecoyObservations};
use rrdps_core::rates::{self, ChannelModel, LeakageTable, ProtocolConfig, RateVariant};
use rrdps_core::{BoundMode, BoundQuery, Error, SolverOptions};

fn err(e: Error) -> PyErr {
    match e {
        Error::Domain { .. }
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch { .. }
        | Error::PacketTooShort { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_mode(name: &str) -> PyResult<BoundMode> {
    name.parse().map_err(err)
}

fn parse_family(name: &str) -> PyResult<AncillaFamily> {
    match name {
        "injective" => Ok(AncillaFamily::Injective),
        "shared_diagonal" => Ok(AncillaFamily::SharedDiagonal),
        "symmetric" => Ok(AncillaFamily::Symmetric),
        "constant" => Ok(AncillaFamily::Constant),
        other => Err(PyValueError::new_err(format!(
            "unknown ancilla family '{other}' \
             (expected injective, shared_diagonal, symmetric or constant)"
        ))),
    }
}

fn square<T: Copy + nalgebra::Scalar>(rows: &[Vec<T>], what: &str) -> PyResult<DMatrix<T>> {
    let l = rows.len();
    if rows.iter().any(|r| r.len() != l) {
        return Err(PyValueError::new_err(format!("{what} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(l, l, |i, j| rows[i][j]))
}

/// Binary entropy in bits.
#[pyfunction]
fn h2(p: f64) -> PyResult<f64> {
    rrdps_core::h2_checked(p).map_err(err)
}

/// `(x + y) h2(x / (x + y))`.
#[pyfunction]
fn phi(x: f64, y: f64) -> PyResult<f64> {
    rrdps_core::phi(x, y).map_err(err)
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rrdps_py")]
#[derive(Clone)]
struct BoundResult {
    iae: f64,
    argmax: Option<Vec<f64>>,
    converged: bool,
    gap: f64,
}

#[pymethods]
impl BoundResult {
    fn __repr__(&self) -> String {
        format!("BoundResult(iae={}, converged={})", self.iae, self.converged)
    }
}

/// Leakage per sifted bit for an `n`-photon packet of length `l`.
/// `mode` is original, unconstrained or constrained (which needs `error`).
#[pyfunction]
#[pyo3(signature = (l, n, mode, error=None))]
fn leakage_bound(l: usize, n: usize, mode: &str, error: Option<f64>) -> PyResult<BoundResult> {
    let q = BoundQuery::new(l, n, parse_mode(mode)?, error).map_err(err)?;
    let r = rrdps_core::leakage_bound(&q, &SolverOptions::default()).map_err(err)?;
    Ok(BoundResult {
        iae: r.iae,
        argmax: r.argmax.map(|w| w.into_inner()),
        converged: r.converged,
        gap: r.objective_gap_estimate,
    })
}

/// Largest bit error rate with a positive key, or None if there is none.
#[pyfunction]
#[pyo3(signature = (l, n=1, mode="constrained"))]
fn tolerant_error(l: usize, n: usize, mode: &str) -> PyResult<Option<f64>> {
    rrdps_core::tolerant_error(l, n, parse_mode(mode)?).map_err(err)
}

#[pyfunction]
fn corollary_holds(l: usize, n: usize) -> PyResult<bool> {
    rrdps_core::corollary_holds(l, n).map_err(err)
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rrdps_py")]
#[derive(Clone)]
struct RatePoint {
    variant: String,
    l: usize,
    loss_db: f64,
    gain: f64,
    error: Option<f64>,
    key_rate: f64,
    optimal_mu: f64,
    optimal_nu_th: Option<usize>,
    clamped: bool,
}

#[pymethods]
impl RatePoint {
    fn __repr__(&self) -> String {
        format!(
            "RatePoint(variant='{}', l={}, loss_db={}, key_rate={:e})",
            self.variant, self.l, self.loss_db, self.key_rate
        )
    }
}

/// Optimized key rate per pulse for every `(l, loss, variant)`.
#[pyfunction]
#[pyo3(signature = (l, losses, variants=vec!["original".to_string(), "proposed".to_string(), "bb84".to_string()],
                    dark_rate=1e-6, misalignment=0.015, ec_efficiency=1.0))]
fn rate_sweep(
    py: Python<'_>,
    l: Vec<usize>,
    losses: Vec<f64>,
    variants: Vec<String>,
    dark_rate: f64,
    misalignment: f64,
    ec_efficiency: f64,
) -> PyResult<Vec<RatePoint>> {
    let variants: Vec<RateVariant> = variants
        .iter()
        .map(|v| v.parse().map_err(err))
        .collect::<PyResult<_>>()?;
    let first = *losses
        .first()
        .ok_or_else(|| PyValueError::new_err("empty loss grid"))?;
    let channel = ChannelModel::new(first, dark_rate, misalignment).map_err(err)?;
    py.detach(|| {
        let table = LeakageTable::new();
        let mut out = Vec::new();
        for &len in &l {
            let template = ProtocolConfig::new(len, 0.1, 1, ec_efficiency)?;
            for row in rates::sweep(&channel, &template, &losses, &variants, &table)? {
                let p = row.point;
                out.push(RatePoint {
                    variant: row.variant.name().to_string(),
                    l: row.l,
                    loss_db: p.loss_db,
                    gain: p.gain,
                    error: p.error,
                    key_rate: p.key_rate,
                    optimal_mu: p.optimal_mu,
                    optimal_nu_th: p.optimal_nu_th,
                    clamped: p.clamped,
                });
            }
        }
        Ok(out)
    })
    .map_err(err)
}

/// Gain per packet and bit error rate at fixed `mu`.
#[pyfunction]
#[pyo3(signature = (l, mu, loss_db, dark_rate=1e-6, misalignment=0.015))]
fn gain_and_error(
    l: usize,
    mu: f64,
    loss_db: f64,
    dark_rate: f64,
    misalignment: f64,
) -> PyResult<(f64, Option<f64>)> {
    let ch = ChannelModel::new(loss_db, dark_rate, misalignment).map_err(err)?;
    let cfg = ProtocolConfig::new(l, mu, 1, 1.0).map_err(err)?;
    let ge = rates::gain_and_error(&ch, &cfg).map_err(err)?;
    Ok((ge.gain, ge.error))
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rrdps_py")]
#[derive(Clone)]
struct DecoyResult {
    y0: f64,
    y1: f64,
    e1: f64,
    e1_clipped: bool,
    /// Key rate with the error-independent bound; None when not positive.
    r1: Option<f64>,
    /// Key rate with the error-rate constrained bound.
    r2: Option<f64>,
}

#[pymethods]
impl DecoyResult {
    fn __repr__(&self) -> String {
        format!("DecoyResult(y1={:e}, e1={}, r1={:?}, r2={:?})", self.y1, self.e1, self.r1, self.r2)
    }
}

/// Three-intensity decoy estimation and the two experimental key rates.
#[pyfunction]
#[pyo3(signature = (mu_signal, mu_decoy, mu_vacuum, l, q_signal, e_signal, q_decoy, e_decoy,
                    q_vacuum, ec_efficiency=1.0))]
#[allow(clippy::too_many_arguments)]
fn decoy_analyze(
    mu_signal: f64,
    mu_decoy: f64,
    mu_vacuum: f64,
    l: usize,
    q_signal: f64,
    e_signal: f64,
    q_decoy: f64,
    e_decoy: f64,
    q_vacuum: f64,
    ec_efficiency: f64,
) -> PyResult<DecoyResult> {
    let intens = DecoyIntensities::new(mu_signal, mu_decoy, mu_vacuum, l).map_err(err)?;
    let obs = DecoyObservations::new(q_signal, e_signal, q_decoy, e_decoy, q_vacuum).map_err(err)?;
    let a = decoy::analyze(&intens, &obs, ec_efficiency).map_err(err)?;
    Ok(DecoyResult {
        y0: a.estimates.y0,
        y1: a.estimates.y1,
        e1: a.estimates.e1,
        e1_clipped: a.estimates.e1_clipped,
        r1: a.rate_without_error,
        r2: a.rate_with_error,
    })
}

/// The 65-pulse experiment re-evaluated: dict with rate_original,
/// rate_proposed, iae_tagged and e_src.
#[pyfunction]
fn recompute_l65() -> PyResult<std::collections::HashMap<&'static str, f64>> {
    let r = decoy::recompute_l65().map_err(err)?;
    Ok([
        ("rate_original", r.rate_original),
        ("rate_proposed", r.rate_proposed),
        ("iae_tagged", r.iae_tagged),
        ("e_src", r.e_src),
    ]
    .into_iter()
    .collect())
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rrdps_py")]
#[derive(Clone)]
struct AttackMetrics {
    aggregate_error: f64,
    aggregate_info: f64,
    x1: f64,
    x2: f64,
    total_yield: f64,
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rrdps_py")]
#[derive(Clone)]
struct BoundReport {
    metrics: AttackMetrics,
    jensen_slack: f64,
    holevo_slack: f64,
    constraint_slack: Option<f64>,
    bound: f64,
    theorem_slack: f64,
    violations: Vec<String>,
}

#[pymethods]
impl BoundReport {
    #[getter]
    fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn metrics_of(m: &attack::AttackMetrics) -> AttackMetrics {
    AttackMetrics {
        aggregate_error: m.aggregate_error,
        aggregate_info: m.aggregate_info,
        x1: m.x1,
        x2: m.x2,
        total_yield: m.total_yield(),
    }
}

/// A single-photon collective attack: real coefficients `c[i][j]` (photon
/// in pulse `j` moved to pulse `i`) and integer ancilla labels; equal labels
/// mean identical ancilla states, distinct labels orthogonal ones.
#[pyclass(frozen, module = "rrdps_py")]
struct Attack(AttackSpec);

#[pymethods]
impl Attack {
    #[new]
    fn new(coefficients: Vec<Vec<f64>>, labels: Vec<Vec<usize>>) -> PyResult<Self> {
        let c = square(&coefficients, "coefficients")?;
        let lab = square(&labels, "labels")?;
        AttackSpec::new(c, lab).map(Attack).map_err(err)
    }

    /// Coefficients with a standard labeling: injective, shared_diagonal,
    /// symmetric or constant.
    #[staticmethod]
    fn with_family(coefficients: Vec<Vec<f64>>, family: &str) -> PyResult<Self> {
        let c = square(&coefficients, "coefficients")?;
        AttackSpec::with_family(c, parse_family(family)?)
            .map(Attack)
            .map_err(err)
    }

    #[staticmethod]
    fn identity(l: usize, family: &str) -> PyResult<Self> {
        AttackSpec::identity(l, parse_family(family)?)
            .map(Attack)
            .map_err(err)
    }

    #[getter]
    fn l(&self) -> usize {
        self.0.l()
    }

    fn metrics(&self) -> PyResult<AttackMetrics> {
        attack::attack_metrics(&self.0).map(|m| metrics_of(&m)).map_err(err)
    }

    fn verify(&self) -> PyResult<BoundReport> {
        attack::verify_bound(&self.0).map(|r| report_of(&r)).map_err(err)
    }
}

fn report_of(r: &attack::BoundReport) -> BoundReport {
    BoundReport {
        metrics: metrics_of(&r.metrics),
        jensen_slack: r.jensen_slack,
        holevo_slack: r.holevo_slack,
        constraint_slack: r.constraint_slack,
        bound: r.bound,
        theorem_slack: r.theorem_slack,
        violations: r.violations().into_iter().map(String::from).collect(),
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rrdps_py")]
#[derive(Clone)]
struct MonteCarloSummary {
    l: usize,
    trials: usize,
    violations: usize,
    min_theorem_slack: f64,
    max_info: f64,
}

/// Checks the bound against `trials` random attacks.
#[pyfunction]
#[pyo3(signature = (l, trials=1000, seed=0))]
fn monte_carlo_verify(py: Python<'_>, l: usize, trials: usize, seed: u64) -> PyResult<MonteCarloSummary> {
    let s = py
        .detach(|| attack::monte_carlo_verify(l, trials, seed))
        .map_err(err)?;
    Ok(MonteCarloSummary {
        l: s.l,
        trials: s.trials,
        violations: s.violations,
        min_theorem_slack: s.min_theorem_slack,
        max_info: s.max_info,
    })
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rrdps_py")]
#[derive(Clone)]
struct SearchOutcome {
    best_info: f64,
    best_error: f64,
    bound: f64,
    evaluations: usize,
    gap: f64,
}

/// Local search for the most informative attack at error rate at most
/// `target_error`.
#[pyfunction]
#[pyo3(signature = (l, target_error, budget=20000, seed=0))]
fn brute_force_max_info(
    py: Python<'_>,
    l: usize,
    target_error: f64,
    budget: usize,
    seed: u64,
) -> PyResult<SearchOutcome> {
    let s = py
        .detach(|| attack::brute_force_max_info(l, target_error, budget, seed))
        .map_err(err)?;
    Ok(SearchOutcome {
        best_info: s.best_info,
        best_error: s.best_error,
        bound: s.bound,
        evaluations: s.evaluations,
        gap: s.gap(),
    })
}

#[pymodule]
fn rrdps_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(h2, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(leakage_bound, m)?)?;
    m.add_function(wrap_pyfunction!(tolerant_error, m)?)?;
    m.add_function(wrap_pyfunction!(corollary_holds, m)?)?;
    m.add_function(wrap_pyfunction!(rate_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(gain_and_error, m)?)?;
    m.add_function(wrap_pyfunction!(decoy_analyze, m)?)?;
    m.add_function(wrap_pyfunction!(recompute_l65, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_verify, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_max_info, m)?)?;
    m.add_class::<Attack>()?;
    m.add_class::<AttackMetrics>()?;
    m.add_class::<BoundReport>()?;
    m.add_class::<BoundResult>()?;
    m.add_class::<RatePoint>()?;
    m.add_class::<DecoyResult>()?;
    m.add_class::<MonteCarloSummary>()?;
    m.add_class::<SearchOutcome>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names() {
        for (name, f) in [
            ("injective", AncillaFamily::Injective),
            ("shared_diagonal", AncillaFamily::SharedDiagonal),
            ("symmetric", AncillaFamily::Symmetric),
            ("constant", AncillaFamily::Constant),
        ] {
            assert_eq!(parse_family(name).unwrap(), f);
        }
    }

    #[test]
    fn square_rows() {
        let m = square(&[vec![1.0, 2.0], vec![3.0, 4.0]], "c").unwrap();
        assert_eq!(m[(1, 0)], 3.0);
    }
}
