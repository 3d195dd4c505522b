//! Explicit single-photon collective attacks.
//!
//! Eve applies `U|i>|e0> = sum_j c_ij |j>|e_ij>`. Ancilla states are unit
//! vectors of an abstract orthonormal family: two entries with the same label
//! share a state, distinct labels are orthogonal. For `U` to be an isometry,
//! entries of one column that are both nonzero must carry different labels.
//!
//! Indices are zero-based throughout.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bound::{leakage, BoundMode};
use crate::entropy::phi_unchecked;
use crate::error::{Error, Result};

/// Eigenvalues below this are treated as exact zeros.
const EIGEN_FLOOR: f64 = 1e-14;
/// Slack allowed in every bound check.
pub const CHECK_TOLERANCE: f64 = 1e-9;

/// Standard ancilla labelings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncillaFamily {
    /// Every entry gets its own orthogonal state.
    Injective,
    /// One state for the whole diagonal, distinct states elsewhere.
    SharedDiagonal,
    /// One state for the diagonal, `e_ij = e_ji` off the diagonal.
    Symmetric,
    /// A single state for everything; only physical when no column holds two
    /// nonzero coefficients.
    Constant,
}

impl AncillaFamily {
    fn label(self, l: usize, i: usize, j: usize) -> usize {
        match self {
            AncillaFamily::Injective => i * l + j,
            AncillaFamily::SharedDiagonal => {
                if i == j {
                    0
                } else {
                    1 + i * l + j
                }
            }
            AncillaFamily::Symmetric => {
                if i == j {
                    0
                } else {
                    1 + i.min(j) * l + i.max(j)
                }
            }
            AncillaFamily::Constant => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    c: DMatrix<f64>,
    labels: DMatrix<usize>,
}

impl AttackSpec {
    pub fn new(c: DMatrix<f64>, labels: DMatrix<usize>) -> Result<Self> {
        let l = c.nrows();
        if c.ncols() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: c.ncols(),
            });
        }
        if labels.shape() != (l, l) {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: labels.nrows(),
            });
        }
        if l < 2 {
            return Err(Error::InvalidParameter(format!("L = {l} must be at least 2")));
        }
        for &v in c.iter() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    name: "c_ij",
                    value: v,
                    domain: "[0, 1]",
                });
            }
        }
        for i in 0..l {
            let norm: f64 = c.row(i).iter().map(|v| v * v).sum();
            if norm > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has squared norm {norm} > 1"
                )));
            }
        }
        for j in 0..l {
            for i in 0..l {
                for k in i + 1..l {
                    if c[(i, j)] > 0.0 && c[(k, j)] > 0.0 && labels[(i, j)] == labels[(k, j)] {
                        return Err(Error::InvalidParameter(format!(
                            "rows {i} and {k} share an ancilla state in column {j}; \
                             the attack is not an isometry"
                        )));
                    }
                }
            }
        }
        Ok(AttackSpec { c, labels })
    }

    pub fn with_family(c: DMatrix<f64>, family: AncillaFamily) -> Result<Self> {
        let l = c.nrows();
        let labels = DMatrix::from_fn(l, l, |i, j| family.label(l, i, j));
        Self::new(c, labels)
    }

    /// `c = I`: Eve forwards every time bin untouched.
    pub fn identity(l: usize, family: AncillaFamily) -> Result<Self> {
        Self::with_family(DMatrix::identity(l, l), family)
    }

    pub fn l(&self) -> usize {
        self.c.nrows()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn labels(&self) -> &DMatrix<usize> {
        &self.labels
    }

    /// `(x1, x2)`: squared weight on and off the diagonal.
    pub fn diagonal_split(&self) -> (f64, f64) {
        let mut x1 = 0.0;
        let mut x2 = 0.0;
        for ((i, j), v) in self.c.iter().enumerate().map(|(k, v)| ((k % self.l(), k / self.l()), v)) {
            if i == j {
                x1 += v * v;
            } else {
                x2 += v * v;
            }
        }
        (x1, x2)
    }
}

/// Compact realization of the ancilla vectors touching columns `a` and `b`.
struct AncillaSpace {
    labels: Vec<usize>,
}

impl AncillaSpace {
    fn new(spec: &AttackSpec, a: usize, b: usize) -> Self {
        let mut labels: Vec<usize> = (0..spec.l())
            .flat_map(|i| [(i, a), (i, b)])
            .filter(|&(i, j)| spec.c[(i, j)] > 0.0)
            .map(|(i, j)| spec.labels[(i, j)])
            .collect();
        labels.sort_unstable();
        labels.dedup();
        AncillaSpace { labels }
    }

    fn dim(&self) -> usize {
        self.labels.len()
    }

    /// `c_ij |e_ij>` as a coordinate vector.
    fn vector(&self, spec: &AttackSpec, i: usize, j: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        let cij = spec.c[(i, j)];
        if cij > 0.0 {
            let k = self.labels.binary_search(&spec.labels[(i, j)]).unwrap();
            v[k] = cij;
        }
        v
    }
}

fn check_pair(l: usize, a: usize, b: usize) -> Result<()> {
    if !(a < b && b < l) {
        return Err(Error::InvalidParameter(format!(
            "pair ({a}, {b}) must satisfy a < b < L = {l}"
        )));
    }
    Ok(())
}

/// Eve's unnormalized states conditioned on `k_a xor k_b = 0` and `= 1`,
/// after averaging over the other key bits.
pub fn eve_states(spec: &AttackSpec, a: usize, b: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_pair(spec.l(), a, b)?;
    let space = AncillaSpace::new(spec, a, b);
    Ok(conditional_states(spec, &space, a, b))
}

fn conditional_states(
    spec: &AttackSpec,
    space: &AncillaSpace,
    a: usize,
    b: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = space.dim();
    let v = |i, j| space.vector(spec, i, j);
    let (aa, ba, bb, ab) = (v(a, a), v(b, a), v(b, b), v(a, b));
    let mut common = DMatrix::zeros(d, d);
    for i in (0..spec.l()).filter(|&i| i != a && i != b) {
        for u in [v(i, a), v(i, b)] {
            common += &u * u.transpose();
        }
    }
    let projector_sum = |s: f64| {
        let p = &aa + &ba * s;
        let q = &bb + &ab * s;
        &p * p.transpose() + &q * q.transpose()
    };
    (projector_sum(1.0) + &common, projector_sum(-1.0) + common)
}

/// Von Neumann entropy in bits of `rho / trace(rho)`.
pub fn von_neumann_entropy(rho: &DMatrix<f64>) -> f64 {
    let tr = rho.trace();
    if !(tr > 0.0) {
        return 0.0;
    }
    SymmetricEigen::new(rho / tr)
        .eigenvalues
        .iter()
        .filter(|&&p| p > EIGEN_FLOOR)
        .map(|&p| -p * p.log2())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMetrics {
    pub a: usize,
    pub b: usize,
    /// Unnormalized detection probability in this pair.
    pub yield_: f64,
    pub error: f64,
    /// Exact Holevo information about `k_a xor k_b`.
    pub info: f64,
    /// `phi(c_ba^2, c_aa^2) + phi(c_ab^2, c_bb^2)`, the orthonormal-ancilla
    /// value of `yield * info`.
    pub phi_form: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackMetrics {
    pub per_pair: Vec<PairMetrics>,
    pub aggregate_error: f64,
    pub aggregate_info: f64,
    pub x1: f64,
    pub x2: f64,
}

impl AttackMetrics {
    pub fn total_yield(&self) -> f64 {
        self.per_pair.iter().map(|p| p.yield_).sum()
    }
}

fn pair_metrics(spec: &AttackSpec, a: usize, b: usize) -> PairMetrics {
    let c2 = |i: usize, j: usize| spec.c[(i, j)] * spec.c[(i, j)];
    let yield_: f64 = (0..spec.l()).map(|i| c2(i, a) + c2(i, b)).sum();
    let phi_form = phi_unchecked(c2(b, a), c2(a, a)) + phi_unchecked(c2(a, b), c2(b, b));
    if yield_ <= 0.0 {
        return PairMetrics {
            a,
            b,
            yield_: 0.0,
            error: 0.0,
            info: 0.0,
            phi_form,
        };
    }
    let space = AncillaSpace::new(spec, a, b);
    let (rho0, rho1) = conditional_states(spec, &space, a, b);
    let mean = (&rho0 + &rho1) * 0.5;
    let info = (von_neumann_entropy(&mean)
        - 0.5 * von_neumann_entropy(&rho0)
        - 0.5 * von_neumann_entropy(&rho1))
    .clamp(0.0, 1.0);

    // Bob's wrong-port probabilities for either parity, counted directly.
    let v = |i, j| space.vector(spec, i, j);
    let (aa, ba, bb, ab) = (v(a, a), v(b, a), v(b, b), v(a, b));
    let mut p_e = (&aa + &ba - &ab - &bb).norm_squared();
    let mut p_e_flip = (&aa - &ba + &ab - &bb).norm_squared();
    for i in (0..spec.l()).filter(|&i| i != a && i != b) {
        let (u, w) = (v(i, a), v(i, b));
        p_e += (&u - &w).norm_squared();
        p_e_flip += (&u + &w).norm_squared();
    }
    let error = ((0.5 * (p_e + p_e_flip)) / (2.0 * yield_)).clamp(0.0, 1.0);
    PairMetrics {
        a,
        b,
        yield_,
        error,
        info,
        phi_form,
    }
}

pub fn attack_metrics(spec: &AttackSpec) -> Result<AttackMetrics> {
    let l = spec.l();
    let (x1, x2) = spec.diagonal_split();
    if x1 + x2 <= 0.0 {
        return Err(Error::DegenerateAttack(
            "all coefficients vanish; no photon ever reaches Bob".into(),
        ));
    }
    let per_pair: Vec<PairMetrics> = (0..l)
        .flat_map(|a| (a + 1..l).map(move |b| (a, b)))
        .map(|(a, b)| pair_metrics(spec, a, b))
        .collect();
    let total: f64 = per_pair.iter().map(|p| p.yield_).sum();
    let aggregate_info = per_pair.iter().map(|p| p.yield_ * p.info).sum::<f64>() / total;
    let aggregate_error = per_pair.iter().map(|p| p.yield_ * p.error).sum::<f64>() / total;
    Ok(AttackMetrics {
        per_pair,
        aggregate_error,
        aggregate_info,
        x1,
        x2,
    })
}

/// Outcome of the four bound checks; every slack is `rhs - lhs` and should be
/// `>= -CHECK_TOLERANCE`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub metrics: AttackMetrics,
    /// Concavity step: `phi((L-1) x1, x2) - sum of per-pair phi forms`.
    pub jensen_slack: f64,
    /// Smallest `phi_form - yield * info` over the pairs.
    pub holevo_slack: f64,
    /// `2 (L-1) E / (L-2) - x2 / (x1 + x2)`; `None` for `L = 2`.
    pub constraint_slack: Option<f64>,
    /// Bound at the attack's own error rate.
    pub bound: f64,
    /// `bound - aggregate_info`.
    pub theorem_slack: f64,
}

impl BoundReport {
    pub fn violations(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.jensen_slack < -CHECK_TOLERANCE {
            v.push("jensen");
        }
        if self.holevo_slack < -CHECK_TOLERANCE {
            v.push("holevo");
        }
        if self.constraint_slack.is_some_and(|s| s < -CHECK_TOLERANCE) {
            v.push("error-constraint");
        }
        if self.theorem_slack < -CHECK_TOLERANCE {
            v.push("theorem");
        }
        v
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty()
    }
}

pub fn verify_bound(spec: &AttackSpec) -> Result<BoundReport> {
    let metrics = attack_metrics(spec)?;
    let l = spec.l();
    let lf = l as f64;
    let (x1, x2) = (metrics.x1, metrics.x2);
    let phi_sum: f64 = metrics.per_pair.iter().map(|p| p.phi_form).sum();
    let jensen_slack = phi_unchecked((lf - 1.0) * x1, x2) - phi_sum;
    let holevo_slack = metrics
        .per_pair
        .iter()
        .map(|p| p.phi_form - p.yield_ * p.info)
        .fold(f64::INFINITY, f64::min);
    let constraint_slack =
        (l > 2).then(|| 2.0 * (lf - 1.0) * metrics.aggregate_error / (lf - 2.0) - x2 / (x1 + x2));
    let bound = leakage(
        l,
        1,
        BoundMode::Constrained,
        Some(metrics.aggregate_error.min(0.5)),
    )?;
    let theorem_slack = bound - metrics.aggregate_info;
    Ok(BoundReport {
        metrics,
        jensen_slack,
        holevo_slack,
        constraint_slack,
        bound,
        theorem_slack,
    })
}

/// Random attack with coefficients drawn as square roots of a Dirichlet(1)
/// row, pulled toward the diagonal by a random amount and scaled to a row
/// norm in `[0.5, 1]`. The ancilla family is picked uniformly.
pub fn random_attack<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Result<AttackSpec> {
    match rng.random_range(0..3) {
        0 => {
            let c = random_coefficients(l, rng);
            let family = if rng.random_bool(0.5) {
                AncillaFamily::Injective
            } else {
                AncillaFamily::Symmetric
            };
            AttackSpec::with_family(c, family)
        }
        1 => {
            // One shared state is only an isometry on a permutation support.
            let mut perm: Vec<usize> = (0..l).collect();
            for k in (1..l).rev() {
                perm.swap(k, rng.random_range(0..=k));
            }
            let c = DMatrix::from_fn(l, l, |i, j| {
                if perm[i] == j {
                    rng.random_range(0.5..=1.0)
                } else {
                    0.0
                }
            });
            AttackSpec::with_family(c, AncillaFamily::Constant)
        }
        _ => {
            let c = random_coefficients(l, rng);
            let pool = l.max(2);
            let mut labels = DMatrix::from_fn(l, l, |_, _| rng.random_range(0..pool));
            // Repair column collisions with fresh labels.
            let mut fresh = pool;
            for j in 0..l {
                for i in 0..l {
                    let clash = (0..i).any(|k| labels[(k, j)] == labels[(i, j)]);
                    if clash {
                        labels[(i, j)] = fresh;
                        fresh += 1;
                    }
                }
            }
            AttackSpec::new(c, labels)
        }
    }
}

fn random_coefficients<R: Rng + ?Sized>(l: usize, rng: &mut R) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(l, l);
    for i in 0..l {
        let mut w: Vec<f64> = (0..l).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        let pull: f64 = rng.random();
        for (j, wj) in w.iter_mut().enumerate() {
            *wj = (1.0 - pull) * *wj / total + if i == j { pull } else { 0.0 };
        }
        let norm: f64 = rng.random_range(0.5..=1.0);
        for j in 0..l {
            c[(i, j)] = norm * w[j].sqrt();
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub l: usize,
    pub trials: usize,
    pub violations: usize,
    /// Smallest theorem slack seen (infinite when there were no trials).
    pub min_theorem_slack: f64,
    /// Largest `aggregate_info` seen.
    pub max_info: f64,
}

/// Samples `trials` random attacks and runs [`verify_bound`] on each. Trial
/// `k` uses ChaCha stream `k` of `seed`, so results do not depend on the
/// thread count.
pub fn monte_carlo_reports(l: usize, trials: usize, seed: u64) -> Result<Vec<BoundReport>> {
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            verify_bound(&random_attack(l, &mut rng)?)
        })
        .collect()
}

impl MonteCarloSummary {
    pub fn from_reports(l: usize, reports: &[BoundReport]) -> Self {
        MonteCarloSummary {
            l,
            trials: reports.len(),
            violations: reports.iter().filter(|r| !r.passed()).count(),
            min_theorem_slack: reports
                .iter()
                .map(|r| r.theorem_slack)
                .fold(f64::INFINITY, f64::min),
            max_info: reports
                .iter()
                .map(|r| r.metrics.aggregate_info)
                .fold(0.0, f64::max),
        }
    }
}

pub fn monte_carlo_verify(l: usize, trials: usize, seed: u64) -> Result<MonteCarloSummary> {
    Ok(MonteCarloSummary::from_reports(
        l,
        &monte_carlo_reports(l, trials, seed)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Best `aggregate_info` among feasible attacks (0 from the trivial
    /// attack when nothing better turns up).
    pub best_info: f64,
    /// Error rate of the best attack.
    pub best_error: f64,
    /// Constrained bound at the target error rate.
    pub bound: f64,
    pub evaluations: usize,
    /// False when the budget was zero.
    pub searched: bool,
}

impl SearchOutcome {
    pub fn gap(&self) -> f64 {
        self.bound - self.best_info
    }
}

/// Randomized local search for the most informative attack with error rate at
/// most `target_error`. Infeasible iterates descend on the error rate first.
pub fn brute_force_max_info(
    l: usize,
    target_error: f64,
    budget: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    if l < 3 {
        return Err(Error::InvalidParameter(format!("L = {l} must be at least 3")));
    }
    if !(0.0..=0.5).contains(&target_error) {
        return Err(Error::Domain {
            name: "target_error",
            value: target_error,
            domain: "[0, 0.5]",
        });
    }
    let bound = leakage(l, 1, BoundMode::Constrained, Some(target_error))?;
    let mut best = (0.0, 0.0);
    if budget == 0 {
        return Ok(SearchOutcome {
            best_info: 0.0,
            best_error: 0.0,
            bound,
            evaluations: 0,
            searched: false,
        });
    }
    const PATIENCE: usize = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Feasible points rank above infeasible ones, then by information, and
    // infeasible ones by how close they are.
    let score = |m: &AttackMetrics| -> (bool, f64) {
        if m.aggregate_error <= target_error {
            (true, m.aggregate_info)
        } else {
            (false, -m.aggregate_error)
        }
    };
    let mut evaluations = 0;
    while evaluations < budget {
        let family = if rng.random_bool(0.8) {
            AncillaFamily::Symmetric
        } else {
            AncillaFamily::SharedDiagonal
        };
        let mut c = random_coefficients(l, &mut rng);
        let Ok(m) = attack_metrics(&AttackSpec::with_family(c.clone(), family)?) else {
            continue;
        };
        evaluations += 1;
        let mut current = score(&m);
        if current.0 && current.1 > best.0 {
            best = (m.aggregate_info, m.aggregate_error);
        }
        let mut step = 0.2;
        let mut stale = 0;
        while evaluations < budget && stale < PATIENCE {
            let mut trial = c.clone();
            let moves = rng.random_range(1..=3);
            for _ in 0..moves {
                let (i, j) = (rng.random_range(0..l), rng.random_range(0..l));
                trial[(i, j)] = (trial[(i, j)] + step * (rng.random::<f64>() * 2.0 - 1.0)).max(0.0);
            }
            for i in 0..l {
                let norm = trial.row(i).norm();
                if norm > 1.0 {
                    trial.row_mut(i).unscale_mut(norm);
                }
            }
            evaluations += 1;
            let Ok(m) = attack_metrics(&AttackSpec::with_family(trial.clone(), family)?) else {
                stale += 1;
                continue;
            };
            let s = score(&m);
            if s > current {
                c = trial;
                current = s;
                stale = 0;
                if s.0 && s.1 > best.0 {
                    best = (m.aggregate_info, m.aggregate_error);
                }
            } else {
                stale += 1;
                if stale % 50 == 0 {
                    step = (step * 0.5).max(1e-4);
                }
            }
        }
    }
    Ok(SearchOutcome {
        best_info: best.0,
        best_error: best.1,
        bound,
        evaluations,
        searched: true,
    })
}
