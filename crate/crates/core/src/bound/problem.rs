//! Closed forms for the leakage objective and the error-rate floor, with the
//! analytic derivatives the barrier solver needs.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;

use super::solver::Atom;
use crate::entropy::phi_unchecked;

/// A balanced-pair term `(sqrt(alpha x_i) - sqrt(beta x_j))^2` of the floor.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// The maximization instance for packet length `l` and photon number `n`,
/// over weights `x_1 .. x_{n+1}` (stored zero-based).
#[derive(Debug, Clone)]
pub(crate) struct LeakageProblem {
    pub l: usize,
    pub n: usize,
    pairs: Vec<PairTerm>,
    /// Coefficient of `x_{n+1}` in the floor, before the `1/(L-1)` scale.
    trailing: f64,
}

impl LeakageProblem {
    pub fn new(l: usize, n: usize) -> Self {
        let lf = l as f64;
        let mut pairs = Vec::new();
        if n % 2 == 1 {
            // (x_{2k}, x_{2k+1}) with weights (L - 2k, 2k)
            for k in 1..=(n - 1) / 2 {
                pairs.push(PairTerm {
                    i: 2 * k - 1,
                    j: 2 * k,
                    alpha: lf - 2.0 * k as f64,
                    beta: 2.0 * k as f64,
                });
            }
        } else {
            // (x_{2k-1}, x_{2k}) with weights (L - 2k + 1, 2k - 1)
            for k in 1..=n / 2 {
                pairs.push(PairTerm {
                    i: 2 * k - 2,
                    j: 2 * k - 1,
                    alpha: lf - 2.0 * k as f64 + 1.0,
                    beta: 2.0 * k as f64 - 1.0,
                });
            }
        }
        LeakageProblem {
            l,
            n,
            pairs,
            trailing: (lf - n as f64 - 1.0) / 2.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    fn scale(&self) -> f64 {
        1.0 / (self.l as f64 - 1.0)
    }

    fn term_weights(&self, k: usize) -> (f64, f64) {
        // term k couples x[k] and x[k+1]
        ((self.l - k - 1) as f64, (k + 1) as f64)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let total: f64 = (0..self.n)
            .map(|k| {
                let (a, b) = self.term_weights(k);
                phi_unchecked(a * x[k].max(0.0), b * x[k + 1].max(0.0))
            })
            .sum();
        total * self.scale()
    }

    pub fn objective_derivatives(&self, x: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let dim = self.dim();
        let s = self.scale() / LN_2;
        let mut grad = vec![0.0; dim];
        let mut hess = DMatrix::zeros(dim, dim);
        for k in 0..self.n {
            let (a, b) = self.term_weights(k);
            let u = a * x[k];
            let v = b * x[k + 1];
            // Derivatives at a vanishing argument only touch coordinates that
            // the reduced map never moves, so they are left at zero.
            if u <= 0.0 || v <= 0.0 {
                continue;
            }
            let t = u + v;
            grad[k] += s * a * (t / u).ln();
            grad[k + 1] += s * b * (t / v).ln();
            hess[(k, k)] -= s * a * a * v / (u * t);
            hess[(k + 1, k + 1)] -= s * b * b * u / (v * t);
            hess[(k, k + 1)] += s * a * b / t;
            hess[(k + 1, k)] += s * a * b / t;
        }
        (self.objective(x), grad, hess)
    }

    pub fn error_floor(&self, x: &[f64]) -> f64 {
        let mut total: f64 = self
            .pairs
            .iter()
            .map(|p| {
                let d = (p.alpha * x[p.i].max(0.0)).sqrt() - (p.beta * x[p.j].max(0.0)).sqrt();
                d * d
            })
            .sum();
        total += self.trailing * x[self.n].max(0.0);
        total * self.scale()
    }

    /// Floor derivatives; only valid in the strict interior `x > 0`.
    pub fn error_floor_derivatives(&self, x: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let dim = self.dim();
        let s = self.scale();
        let mut grad = vec![0.0; dim];
        let mut hess = DMatrix::zeros(dim, dim);
        for p in &self.pairs {
            let (xa, xb) = (x[p.i], x[p.j]);
            let r = (p.alpha * p.beta).sqrt();
            grad[p.i] += s * (p.alpha - r * (xb / xa).sqrt());
            grad[p.j] += s * (p.beta - r * (xa / xb).sqrt());
            hess[(p.i, p.i)] += s * 0.5 * r * xb.sqrt() / (xa * xa.sqrt());
            hess[(p.j, p.j)] += s * 0.5 * r * xa.sqrt() / (xb * xb.sqrt());
            let cross = -s * 0.5 * r / (xa * xb).sqrt();
            hess[(p.i, p.j)] += cross;
            hess[(p.j, p.i)] += cross;
        }
        grad[self.n] += s * self.trailing;
        (self.error_floor(x), grad, hess)
    }

    /// Largest floor value on the simplex. The floor is convex, so this is
    /// attained at a vertex.
    pub fn max_floor(&self) -> f64 {
        (0..self.dim())
            .map(|k| {
                let mut e = vec![0.0; self.dim()];
                e[k] = 1.0;
                self.error_floor(&e)
            })
            .fold(0.0, f64::max)
    }

    /// Atoms spanning the zero-floor face: one per balanced pair, plus every
    /// coordinate with a zero floor coefficient.
    pub fn zero_floor_atoms(&self) -> Vec<Atom> {
        let mut paired = vec![false; self.dim()];
        let mut atoms = Vec::new();
        for p in &self.pairs {
            paired[p.i] = true;
            paired[p.j] = true;
            let total = p.alpha + p.beta;
            atoms.push(vec![(p.i, p.beta / total), (p.j, p.alpha / total)]);
        }
        for (k, &is_paired) in paired.iter().enumerate() {
            if is_paired {
                continue;
            }
            if k == self.n && self.trailing > 0.0 {
                continue;
            }
            atoms.push(vec![(k, 1.0)]);
        }
        atoms.sort_by_key(|a| a[0].0);
        atoms
    }
}
