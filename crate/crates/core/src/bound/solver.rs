//! Interior-point (log-barrier) Newton ascent on the probability simplex.
//!
//! The leakage objective is a sum of concave, 1-homogeneous entropy terms and
//! the error floor is convex (`(sqrt(u) - sqrt(v))^2 = u + v - 2 sqrt(uv)`), so
//! the constrained problem is a concave maximization over a convex set and the
//! barrier path leads to the global maximum. The returned gap is the barrier
//! duality gap `m * mu`, a certified bound on the suboptimality.
//!
//! Variables live in a reduced space `w` mapped to the full weights by a list
//! of disjoint "atoms" (`x = sum_k w_k atom_k`). The identity map is used in
//! general; the zero-error face uses one atom per balanced pair.

use nalgebra::{DMatrix, DVector};

use super::problem::LeakageProblem;

/// Settings for the barrier path.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Target for the final duality gap `m * mu`, in bits.
    pub gap_tolerance: f64,
    /// Barrier weight of the first centering stage.
    pub initial_barrier: f64,
    /// Factor by which the barrier weight shrinks between stages.
    pub barrier_shrink: f64,
    /// Newton iteration cap per centering stage.
    pub max_newton_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tolerance: 1e-12,
            initial_barrier: 1e-2,
            barrier_shrink: 10.0,
            max_newton_steps: 200,
        }
    }
}

/// One sparse column of the reduced-to-full map.
pub(crate) type Atom = Vec<(usize, f64)>;

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gap: f64,
    pub converged: bool,
}

struct Evaluation {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

pub(crate) struct BarrierSolver<'a> {
    problem: &'a LeakageProblem,
    atoms: Vec<Atom>,
    cap: Option<f64>,
    opts: &'a SolverOptions,
}

impl<'a> BarrierSolver<'a> {
    pub fn new(
        problem: &'a LeakageProblem,
        atoms: Vec<Atom>,
        cap: Option<f64>,
        opts: &'a SolverOptions,
    ) -> Self {
        BarrierSolver {
            problem,
            atoms,
            cap,
            opts,
        }
    }

    fn expand(&self, w: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.problem.dim()];
        for (atom, &wk) in self.atoms.iter().zip(w) {
            for &(i, c) in atom {
                x[i] += c * wk;
            }
        }
        x
    }

    /// Pull an x-space gradient back to w-space.
    fn pull_grad(&self, gx: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.atoms.len(),
            self.atoms
                .iter()
                .map(|atom| atom.iter().map(|&(i, c)| c * gx[i]).sum::<f64>()),
        )
    }

    fn pull_hess(&self, hx: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.atoms.len();
        let mut h = DMatrix::zeros(m, m);
        for (a, atom_a) in self.atoms.iter().enumerate() {
            for (b, atom_b) in self.atoms.iter().enumerate().skip(a) {
                let mut s = 0.0;
                for &(i, ci) in atom_a {
                    for &(j, cj) in atom_b {
                        s += ci * cj * hx[(i, j)];
                    }
                }
                h[(a, b)] = s;
                h[(b, a)] = s;
            }
        }
        h
    }

    /// Barrier-augmented objective; `None` outside the strict interior.
    fn barrier_value(&self, w: &[f64], mu: f64) -> Option<f64> {
        if w.iter().any(|&v| v <= 0.0) {
            return None;
        }
        let x = self.expand(w);
        let mut value = self.problem.objective(&x);
        let mut log_sum: f64 = w.iter().map(|v| v.ln()).sum();
        if let Some(cap) = self.cap {
            let slack = cap - self.problem.error_floor(&x);
            if slack <= 0.0 {
                return None;
            }
            log_sum += slack.ln();
        }
        value += mu * log_sum;
        Some(value)
    }

    fn evaluate(&self, w: &[f64], mu: f64) -> Evaluation {
        let m = w.len();
        let x = self.expand(w);
        let (fv, fg, fh) = self.problem.objective_derivatives(&x);
        let mut grad = self.pull_grad(&fg);
        let mut hess = self.pull_hess(&fh);
        let mut value = fv;
        for k in 0..m {
            grad[k] += mu / w[k];
            hess[(k, k)] -= mu / (w[k] * w[k]);
            value += mu * w[k].ln();
        }
        if let Some(cap) = self.cap {
            let (gv, gg, gh) = self.problem.error_floor_derivatives(&x);
            let slack = cap - gv;
            let gg = self.pull_grad(&gg);
            let gh = self.pull_hess(&gh);
            grad -= &gg * (mu / slack);
            hess -= gh * (mu / slack);
            hess -= (&gg * gg.transpose()) * (mu / (slack * slack));
            value += mu * slack.ln();
        }
        Evaluation { value, grad, hess }
    }

    /// Newton direction for the equality-constrained quadratic model, solved in
    /// coordinates scaled by `w`. Returns the step and its Newton decrement.
    fn newton_step(&self, w: &[f64], eval: &Evaluation) -> Option<(DVector<f64>, f64)> {
        let m = w.len();
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for i in 0..m {
            for j in 0..m {
                kkt[(i, j)] = w[i] * eval.hess[(i, j)] * w[j];
            }
            kkt[(i, m)] = w[i];
            kkt[(m, i)] = w[i];
            rhs[i] = -w[i] * eval.grad[i];
        }
        let sol = kkt.lu().solve(&rhs)?;
        let d = DVector::from_iterator(m, (0..m).map(|i| w[i] * sol[i]));
        let decrement = -(d.transpose() * &eval.hess * &d)[(0, 0)];
        if !decrement.is_finite() {
            return None;
        }
        Some((d, decrement.max(0.0)))
    }

    /// Centers the barrier problem for weight `mu`, updating `w` in place.
    fn center(&self, w: &mut Vec<f64>, mu: f64) -> bool {
        const DECREMENT_TOL: f64 = 1e-15;
        for _ in 0..self.opts.max_newton_steps {
            let eval = self.evaluate(w, mu);
            let Some((d, decrement)) = self.newton_step(w, &eval) else {
                return false;
            };
            if decrement * 0.5 <= DECREMENT_TOL {
                return true;
            }
            let slope = eval.grad.dot(&d);
            let mut step = 1.0_f64;
            for (wi, di) in w.iter().zip(d.iter()) {
                if *di < 0.0 {
                    step = step.min(-0.99 * wi / di);
                }
            }
            let mut accepted = false;
            while step > 1e-18 {
                let trial: Vec<f64> = w.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
                if let Some(v) = self.barrier_value(&trial, mu) {
                    if v >= eval.value + 0.1 * step * slope {
                        *w = trial;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                // Roundoff floor: the model predicts less gain than f64 resolves.
                return decrement * 0.5 <= 1e-12;
            }
        }
        false
    }

    pub fn solve(&self, start: Vec<f64>) -> Outcome {
        let m = start.len();
        let barrier_terms = m as f64 + if self.cap.is_some() { 1.0 } else { 0.0 };
        let mut w = start;
        let mut mu = self.opts.initial_barrier;
        let mut converged = true;
        loop {
            converged &= self.center(&mut w, mu);
            if barrier_terms * mu <= self.opts.gap_tolerance {
                break;
            }
            mu /= self.opts.barrier_shrink;
        }
        let x = self.expand(&w);
        let value = self.problem.objective(&x);
        Outcome {
            x,
            value,
            gap: barrier_terms * mu,
            converged,
        }
    }
}
