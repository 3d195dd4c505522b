//! Brute-force maximizer for the leakage problem: a dense simplex grid
//! bucketed by error floor, then a feasibility-preserving pattern search from
//! the best grid point of each bucket. Everything here is written from the
//! closed forms and shares no code with the library solver.

#![allow(dead_code)]

pub fn phi(x: f64, y: f64) -> f64 {
    let t = |v: f64| if v > 0.0 { v * v.log2() } else { 0.0 };
    t(x + y) - t(x) - t(y)
}

pub fn objective(l: usize, x: &[f64]) -> f64 {
    let n = x.len() - 1;
    (1..=n)
        .map(|k| phi((l - k) as f64 * x[k - 1], k as f64 * x[k]))
        .sum::<f64>()
        / (l - 1) as f64
}

/// `(i, j, alpha, beta)` zero-based, plus the coefficient of `x_{N+1}`.
fn floor_terms(l: usize, n: usize) -> (Vec<(usize, usize, f64, f64)>, f64) {
    let lf = l as f64;
    let pairs = if n % 2 == 1 {
        (1..=(n - 1) / 2)
            .map(|k| (2 * k - 1, 2 * k, lf - 2.0 * k as f64, 2.0 * k as f64))
            .collect()
    } else {
        (1..=n / 2)
            .map(|k| (2 * k - 2, 2 * k - 1, lf - 2.0 * k as f64 + 1.0, 2.0 * k as f64 - 1.0))
            .collect()
    };
    (pairs, (lf - n as f64 - 1.0) / 2.0)
}

pub fn floor(l: usize, x: &[f64]) -> f64 {
    let n = x.len() - 1;
    let (pairs, trailing) = floor_terms(l, n);
    let paired: f64 = pairs
        .iter()
        .map(|&(i, j, a, b)| ((a * x[i]).sqrt() - (b * x[j]).sqrt()).powi(2))
        .sum();
    (paired + trailing * x[n]) / (l - 1) as f64
}

/// Calls `f` on every vector of `parts` nonnegative integers summing to
/// `total`.
fn compositions(parts: usize, total: usize, f: &mut impl FnMut(&[usize])) {
    fn go(k: &mut Vec<usize>, parts: usize, left: usize, f: &mut impl FnMut(&[usize])) {
        if k.len() + 1 == parts {
            k.push(left);
            f(k);
            k.pop();
            return;
        }
        for v in 0..=left {
            k.push(v);
            go(k, parts, left - v, f);
            k.pop();
        }
    }
    go(&mut Vec::with_capacity(parts), parts, total, f);
}

struct XorShift(u64);

impl XorShift {
    fn unit(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Coordinate-transfer and random tangent pattern search. `feasible` maps a
/// trial point to an admissible one (or rejects it).
fn pattern_search(
    mut x: Vec<f64>,
    value: impl Fn(&[f64]) -> f64,
    feasible: impl Fn(Vec<f64>) -> Option<Vec<f64>>,
    initial_step: f64,
    seed: u64,
) -> (f64, Vec<f64>) {
    let dim = x.len();
    let mut v = value(&x);
    let mut rng = XorShift(seed | 1);
    let mut step = initial_step;
    while step > 1e-11 {
        let mut directions: Vec<Vec<f64>> = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                if i != j {
                    let mut d = vec![0.0; dim];
                    d[i] = 1.0;
                    d[j] = -1.0;
                    directions.push(d);
                }
            }
        }
        for _ in 0..2 * dim {
            let mut d: Vec<f64> = (0..dim).map(|_| rng.unit() * 2.0 - 1.0).collect();
            let mean = d.iter().sum::<f64>() / dim as f64;
            d.iter_mut().for_each(|c| *c -= mean);
            let scale = d.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            if scale > 0.0 {
                d.iter_mut().for_each(|c| *c /= scale);
                directions.push(d);
            }
        }
        let mut improved = false;
        for d in &directions {
            // Stop exactly on the boundary rather than stepping past it.
            let mut t = step;
            for (xi, di) in x.iter().zip(d) {
                if *di < 0.0 {
                    t = t.min(xi / -di);
                }
            }
            if t <= 0.0 {
                continue;
            }
            let trial: Vec<f64> = x.iter().zip(d).map(|(a, b)| (a + t * b).max(0.0)).collect();
            let Some(trial) = feasible(trial) else {
                continue;
            };
            let tv = value(&trial);
            if tv > v + 1e-16 {
                x = trial;
                v = tv;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (v, x)
}

/// Points spanning the zero-floor face: a balanced point per pair, plus each
/// coordinate that does not enter the floor.
fn face_atoms(l: usize, n: usize) -> Vec<Vec<f64>> {
    let (pairs, trailing) = floor_terms(l, n);
    let mut atoms = Vec::new();
    let mut used = vec![false; n + 1];
    for &(i, j, a, b) in &pairs {
        let mut x = vec![0.0; n + 1];
        x[i] = b / (a + b);
        x[j] = a / (a + b);
        used[i] = true;
        used[j] = true;
        atoms.push(x);
    }
    for k in 0..=n {
        if !used[k] && !(k == n && trailing > 0.0) {
            let mut x = vec![0.0; n + 1];
            x[k] = 1.0;
            atoms.push(x);
        }
    }
    atoms
}

fn combine(atoms: &[Vec<f64>], m: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; atoms[0].len()];
    for (atom, &w) in atoms.iter().zip(m) {
        for (xi, ai) in x.iter_mut().zip(atom) {
            *xi += w * ai;
        }
    }
    x
}

fn maximize_on_face(l: usize, n: usize, resolution: usize) -> (f64, Vec<f64>) {
    let atoms = face_atoms(l, n);
    let k = atoms.len();
    let mut best = (f64::NEG_INFINITY, vec![]);
    compositions(k, resolution, &mut |c| {
        let m: Vec<f64> = c.iter().map(|&v| v as f64 / resolution as f64).collect();
        let v = objective(l, &combine(&atoms, &m));
        if v > best.0 {
            best = (v, m);
        }
    });
    let (v, m) = pattern_search(
        best.1,
        |m| objective(l, &combine(&atoms, m)),
        Some,
        1.0 / resolution as f64,
        0x5eed,
    );
    (v, combine(&atoms, &m))
}

/// Best feasible value and point for each error rate in `errors`, which must
/// be sorted ascending.
pub fn maximize(l: usize, n: usize, errors: &[f64], resolution: usize) -> Vec<(f64, Vec<f64>)> {
    assert!(errors.windows(2).all(|w| w[0] <= w[1]));
    let dim = n + 1;
    let mut buckets: Vec<Option<(f64, Vec<f64>)>> = vec![None; errors.len()];
    let mut x = vec![0.0; dim];
    compositions(dim, resolution, &mut |c| {
        for (xi, &ci) in x.iter_mut().zip(c) {
            *xi = ci as f64 / resolution as f64;
        }
        let f = floor(l, &x);
        let Some(b) = errors.iter().position(|&e| f <= e) else {
            return;
        };
        let v = objective(l, &x);
        if buckets[b].as_ref().is_none_or(|(bv, _)| v > *bv) {
            buckets[b] = Some((v, x.clone()));
        }
    });

    let face = maximize_on_face(l, n, resolution);
    let atoms = face_atoms(l, n);
    let center = combine(&atoms, &vec![1.0 / atoms.len() as f64; atoms.len()]);

    let mut running: Option<(f64, Vec<f64>)> = None;
    let mut out = Vec::with_capacity(errors.len());
    for (idx, &e) in errors.iter().enumerate() {
        if let Some(cand) = buckets[idx].take() {
            if running.as_ref().is_none_or(|(rv, _)| cand.0 > *rv) {
                running = Some(cand);
            }
        }
        if e == 0.0 {
            out.push(face.clone());
            continue;
        }
        let start = match &running {
            Some((v, x)) if *v >= face.0 => x.clone(),
            _ => face.1.clone(),
        };
        // Pull infeasible trials back toward the face center; the floor is
        // convex, so the segment crosses the level set once.
        let repair = |trial: Vec<f64>| -> Option<Vec<f64>> {
            if floor(l, &trial) <= e {
                return Some(trial);
            }
            let at = |s: f64| -> Vec<f64> {
                center.iter().zip(&trial).map(|(c, t)| c + s * (t - c)).collect()
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if floor(l, &at(mid)) <= e {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(at(lo))
        };
        let refined = pattern_search(
            start,
            |x| objective(l, x),
            repair,
            1.0 / resolution as f64,
            (l * 1000 + n * 100 + idx) as u64,
        );
        let best = if refined.0 >= face.0 { refined } else { face.clone() };
        out.push(best);
    }
    out
}
