//! Bounded Nelder-Mead simplex minimization.
//!
//! Bounds are enforced by projecting every trial point onto the box, so the
//! search never evaluates the objective outside it. Non-finite objective
//! values count as `+inf`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Convergence threshold on the spread of simplex values.
    pub f_tol: f64,
    /// Convergence threshold on the simplex diameter.
    pub x_tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iter: 400,
            f_tol: 1e-10,
            x_tol: 1e-5,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

impl NelderMead {
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], lower: &[f64], upper: &[f64]) -> Result<Minimum>
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        if n == 0 || lower.len() != n || upper.len() != n {
            return Err(Error::InvalidInput("bounds must match the parameter dimension".into()));
        }
        if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidInput("lower bound above upper bound".into()));
        }
        let mut eval = |x: &[f64]| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut start = x0.to_vec();
        project(&mut start, lower, upper);
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let v0 = eval(&start);
        simplex.push((start.clone(), v0));
        for i in 0..n {
            let mut p = start.clone();
            // step away from whichever bound is nearer
            p[i] = if p[i] + self.initial_step <= upper[i] {
                p[i] + self.initial_step
            } else {
                p[i] - self.initial_step
            };
            project(&mut p, lower, upper);
            let v = eval(&p);
            simplex.push((p, v));
        }

        let mut iterations = 0;
        while iterations < self.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            let flat = best.is_finite() && (worst - best).abs() <= self.f_tol * (1.0 + best.abs());
            if (flat && diameter <= self.x_tol) || diameter <= 1e-12 {
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for (p, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(p) {
                    *c += v / n as f64;
                }
            }
            let along = |coef: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + coef * (c - w))
                    .collect();
                project(&mut p, lower, upper);
                p
            };

            let reflected = along(1.0);
            let fr = eval(&reflected);
            if fr < simplex[0].1 {
                let expanded = along(2.0);
                let fe = eval(&expanded);
                simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (reflected, fr);
                continue;
            }
            let (contracted, fc) = if fr < simplex[n].1 {
                let p = along(0.5);
                let v = eval(&p);
                (p, v)
            } else {
                let p = along(-0.5);
                let v = eval(&p);
                (p, v)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
                continue;
            }
            // shrink toward the best vertex
            let best_p = simplex[0].0.clone();
            for (p, v) in simplex.iter_mut().skip(1) {
                for (x, b) in p.iter_mut().zip(&best_p) {
                    *x = b + 0.5 * (*x - b);
                }
                *v = eval(p);
            }
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        if !value.is_finite() {
            return Err(Error::OptimizationFailed("no finite objective value found".into()));
        }
        Ok(Minimum { x, value, iterations })
    }
}
