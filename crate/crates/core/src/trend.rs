//! Sliding-window polynomial trend fitting.
//!
//! Times inside a window are mapped affinely onto `[-1, 1]` before the
//! Vandermonde design matrix is built, and the least-squares problem is solved
//! through a QR factorization.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// Largest supported polynomial order.
pub const MAX_ORDER: usize = 5;

/// A measurement (or pseudo measurement) at discrete index `k` and time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    pub k: u64,
    pub t: f64,
    pub value: Vec<f64>,
}

impl TimedSample {
    pub fn new(k: u64, t: f64, value: Vec<f64>) -> Self {
        TimedSample { k, t, value }
    }
}

/// The most recent `max_len` samples, strictly increasing in `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    samples: VecDeque<TimedSample>,
    max_len: usize,
}

impl Window {
    pub fn new(max_len: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        Ok(Window {
            samples: VecDeque::with_capacity(max_len + 1),
            max_len,
        })
    }

    /// Build a window from samples, keeping the last `max_len`.
    pub fn from_samples(max_len: usize, samples: impl IntoIterator<Item = TimedSample>) -> Result<Self> {
        let mut w = Window::new(max_len)?;
        for s in samples {
            w.push(s)?;
        }
        Ok(w)
    }

    pub fn push(&mut self, sample: TimedSample) -> Result<()> {
        if !sample.t.is_finite() || sample.value.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at k={}", sample.k)));
        }
        if let Some(last) = self.samples.back() {
            if sample.k <= last.k || sample.t <= last.t {
                return Err(Error::Ordering {
                    prev: last.k,
                    got: sample.k,
                });
            }
            if sample.value.len() != last.value.len() {
                return Err(dim_err(last.value.len(), sample.value.len()));
            }
        }
        self.samples.push_back(sample);
        while self.samples.len() > self.max_len {
            self.samples.pop_front();
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &TimedSample> + '_ {
        self.samples.iter()
    }

    pub fn last(&self) -> Option<&TimedSample> {
        self.samples.back()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Value dimension, or zero for an empty window.
    pub fn dim(&self) -> usize {
        self.samples.front().map_or(0, |s| s.value.len())
    }

    /// Column `coord` of the window values.
    pub fn column(&self, coord: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.value[coord]).collect()
    }
}

/// Polynomial `Σ c_i τ^i` in normalized time `τ = (t - t_center) / t_scale`,
/// one coefficient column per output coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTrend {
    pub coeffs: DMatrix<f64>,
    pub order: usize,
    pub t_center: f64,
    pub t_scale: f64,
    pub window_end: u64,
}

impl PolyTrend {
    /// Trend with explicit normalized-time coefficients (rows = powers).
    pub fn from_coeffs(coeffs: DMatrix<f64>, t_center: f64, t_scale: f64, window_end: u64) -> Result<Self> {
        if coeffs.nrows() == 0 || coeffs.ncols() == 0 {
            return Err(Error::InvalidInput("empty coefficient matrix".into()));
        }
        if !(t_scale > 0.0 && t_scale.is_finite()) || !t_center.is_finite() {
            return Err(Error::InvalidInput("time normalization must be finite with positive scale".into()));
        }
        Ok(PolyTrend {
            order: coeffs.nrows() - 1,
            coeffs,
            t_center,
            t_scale,
            window_end,
        })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn normalize(&self, t: f64) -> f64 {
        (t - self.t_center) / self.t_scale
    }

    /// Evaluate every coordinate at `t`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        (0..self.dim()).map(|c| self.eval_coord(t, c)).collect()
    }

    pub fn eval_coord(&self, t: f64, coord: usize) -> f64 {
        let tau = self.normalize(t);
        self.coeffs
            .column(coord)
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * tau + c)
    }

    /// Coefficients with respect to raw powers of `t`.
    pub fn raw_coeffs(&self) -> DMatrix<f64> {
        let n = self.order + 1;
        // τ^i = s^-i Σ_j C(i,j) t^j (-c)^(i-j)
        let mut out = DMatrix::zeros(n, self.dim());
        for i in 0..n {
            let inv_scale = self.t_scale.powi(-(i as i32));
            let mut binom = 1.0;
            for j in 0..=i {
                if j > 0 {
                    binom = binom * (i - j + 1) as f64 / j as f64;
                }
                let w = inv_scale * binom * (-self.t_center).powi((i - j) as i32);
                for c in 0..self.dim() {
                    out[(j, c)] += w * self.coeffs[(i, c)];
                }
            }
        }
        out
    }
}

/// Free-function form of [`PolyTrend::eval`].
pub fn eval_trend(trend: &PolyTrend, t: f64) -> Vec<f64> {
    trend.eval(t)
}

fn normalization(times: &[f64]) -> (f64, f64) {
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let half = 0.5 * (hi - lo);
    (0.5 * (hi + lo), if half > 0.0 { half } else { 1.0 })
}

/// Ordinary least-squares polynomial fit of the given order.
pub fn fit_trend(window: &Window, order: usize) -> Result<PolyTrend> {
    fit_trend_weighted(window, order, None)
}

/// Weighted least squares with per-sample weights (ordinary LS when `None`).
pub fn fit_trend_weighted(window: &Window, order: usize, weights: Option<&[f64]>) -> Result<PolyTrend> {
    let rhs = DMatrix::from_fn(window.len(), window.dim(), |i, c| window.samples[i].value[c]);
    solve_ls(window, rhs, order, weights)
}

/// Ordinary least-squares fit of a single coordinate.
pub fn fit_trend_coord(window: &Window, order: usize, coord: usize) -> Result<PolyTrend> {
    if coord >= window.dim() {
        return Err(dim_err(format!("coordinate < {}", window.dim()), coord));
    }
    let rhs = DMatrix::from_fn(window.len(), 1, |i, _| window.samples[i].value[coord]);
    solve_ls(window, rhs, order, None)
}

fn solve_ls(window: &Window, rhs: DMatrix<f64>, order: usize, weights: Option<&[f64]>) -> Result<PolyTrend> {
    let n = window.len();
    if n < order + 1 {
        return Err(Error::InsufficientData {
            needed: order + 1,
            got: n,
        });
    }
    if order > MAX_ORDER {
        return Err(Error::InvalidInput(format!("polynomial order {order} exceeds {MAX_ORDER}")));
    }
    let times = window.times();
    let (center, scale) = normalization(&times);
    let sqrt_w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(dim_err(n, w.len()));
            }
            if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
            }
            w.iter().map(|x| x.sqrt()).collect()
        }
        None => vec![1.0; n],
    };

    let design = DMatrix::from_fn(n, order + 1, |i, j| sqrt_w[i] * ((times[i] - center) / scale).powi(j as i32));
    let rhs = DMatrix::from_fn(rhs.nrows(), rhs.ncols(), |i, c| sqrt_w[i] * rhs[(i, c)]);

    let qr = design.qr();
    let rmat = qr.r();
    let diag_max = rmat.diagonal().amax();
    if !(diag_max > 0.0) || rmat.diagonal().iter().any(|d| d.abs() <= 1e-12 * diag_max) {
        return Err(Error::Conditioning("rank-deficient trend design matrix".into()));
    }
    let qtb = qr.q().transpose() * rhs;
    let coeffs = rmat
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Conditioning("singular triangular factor".into()))?;

    Ok(PolyTrend {
        coeffs,
        order,
        t_center: center,
        t_scale: scale,
        window_end: window.last().map_or(0, |s| s.k),
    })
}

/// Fit at the requested order once the window holds `order + 2` samples;
/// before that, fit at the highest order the data supports. The flag is
/// `true` while still warming up.
pub fn fit_trend_warm(window: &Window, order: usize) -> Result<(PolyTrend, bool)> {
    let (effective, warm) = warm_order(window, order)?;
    Ok((fit_trend(window, effective)?, warm))
}

/// Single-coordinate form of [`fit_trend_warm`].
pub fn fit_trend_coord_warm(window: &Window, order: usize, coord: usize) -> Result<(PolyTrend, bool)> {
    let (effective, warm) = warm_order(window, order)?;
    Ok((fit_trend_coord(window, effective, coord)?, warm))
}

fn warm_order(window: &Window, order: usize) -> Result<(usize, bool)> {
    if window.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok((order.min(window.len() - 1), window.len() < order + 2))
}

/// Fitting errors `y_t - F(t)` at every window time, in window order.
pub fn fitting_errors(window: &Window, trend: &PolyTrend) -> Vec<(f64, Vec<f64>)> {
    window
        .samples()
        .map(|s| {
            let f = trend.eval(s.t);
            (s.t, s.value.iter().zip(f).map(|(y, f)| y - f).collect())
        })
        .collect()
}

/// Fitting errors of one coordinate against a single-column trend.
pub(crate) fn coord_errors(window: &Window, trend: &PolyTrend, coord: usize) -> DVector<f64> {
    DVector::from_iterator(
        window.len(),
        window.samples().map(|s| s.value[coord] - trend.eval_coord(s.t, 0)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window_of(d: usize, f: impl Fn(f64) -> f64, ks: impl IntoIterator<Item = u64>) -> Window {
        Window::from_samples(
            d,
            ks.into_iter().map(|k| TimedSample::new(k, k as f64, vec![f(k as f64)])),
        )
        .unwrap()
    }

    // Plain normal-equation OLS used as an independent check.
    fn ols_oracle(ts: &[f64], ys: &[f64], order: usize) -> Vec<f64> {
        let n = order + 1;
        let mut ata = DMatrix::<f64>::zeros(n, n);
        let mut atb = DVector::<f64>::zeros(n);
        for (&t, &y) in ts.iter().zip(ys) {
            for i in 0..n {
                atb[i] += t.powi(i as i32) * y;
                for j in 0..n {
                    ata[(i, j)] += t.powi((i + j) as i32);
                }
            }
        }
        ata.lu().solve(&atb).unwrap().iter().copied().collect()
    }

    fn ssr(window: &Window, trend: &PolyTrend) -> f64 {
        fitting_errors(window, trend).iter().map(|(_, e)| e[0] * e[0]).sum()
    }

    #[test]
    fn constant_signal() {
        let w = window_of(5, |_| 7.0, 1..=5);
        let tr = fit_trend(&w, 2).unwrap();
        let raw = tr.raw_coeffs();
        assert!((raw[(0, 0)] - 7.0).abs() < 1e-12);
        assert!(raw[(1, 0)].abs() < 1e-12 && raw[(2, 0)].abs() < 1e-12);
        assert!((eval_trend(&tr, 123.4)[0] - 7.0).abs() < 1e-9);
    }

    #[test]
    fn linear_recovery_in_raw_coordinates() {
        let w = window_of(5, |t| 3.0 * t, 1..=5);
        let raw = fit_trend(&w, 1).unwrap().raw_coeffs();
        assert!(raw[(0, 0)].abs() < 1e-12);
        assert!((raw[(1, 0)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_exact() {
        let f = |t: f64| t * t - 2.0 * t + 1.0;
        let w = window_of(6, f, 1..=6);
        let tr = fit_trend(&w, 2).unwrap();
        let res: f64 = (1..=6).map(|k| (tr.eval(k as f64)[0] - f(k as f64)).powi(2)).sum::<f64>().sqrt();
        assert!(res < 1e-9);
        assert!(fitting_errors(&w, &tr).iter().all(|(_, e)| e[0].abs() < 1e-9));
    }

    #[test]
    fn eval_examples() {
        let c = PolyTrend::from_coeffs(DMatrix::from_element(1, 1, 7.0), 0.0, 1.0, 0).unwrap();
        assert_eq!(c.eval(-3.0)[0], 7.0);
        let p = PolyTrend::from_coeffs(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]), 0.0, 1.0, 0).unwrap();
        assert_eq!(p.eval(0.0)[0], 1.0);
        assert_eq!(p.eval(2.0)[0], 17.0);
    }

    #[test]
    fn errors_match_ols_oracle_for_sine_residual() {
        let f = |t: f64| t * t + t.sin();
        let ts: Vec<f64> = (1..=10).map(f64::from).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
        let w = window_of(10, f, 1..=10);
        let tr = fit_trend(&w, 2).unwrap();
        let beta = ols_oracle(&ts, &ys, 2);
        for ((t, e), y) in fitting_errors(&w, &tr).iter().zip(&ys) {
            let fit = beta[0] + beta[1] * t + beta[2] * t * t;
            assert!((e[0] - (y - fit)).abs() < 1e-7, "{} vs {}", e[0], y - fit);
        }
    }

    #[test]
    fn outlier_error_matches_oracle() {
        let ts: Vec<f64> = (1..=8).map(f64::from).collect();
        let mut ys: Vec<f64> = ts.iter().map(|t| 2.0 + 0.5 * t).collect();
        ys[4] += 10.0;
        let w = Window::from_samples(8, ts.iter().zip(&ys).map(|(&t, &y)| TimedSample::new(t as u64, t, vec![y])))
            .unwrap();
        let tr = fit_trend(&w, 2).unwrap();
        let beta = ols_oracle(&ts, &ys, 2);
        let errs = fitting_errors(&w, &tr);
        let want = ys[4] - (beta[0] + beta[1] * ts[4] + beta[2] * ts[4] * ts[4]);
        assert!((errs[4].1[0] - want).abs() < 1e-9);
        // the fit absorbs part of the outlier
        assert!(errs[4].1[0] > 5.0 && errs[4].1[0] < 10.0);
    }

    #[test]
    fn underdetermined_window() {
        let w = window_of(5, |t| t, 1..=2);
        assert_eq!(
            fit_trend(&w, 2),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        );
    }

    #[test]
    fn warm_up_reduces_order() {
        let w = window_of(5, |_| 4.0, [3]);
        let (tr, warm) = fit_trend_warm(&w, 2).unwrap();
        assert!(warm);
        assert_eq!(tr.order, 0);
        assert_eq!(tr.eval(3.0)[0], 4.0);
        let w = window_of(5, |t| t, 1..=4);
        let (tr, warm) = fit_trend_warm(&w, 2).unwrap();
        assert!(!warm);
        assert_eq!(tr.order, 2);
    }

    #[test]
    fn coordinate_fit_matches_joint_fit() {
        let w = Window::from_samples(
            6,
            (1..=6).map(|k| TimedSample::new(k, k as f64, vec![(k as f64).sqrt(), 2.0 - 0.1 * (k * k) as f64])),
        )
        .unwrap();
        let joint = fit_trend(&w, 2).unwrap();
        for c in 0..2 {
            let single = fit_trend_coord(&w, 2, c).unwrap();
            assert!((single.eval(3.5)[0] - joint.eval(3.5)[c]).abs() < 1e-12);
        }
        assert!(fit_trend_coord(&w, 2, 2).is_err());
    }

    #[test]
    fn window_rejects_out_of_order() {
        let mut w = window_of(3, |t| t, [4]);
        assert_eq!(
            w.push(TimedSample::new(4, 4.5, vec![0.0])),
            Err(Error::Ordering { prev: 4, got: 4 })
        );
        assert!(w.push(TimedSample::new(5, 5.0, vec![0.0, 1.0])).is_err());
    }

    #[test]
    fn weighted_fit_with_unit_weights_matches_ols() {
        let w = window_of(6, |t| (0.3 * t).cos(), 1..=6);
        let a = fit_trend(&w, 2).unwrap();
        let b = fit_trend_weighted(&w, 2, Some(&[1.0; 6])).unwrap();
        assert!((&a.coeffs - &b.coeffs).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn window_keeps_most_recent(n in 0usize..30, d in 1usize..10) {
            let w = window_of(d, |t| t, 1..=n as u64);
            prop_assert_eq!(w.len(), n.min(d));
            if n > 0 {
                prop_assert_eq!(w.last().unwrap().k, n as u64);
                prop_assert_eq!(w.samples().next().unwrap().k, (n - n.min(d) + 1) as u64);
            }
        }

        #[test]
        fn exact_on_polynomials(
            order in 0usize..=5,
            coeffs in proptest::collection::vec(-5.0f64..5.0, 6),
            start in 1u64..200,
            extra in 0usize..4,
        ) {
            let n = order + 1 + extra;
            let f = |t: f64| {
                let u = (t - start as f64) / 4.0;
                coeffs.iter().take(order + 1).rev().fold(0.0, |a, c| a * u + c)
            };
            let w = window_of(n, f, start..start + n as u64);
            let tr = fit_trend(&w, order).unwrap();
            let ymax = w.column(0).iter().fold(0.0f64, |m, y| m.max(y.abs()));
            for (_, e) in fitting_errors(&w, &tr) {
                prop_assert!(e[0].abs() < 1e-8 * (1.0 + ymax));
            }
        }

        #[test]
        fn ls_optimality(ys in proptest::collection::vec(-100.0f64..100.0, 6), which in 0usize..3, sign in prop::bool::ANY) {
            let w = Window::from_samples(6, ys.iter().enumerate().map(|(i, &y)| TimedSample::new(i as u64 + 1, i as f64 + 1.0, vec![y]))).unwrap();
            let tr = fit_trend(&w, 2).unwrap();
            let base = ssr(&w, &tr);
            let mut p = tr.clone();
            p.coeffs[(which, 0)] += if sign { 1e-3 } else { -1e-3 };
            prop_assert!(ssr(&w, &p) >= base - 1e-9 * (1.0 + base));
        }

        #[test]
        fn shift_equivariance(ys in proptest::collection::vec(-100.0f64..100.0, 5), c in -1e3f64..1e3, t in -3.0f64..10.0) {
            let mk = |off: f64| Window::from_samples(5, ys.iter().enumerate().map(|(i, &y)| TimedSample::new(i as u64 + 1, i as f64 + 1.0, vec![y + off]))).unwrap();
            let a = fit_trend(&mk(0.0), 2).unwrap();
            let b = fit_trend(&mk(c), 2).unwrap();
            prop_assert!((b.eval(t)[0] - a.eval(t)[0] - c).abs() < 1e-8 * (1.0 + c.abs() + 100.0));
        }
    }
}
