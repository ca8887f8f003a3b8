//! The two-stage online tracker.
//!
//! Every step slides the window, refits the polynomial trend, forms the
//! fitting errors, learns the error-process kernel by maximum likelihood,
//! removes the known measurement-noise kernel and lifts the result to the
//! state space. The resulting [`TrackOutput`] can be queried at any time,
//! including between samples and slightly past the window.
//!
//! Coordinates are handled independently, each with a scalar measurement map.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::gp::{fit_hyperparams, Conditioner, HyperBounds};
use crate::kernel::{build_cov, recover_state_kernel, CovMatrix, KernelSpec, MeasurementMap};
use crate::stp::{fit_hyperparams_stp, recover_state_kernel_stp, to_covariance, to_scale, variance_factor};
use crate::trend::{coord_errors, fit_trend_coord_warm, PolyTrend, TimedSample, Window, MAX_ORDER};

/// Process used for the residual after trend removal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidualModel {
    Gp,
    /// Student's-t process with degrees of freedom `dof` for the trajectory
    /// residual.
    Stp { dof: f64 },
}

fn default_window() -> usize {
    5
}
fn default_order() -> usize {
    2
}
fn default_noise_dof() -> f64 {
    5.0
}
fn default_coordinates() -> usize {
    2
}
fn default_dt() -> f64 {
    1.0
}
fn default_init() -> KernelSpec {
    KernelSpec {
        variance: 1.0,
        length_scale: 1.0,
        jitter: crate::kernel::DEFAULT_JITTER,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    /// Sliding window length `d`.
    #[serde(default = "default_window")]
    pub window_len: usize,
    /// Trend polynomial order.
    #[serde(default = "default_order")]
    pub poly_order: usize,
    pub residual_model: ResidualModel,
    /// Covariance kernel of the measurement-noise process. For the Student's-t
    /// branch this is the covariance, not the scale, of the noise process.
    pub noise_kernel: KernelSpec,
    /// Degrees of freedom of the noise process, used by the StP branch only.
    #[serde(default = "default_noise_dof")]
    pub noise_dof: f64,
    /// Starting point of the first hyperparameter search.
    #[serde(default = "default_init")]
    pub hyper_init: KernelSpec,
    #[serde(default)]
    pub hyper_bounds: HyperBounds,
    /// Scalar measurement map applied to every coordinate.
    #[serde(default)]
    pub measurement_map: MeasurementMap,
    #[serde(default = "default_coordinates")]
    pub coordinates: usize,
    /// Sampling interval: index `k` is observed at time `k · dt`.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl TrackerConfig {
    pub fn gp(noise_kernel: KernelSpec) -> Self {
        TrackerConfig {
            window_len: default_window(),
            poly_order: default_order(),
            residual_model: ResidualModel::Gp,
            noise_kernel,
            noise_dof: default_noise_dof(),
            hyper_init: default_init(),
            hyper_bounds: HyperBounds::default(),
            measurement_map: MeasurementMap::default(),
            coordinates: default_coordinates(),
            dt: default_dt(),
        }
    }

    pub fn stp(noise_kernel: KernelSpec, dof: f64) -> Self {
        TrackerConfig {
            residual_model: ResidualModel::Stp { dof },
            ..Self::gp(noise_kernel)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.poly_order > MAX_ORDER {
            return Err(Error::Config(format!("poly_order {} exceeds {MAX_ORDER}", self.poly_order)));
        }
        if self.window_len < self.poly_order + 1 {
            return Err(Error::Config(format!(
                "window_len {} must be at least poly_order + 1 = {}",
                self.window_len,
                self.poly_order + 1
            )));
        }
        if let ResidualModel::Stp { dof } = self.residual_model {
            if !(dof > 2.0) {
                return Err(Error::Config(format!("StP dof must exceed 2, got {dof}")));
            }
            if !(self.noise_dof > 2.0) {
                return Err(Error::Config(format!("noise dof must exceed 2, got {}", self.noise_dof)));
            }
        }
        self.noise_kernel
            .validate()
            .and_then(|_| self.hyper_init.validate())
            .map_err(|e| Error::Config(e.to_string()))?;
        self.hyper_bounds.validate()?;
        if self.measurement_map.meas_dim() != 1 || self.measurement_map.state_dim() != 1 {
            return Err(Error::Config("measurement map must be scalar (one per coordinate)".into()));
        }
        if self.coordinates == 0 {
            return Err(Error::Config("at least one coordinate is required".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Degrees of freedom of the moment-matched fitting-error process.
    fn error_dof(&self) -> Option<f64> {
        match self.residual_model {
            ResidualModel::Gp => None,
            ResidualModel::Stp { dof } => Some(0.5 * (dof + self.noise_dof)),
        }
    }
}

/// Mutable per-instance tracker state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    config: TrackerConfig,
    window: Window,
    hyper: Vec<KernelSpec>,
}

/// Fresh tracker state: empty window, hyperparameters at the configured start.
pub fn reset(config: &TrackerConfig) -> Result<TrackerState> {
    config.validate()?;
    Ok(TrackerState {
        window: Window::new(config.window_len)?,
        hyper: vec![config.hyper_bounds.clamp(config.hyper_init); config.coordinates],
        config: config.clone(),
    })
}

/// Point estimate of the state at a query time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    pub mean: Vec<f64>,
    /// Per-coordinate variance; cross-coordinate terms are zero.
    pub variance: Vec<f64>,
    /// Posterior degrees of freedom per coordinate (StP only).
    pub dof: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualEstimate {
    pub mean: f64,
    pub variance: f64,
    pub dof: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Branch {
    Gp,
    Stp { dof_e: f64, dof_v: f64 },
}

/// Posterior of one coordinate's residual process, conditioned on the window's
/// fitting errors.
#[derive(Debug, Clone)]
pub struct ResidualPredictor {
    times: Vec<f64>,
    error_kernel: KernelSpec,
    noise_kernel: KernelSpec,
    map: MeasurementMap,
    branch: Branch,
    system: Conditioner,
}

impl ResidualPredictor {
    pub fn error_kernel(&self) -> &KernelSpec {
        &self.error_kernel
    }

    /// State-space residual covariance on `grid`, recovered from the error
    /// and noise kernels (covariance convention in both branches).
    fn state_covariance(&self, grid: &[f64]) -> Result<CovMatrix> {
        let ke = build_cov(&self.error_kernel.with_jitter(0.0), grid, grid)?;
        let kv = build_cov(&self.noise_kernel.with_jitter(0.0), grid, grid)?;
        match self.branch {
            Branch::Gp => recover_state_kernel(&ke, &kv, &self.map),
            Branch::Stp { dof_e, dof_v } => {
                let (scale, dof_g) =
                    recover_state_kernel_stp(&to_scale(&ke, dof_e), &to_scale(&kv, dof_v), dof_e, dof_v, &self.map)?;
                Ok(to_covariance(&scale, dof_g))
            }
        }
    }

    pub fn predict(&self, t: f64) -> Result<ResidualEstimate> {
        if !t.is_finite() {
            return Err(Error::InvalidInput("non-finite query time".into()));
        }
        let n = self.times.len();
        let mut grid = self.times.clone();
        grid.push(t);
        let k = self.state_covariance(&grid)?.entries;
        let h = self.map.h()[(0, 0)];
        // Cov(ε(t), e(t_i)) = κ(t, t_i) Hᵀ
        let cross = DVector::from_iterator(n, (0..n).map(|i| k[(n, i)] * h));
        let prior = k[(n, n)];
        let mean = self.system.mean_shift(&cross);
        let reduced = prior - self.system.reduction(&cross);
        let (variance, dof) = match self.branch {
            Branch::Gp => (reduced, None),
            Branch::Stp { dof_e, .. } => (
                variance_factor(dof_e, self.system.quad_y(), n) * reduced,
                Some(dof_e + n as f64),
            ),
        };
        Ok(ResidualEstimate {
            mean,
            variance: crate::gp::clip_variance(variance, prior)?,
            dof,
        })
    }
}

#[derive(Debug, Clone)]
pub enum ResidualPosterior {
    /// Warm-up: no residual learned yet, zero mean with the prior variance.
    Prior { variance: f64, dof: Option<f64> },
    Learned(ResidualPredictor),
}

impl ResidualPosterior {
    pub fn predict(&self, t: f64) -> Result<ResidualEstimate> {
        match self {
            ResidualPosterior::Prior { variance, dof } => Ok(ResidualEstimate {
                mean: 0.0,
                variance: *variance,
                dof: *dof,
            }),
            ResidualPosterior::Learned(p) => p.predict(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoordOutput {
    /// Single-column trend in state space.
    pub trend: PolyTrend,
    pub residual: ResidualPosterior,
}

/// Continuous-time trajectory estimate produced by one step.
#[derive(Debug, Clone)]
pub struct TrackOutput {
    pub window_end: u64,
    /// Time of the newest sample.
    pub time: f64,
    /// `true` while the window is too short to learn the residual.
    pub warm_up: bool,
    pub coords: Vec<CoordOutput>,
}

impl TrackOutput {
    pub fn trend_mean(&self, t: f64) -> Vec<f64> {
        self.coords.iter().map(|c| c.trend.eval_coord(t, 0)).collect()
    }

    pub fn residual(&self, t: f64) -> Result<Vec<ResidualEstimate>> {
        self.coords.iter().map(|c| c.residual.predict(t)).collect()
    }

    /// Trend plus residual posterior mean.
    pub fn total_mean(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.query(t)?.mean)
    }

    pub fn query(&self, t: f64) -> Result<StateEstimate> {
        let mut mean = Vec::with_capacity(self.coords.len());
        let mut variance = Vec::with_capacity(self.coords.len());
        let mut dofs = Vec::with_capacity(self.coords.len());
        for c in &self.coords {
            let r = c.residual.predict(t)?;
            mean.push(c.trend.eval_coord(t, 0) + r.mean);
            variance.push(r.variance);
            if let Some(d) = r.dof {
                dofs.push(d);
            }
        }
        let dof = (dofs.len() == self.coords.len() && !dofs.is_empty()).then_some(dofs);
        Ok(StateEstimate { mean, variance, dof })
    }
}

/// Free-function form of [`TrackOutput::query`].
pub fn query(output: &TrackOutput, t: f64) -> Result<StateEstimate> {
    output.query(t)
}

impl TrackerState {
    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// Current (warm-start) hyperparameters per coordinate.
    pub fn hyperparams(&self) -> &[KernelSpec] {
        &self.hyper
    }

    pub fn time_of(&self, k: u64) -> f64 {
        k as f64 * self.config.dt
    }

    /// Ingest the measurement at index `k` and return the updated trajectory.
    pub fn step(&mut self, k: u64, y: &[f64]) -> Result<TrackOutput> {
        if y.len() != self.config.coordinates {
            return Err(dim_err(self.config.coordinates, y.len()));
        }
        if let Some(last) = self.window.last() {
            if k <= last.k {
                return Err(Error::Ordering { prev: last.k, got: k });
            }
        }
        let t = self.time_of(k);
        self.window.push(TimedSample::new(k, t, y.to_vec()))?;

        let mut coords = Vec::with_capacity(self.config.coordinates);
        let mut warm_up = false;
        for c in 0..self.config.coordinates {
            let (out, warm) = self.step_coord(c)?;
            warm_up |= warm;
            coords.push(out);
        }
        Ok(TrackOutput {
            window_end: k,
            time: t,
            warm_up,
            coords,
        })
    }

    fn step_coord(&mut self, c: usize) -> Result<(CoordOutput, bool)> {
        let cfg = &self.config;
        let (meas_trend, warm) = fit_trend_coord_warm(&self.window, cfg.poly_order, c)?;
        let a = cfg.measurement_map.a_left()[(0, 0)];
        let state_trend = PolyTrend {
            coeffs: &meas_trend.coeffs * a,
            ..meas_trend.clone()
        };

        if warm {
            let residual = ResidualPosterior::Prior {
                variance: self.prior_variance(self.hyper[c])?,
                dof: cfg.error_dof().map(|d| 2.0 * d - cfg.noise_dof),
            };
            return Ok((
                CoordOutput {
                    trend: state_trend,
                    residual,
                },
                true,
            ));
        }

        let times = self.window.times();
        let errors = coord_errors(&self.window, &meas_trend, c);
        let values: Vec<f64> = errors.iter().copied().collect();
        let init = self.hyper[c];
        let (error_kernel, branch) = match cfg.error_dof() {
            None => (fit_hyperparams(&times, &values, init, &cfg.hyper_bounds)?, Branch::Gp),
            Some(dof_e) => (
                fit_hyperparams_stp(&times, &values, init, &cfg.hyper_bounds, dof_e)?,
                Branch::Stp {
                    dof_e,
                    dof_v: cfg.noise_dof,
                },
            ),
        };
        self.hyper[c] = error_kernel;

        let k_e = build_cov(&error_kernel, &times, &times)?;
        let system = Conditioner::new(&k_e.entries, &errors)?;
        let predictor = ResidualPredictor {
            times,
            error_kernel,
            noise_kernel: cfg.noise_kernel,
            map: cfg.measurement_map.clone(),
            branch,
            system,
        };
        Ok((
            CoordOutput {
                trend: state_trend,
                residual: ResidualPosterior::Learned(predictor),
            },
            false,
        ))
    }

    /// Residual variance implied by an error kernel before any data arrive.
    fn prior_variance(&self, error_kernel: KernelSpec) -> Result<f64> {
        let cfg = &self.config;
        let grid = [0.0];
        let ke = build_cov(&error_kernel.with_jitter(0.0), &grid, &grid)?;
        let kv = build_cov(&cfg.noise_kernel.with_jitter(0.0), &grid, &grid)?;
        let k = match cfg.error_dof() {
            None => recover_state_kernel(&ke, &kv, &cfg.measurement_map)?,
            Some(dof_e) => {
                let (scale, dof_g) = recover_state_kernel_stp(
                    &to_scale(&ke, dof_e),
                    &to_scale(&kv, cfg.noise_dof),
                    dof_e,
                    cfg.noise_dof,
                    &cfg.measurement_map,
                )?;
                to_covariance(&scale, dof_g)
            }
        };
        Ok(k.entries[(0, 0)])
    }
}
