//! Comparison trackers: a zero-mean windowed GP tracker in the style of GPMT
//! and the trend-only T-FoT tracker.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::gp::{gp_log_marginal, gp_predict, maximize_log_space, GpModel, MeanFn, NoiseMode};
use crate::kernel::KernelSpec;
use crate::trend::{fit_trend_coord_warm, PolyTrend, TimedSample, Window, MAX_ORDER};

/// Zero-mean windowed GP tracker without a trend stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpmtConfig {
    pub window_len: usize,
    #[serde(default = "GpmtConfig::default_init")]
    pub kernel_init: KernelSpec,
    #[serde(default = "GpmtConfig::default_noise_init")]
    pub noise_init: f64,
    #[serde(default)]
    pub bounds: GpmtBounds,
    #[serde(default = "default_coordinates")]
    pub coordinates: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_coordinates() -> usize {
    2
}
fn default_dt() -> f64 {
    1.0
}

/// Box constraints for the GPMT hyperparameters. Signal variance and length
/// scale default to the same box as the residual learner of the main tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpmtBounds {
    pub variance: (f64, f64),
    pub length_scale: (f64, f64),
    pub noise: (f64, f64),
}

impl Default for GpmtBounds {
    fn default() -> Self {
        GpmtBounds {
            variance: (1e-6, 1e6),
            length_scale: (1e-2, 1e2),
            noise: (1e-6, 1e6),
        }
    }
}

impl GpmtBounds {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if ok(self.variance) && ok(self.length_scale) && ok(self.noise) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid GPMT bounds {self:?}")))
        }
    }

    fn log_lower(&self) -> [f64; 3] {
        [self.variance.0.ln(), self.length_scale.0.ln(), self.noise.0.ln()]
    }

    fn log_upper(&self) -> [f64; 3] {
        [self.variance.1.ln(), self.length_scale.1.ln(), self.noise.1.ln()]
    }

    fn clamp(&self, h: Hyper) -> Hyper {
        Hyper {
            variance: h.variance.clamp(self.variance.0, self.variance.1),
            length_scale: h.length_scale.clamp(self.length_scale.0, self.length_scale.1),
            noise: h.noise.clamp(self.noise.0, self.noise.1),
        }
    }
}

impl GpmtConfig {
    fn default_init() -> KernelSpec {
        KernelSpec {
            variance: 1.0,
            length_scale: 1.0,
            jitter: crate::kernel::DEFAULT_JITTER,
        }
    }

    fn default_noise_init() -> f64 {
        1.0
    }

    pub fn new(window_len: usize) -> Self {
        GpmtConfig {
            window_len,
            kernel_init: Self::default_init(),
            noise_init: Self::default_noise_init(),
            bounds: GpmtBounds::default(),
            coordinates: default_coordinates(),
            dt: default_dt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::Config(format!("GPMT window_len must be at least 2, got {}", self.window_len)));
        }
        self.kernel_init.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.noise_init > 0.0 && self.noise_init.is_finite()) {
            return Err(Error::Config(format!("noise_init must be positive, got {}", self.noise_init)));
        }
        self.bounds.validate()?;
        if self.coordinates == 0 {
            return Err(Error::Config("at least one coordinate is required".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Hyper {
    variance: f64,
    length_scale: f64,
    noise: f64,
}

impl Hyper {
    fn to_log(self) -> Vec<f64> {
        vec![self.variance.ln(), self.length_scale.ln(), self.noise.ln()]
    }

    fn from_log(x: &[f64]) -> Self {
        Hyper {
            variance: x[0].exp(),
            length_scale: x[1].exp(),
            noise: x[2].exp(),
        }
    }

    fn model(self, jitter: f64) -> GpModel {
        GpModel {
            mean: MeanFn::Zero,
            kernel: KernelSpec {
                variance: self.variance,
                length_scale: self.length_scale,
                jitter,
            },
            noise: NoiseMode::Noisy { variance: self.noise },
        }
    }
}

/// Position estimate with optional per-coordinate variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub variance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpmtState {
    config: GpmtConfig,
    window: Window,
    hyper: Vec<Hyper>,
}

impl GpmtState {
    pub fn new(config: &GpmtConfig) -> Result<Self> {
        config.validate()?;
        let init = config.bounds.clamp(Hyper {
            variance: config.kernel_init.variance,
            length_scale: config.kernel_init.length_scale,
            noise: config.noise_init,
        });
        Ok(GpmtState {
            window: Window::new(config.window_len)?,
            hyper: vec![init; config.coordinates],
            config: config.clone(),
        })
    }

    pub fn reset(&mut self) -> Result<()> {
        *self = Self::new(&self.config)?;
        Ok(())
    }

    /// Learned `(variance, length_scale, noise variance)` per coordinate.
    pub fn hyperparams(&self) -> Vec<(f64, f64, f64)> {
        self.hyper.iter().map(|h| (h.variance, h.length_scale, h.noise)).collect()
    }

    /// Ingest `y_k` and return the posterior mean of the latent position at `t_k`.
    pub fn step(&mut self, k: u64, y: &[f64]) -> Result<Estimate> {
        if y.len() != self.config.coordinates {
            return Err(dim_err(self.config.coordinates, y.len()));
        }
        if let Some(last) = self.window.last() {
            if k <= last.k {
                return Err(Error::Ordering { prev: last.k, got: k });
            }
        }
        let t = k as f64 * self.config.dt;
        self.window.push(TimedSample::new(k, t, y.to_vec()))?;
        let times = self.window.times();
        let jitter = self.config.kernel_init.jitter;
        let bounds = self.config.bounds;
        let mut mean = Vec::with_capacity(y.len());
        let mut variance = Vec::with_capacity(y.len());
        for c in 0..self.config.coordinates {
            let values = self.window.column(c);
            let m2 = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
            let fallback = bounds.clamp(Hyper {
                variance: if m2 > 0.0 { m2 } else { 1.0 },
                length_scale: 1.0,
                noise: self.config.noise_init,
            });
            let mut starts = vec![self.hyper[c].to_log()];
            if fallback != self.hyper[c] {
                starts.push(fallback.to_log());
            }
            let x = maximize_log_space(
                |x| gp_log_marginal(&Hyper::from_log(x).model(jitter), &times, &values).unwrap_or(f64::NEG_INFINITY),
                &starts,
                &bounds.log_lower(),
                &bounds.log_upper(),
            )?;
            let h = bounds.clamp(Hyper::from_log(&x));
            self.hyper[c] = h;
            let post = gp_predict(&h.model(jitter), &times, &values, t)?;
            mean.push(post.mean);
            variance.push(post.variance);
        }
        Ok(Estimate {
            mean,
            variance: Some(variance),
        })
    }
}

/// Trend-only tracker: the polynomial fit without any residual stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfotOnlyConfig {
    pub window_len: usize,
    #[serde(default = "default_order")]
    pub poly_order: usize,
    #[serde(default = "default_coordinates")]
    pub coordinates: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_order() -> usize {
    2
}

impl TfotOnlyConfig {
    pub fn new(window_len: usize) -> Self {
        TfotOnlyConfig {
            window_len,
            poly_order: default_order(),
            coordinates: default_coordinates(),
            dt: default_dt(),
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
        if self.coordinates == 0 {
            return Err(Error::Config("at least one coordinate is required".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfotOnlyState {
    config: TfotOnlyConfig,
    window: Window,
}

impl TfotOnlyState {
    pub fn new(config: &TfotOnlyConfig) -> Result<Self> {
        config.validate()?;
        Ok(TfotOnlyState {
            window: Window::new(config.window_len)?,
            config: config.clone(),
        })
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }

    /// Ingest `y_k` and return the per-coordinate trends.
    pub fn step(&mut self, k: u64, y: &[f64]) -> Result<Vec<PolyTrend>> {
        if y.len() != self.config.coordinates {
            return Err(dim_err(self.config.coordinates, y.len()));
        }
        if let Some(last) = self.window.last() {
            if k <= last.k {
                return Err(Error::Ordering { prev: last.k, got: k });
            }
        }
        let t = k as f64 * self.config.dt;
        self.window.push(TimedSample::new(k, t, y.to_vec()))?;
        (0..self.config.coordinates)
            .map(|c| fit_trend_coord_warm(&self.window, self.config.poly_order, c).map(|(tr, _)| tr))
            .collect()
    }

    /// Step and evaluate the trend at `t_k`; no uncertainty is produced.
    pub fn estimate(&mut self, k: u64, y: &[f64]) -> Result<Estimate> {
        let t = k as f64 * self.config.dt;
        let trends = self.step(k, y)?;
        Ok(Estimate {
            mean: trends.iter().map(|tr| tr.eval_coord(t, 0)).collect(),
            variance: None,
        })
    }
}
