//! Gaussian-process regression and marginal-likelihood hyperparameter fitting.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::kernel::{build_cov, KernelSpec};
use crate::linalg::{cholesky, inv_quad, log_det, Chol};
use crate::optim::NelderMead;
use crate::trend::PolyTrend;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Whether training targets are treated as exact (`J = K⁻¹`) or noisy
/// (`J = (K + σ² I)⁻¹`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    NoiseFree,
    Noisy { variance: f64 },
}

impl NoiseMode {
    fn variance(self) -> f64 {
        match self {
            NoiseMode::NoiseFree => 0.0,
            NoiseMode::Noisy { variance } => variance,
        }
    }
}

/// Prior mean function of a process.
#[derive(Clone, Default)]
pub enum MeanFn {
    #[default]
    Zero,
    Constant(f64),
    /// One coordinate of a polynomial trend.
    Trend { trend: PolyTrend, coord: usize },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl MeanFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MeanFn::Zero => 0.0,
            MeanFn::Constant(c) => *c,
            MeanFn::Trend { trend, coord } => trend.eval_coord(t, *coord),
            MeanFn::Custom(f) => f(t),
        }
    }
}

impl fmt::Debug for MeanFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanFn::Zero => write!(f, "Zero"),
            MeanFn::Constant(c) => write!(f, "Constant({c})"),
            MeanFn::Trend { coord, .. } => write!(f, "Trend(coord {coord})"),
            MeanFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub mean: MeanFn,
    pub kernel: KernelSpec,
    pub noise: NoiseMode,
}

impl GpModel {
    pub fn new(mean: MeanFn, kernel: KernelSpec, noise: NoiseMode) -> Result<Self> {
        kernel.validate()?;
        if let NoiseMode::Noisy { variance } = noise {
            if !(variance >= 0.0 && variance.is_finite()) {
                return Err(Error::InvalidInput(format!("noise variance must be >= 0, got {variance}")));
            }
        }
        Ok(GpModel { mean, kernel, noise })
    }

    /// Zero-mean, noise-free model.
    pub fn zero_mean(kernel: KernelSpec) -> Result<Self> {
        Self::new(MeanFn::Zero, kernel, NoiseMode::NoiseFree)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpPosterior {
    pub mean: f64,
    pub variance: f64,
    pub query_time: f64,
}

/// Factored training system `J⁻¹` with the weights `J (y - m)` precomputed.
#[derive(Debug, Clone)]
pub struct Conditioner {
    chol: Chol,
    alpha: DVector<f64>,
    quad_y: f64,
}

impl Conditioner {
    pub fn new(train_cov: &DMatrix<f64>, centered: &DVector<f64>) -> Result<Self> {
        if train_cov.nrows() != centered.len() {
            return Err(dim_err(train_cov.nrows(), centered.len()));
        }
        let chol = cholesky(train_cov)?;
        let alpha = chol.solve(centered);
        let quad_y = centered.dot(&alpha);
        Ok(Conditioner { chol, alpha, quad_y })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `k*ᵀ J (y - m)`.
    pub fn mean_shift(&self, cross: &DVector<f64>) -> f64 {
        cross.dot(&self.alpha)
    }

    /// `‖k*‖_J = k*ᵀ J k*`.
    pub fn reduction(&self, cross: &DVector<f64>) -> f64 {
        inv_quad(&self.chol, cross)
    }

    /// `(y - m)ᵀ J (y - m)`.
    pub fn quad_y(&self) -> f64 {
        self.quad_y
    }

    pub fn log_det(&self) -> f64 {
        log_det(&self.chol)
    }
}

/// Clip tiny negative variances produced by rounding; anything further below
/// zero is reported.
pub fn clip_variance(v: f64, prior: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -1e-10 * prior.abs().max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance(v))
    }
}

fn check_training(times: &[f64], values: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if times.len() != values.len() {
        return Err(dim_err(times.len(), values.len()));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training data".into()));
    }
    Ok(())
}

fn has_duplicates(times: &[f64]) -> bool {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[0] == w[1])
}

pub(crate) fn training_system(model: &GpModel, times: &[f64], values: &[f64]) -> Result<Conditioner> {
    check_training(times, values)?;
    if matches!(model.noise, NoiseMode::NoiseFree) && has_duplicates(times) {
        return Err(Error::Conditioning("duplicate training times in noise-free mode".into()));
    }
    let mut k = build_cov(&model.kernel, times, times)?.entries;
    let s2 = model.noise.variance();
    for i in 0..times.len() {
        k[(i, i)] += s2;
    }
    let centered = DVector::from_iterator(times.len(), times.iter().zip(values).map(|(t, y)| y - model.mean.eval(*t)));
    Conditioner::new(&k, &centered)
}

pub(crate) fn cross_vector(kernel: &KernelSpec, times: &[f64], t: f64) -> DVector<f64> {
    DVector::from_iterator(times.len(), times.iter().map(|&ti| kernel.eval(t, ti)))
}

/// Posterior mean and variance of the latent function at `t_query`.
pub fn gp_predict(model: &GpModel, train_times: &[f64], train_values: &[f64], t_query: f64) -> Result<GpPosterior> {
    let sys = training_system(model, train_times, train_values)?;
    predict_with(&sys, model, train_times, t_query)
}

/// Predict at several query times, factoring the training system once.
pub fn gp_predict_many(
    model: &GpModel,
    train_times: &[f64],
    train_values: &[f64],
    queries: &[f64],
) -> Result<Vec<GpPosterior>> {
    let sys = training_system(model, train_times, train_values)?;
    queries.iter().map(|&t| predict_with(&sys, model, train_times, t)).collect()
}

fn predict_with(sys: &Conditioner, model: &GpModel, times: &[f64], t: f64) -> Result<GpPosterior> {
    if !t.is_finite() {
        return Err(Error::InvalidInput("non-finite query time".into()));
    }
    let cross = cross_vector(&model.kernel, times, t);
    let prior = model.kernel.eval(t, t);
    Ok(GpPosterior {
        mean: model.mean.eval(t) + sys.mean_shift(&cross),
        variance: clip_variance(prior - sys.reduction(&cross), prior)?,
        query_time: t,
    })
}

/// `log N(y | m(t), K [+ σ² I])`.
pub fn gp_log_marginal(model: &GpModel, train_times: &[f64], train_values: &[f64]) -> Result<f64> {
    let sys = training_system(model, train_times, train_values)?;
    let n = train_times.len() as f64;
    Ok(-0.5 * sys.quad_y() - 0.5 * sys.log_det() - 0.5 * n * LN_2PI)
}

/// Box constraints on the RBF hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub variance: (f64, f64),
    pub length_scale: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            variance: (1e-6, 1e6),
            length_scale: (1e-2, 1e2),
        }
    }
}

impl HyperBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if ok(self.variance) && ok(self.length_scale) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid hyperparameter bounds {self:?}")))
        }
    }

    pub fn clamp(&self, spec: KernelSpec) -> KernelSpec {
        KernelSpec {
            variance: spec.variance.clamp(self.variance.0, self.variance.1),
            length_scale: spec.length_scale.clamp(self.length_scale.0, self.length_scale.1),
            jitter: spec.jitter,
        }
    }

    fn log_lower(&self) -> [f64; 2] {
        [self.variance.0.ln(), self.length_scale.0.ln()]
    }

    fn log_upper(&self) -> [f64; 2] {
        [self.variance.1.ln(), self.length_scale.1.ln()]
    }
}

/// Maximize `objective` over log-parameters from each start in turn and keep
/// the best. The first start wins ties.
pub(crate) fn maximize_log_space<F>(objective: F, starts: &[Vec<f64>], lower: &[f64], upper: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let nm = NelderMead::default();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_err = None;
    for start in starts {
        match nm.minimize(|x| -objective(x), start, lower, upper) {
            Ok(m) => {
                if best.as_ref().is_none_or(|(_, v)| m.value < *v) {
                    best = Some((m.x, m.value));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.map(|(x, _)| x)
        .ok_or_else(|| last_err.unwrap_or_else(|| Error::OptimizationFailed("no start points".into())))
}

pub(crate) fn kernel_from_log(x: &[f64], jitter: f64) -> KernelSpec {
    KernelSpec {
        variance: x[0].exp(),
        length_scale: x[1].exp(),
        jitter,
    }
}

/// Default second start for the hyperparameter search: the data's second
/// moment for the variance and unit length scale, both clamped into bounds.
pub(crate) fn fallback_start(values: &[f64], bounds: &HyperBounds, jitter: f64) -> KernelSpec {
    let m2 = values.iter().map(|v| v * v).sum::<f64>() / values.len().max(1) as f64;
    bounds.clamp(KernelSpec {
        variance: if m2 > 0.0 { m2 } else { 1.0 },
        length_scale: 1.0,
        jitter,
    })
}

/// Fit RBF hyperparameters of a generic objective (log density as a function
/// of the kernel), starting from `init` and from the fallback start.
pub(crate) fn fit_kernel_with<F>(objective: F, values: &[f64], init: KernelSpec, bounds: &HyperBounds) -> Result<KernelSpec>
where
    F: Fn(&KernelSpec) -> Result<f64>,
{
    bounds.validate()?;
    init.validate()?;
    let init = bounds.clamp(init);
    let fallback = fallback_start(values, bounds, init.jitter);
    let to_log = |k: &KernelSpec| vec![k.variance.ln(), k.length_scale.ln()];
    let mut starts = vec![to_log(&init)];
    if fallback != init {
        starts.push(to_log(&fallback));
    }
    let jitter = init.jitter;
    let x = maximize_log_space(
        |x| objective(&kernel_from_log(x, jitter)).unwrap_or(f64::NEG_INFINITY),
        &starts,
        &bounds.log_lower(),
        &bounds.log_upper(),
    )?;
    Ok(bounds.clamp(kernel_from_log(&x, jitter)))
}

/// Maximum-marginal-likelihood RBF hyperparameters for a zero-mean,
/// noise-free GP on the given data.
pub fn fit_hyperparams(train_times: &[f64], train_values: &[f64], init: KernelSpec, bounds: &HyperBounds) -> Result<KernelSpec> {
    check_training(train_times, train_values)?;
    if train_times.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: train_times.len(),
        });
    }
    fit_kernel_with(
        |k| {
            let model = GpModel {
                mean: MeanFn::Zero,
                kernel: *k,
                noise: NoiseMode::NoiseFree,
            };
            gp_log_marginal(&model, train_times, train_values)
        },
        train_values,
        init,
        bounds,
    )
}
