//! Student's-t process regression and moment-matched StP algebra.
//!
//! Two parameterizations appear here:
//!
//! * [`StpModel`] and [`stp_predict`] use the covariance convention: the
//!   kernel `K` is the covariance of the process and the multivariate t
//!   distribution has scale `((ν − 2)/ν) K`.
//! * [`MatchedStp`] and the `match_*` functions carry the scale matrix `κ`
//!   directly, so the covariance is `ν/(ν − 2) κ`.
//!
//! [`to_scale`] and [`to_covariance`] convert between the two.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{dim_err, Error, Result};
use crate::gp::{clip_variance, cross_vector, fit_kernel_with, training_system, GpModel, HyperBounds, MeanFn, NoiseMode};
use crate::kernel::{add_kernels, lift_to_state, transform_kernel, CovMatrix, KernelSpec, MeasurementMap};
use crate::linalg::kron_identity;

/// Noise model of an StP regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StpNoise {
    NoiseFree,
    Noisy { variance: f64, dof: f64 },
}

#[derive(Debug, Clone)]
pub struct StpModel {
    pub mean: MeanFn,
    pub kernel: KernelSpec,
    pub dof: f64,
    pub noise: StpNoise,
}

fn check_dof(dof: f64) -> Result<()> {
    if dof > 2.0 && !dof.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("degrees of freedom must exceed 2, got {dof}")))
    }
}

impl StpModel {
    pub fn new(mean: MeanFn, kernel: KernelSpec, dof: f64, noise: StpNoise) -> Result<Self> {
        kernel.validate()?;
        check_dof(dof)?;
        if let StpNoise::Noisy { variance, dof } = noise {
            if !(variance >= 0.0 && variance.is_finite()) {
                return Err(Error::InvalidInput(format!("noise variance must be >= 0, got {variance}")));
            }
            check_dof(dof)?;
        }
        Ok(StpModel {
            mean,
            kernel,
            dof,
            noise,
        })
    }

    pub fn zero_mean(kernel: KernelSpec, dof: f64) -> Result<Self> {
        Self::new(MeanFn::Zero, kernel, dof, StpNoise::NoiseFree)
    }

    fn as_gp(&self) -> GpModel {
        GpModel {
            mean: self.mean.clone(),
            kernel: self.kernel,
            noise: match self.noise {
                StpNoise::NoiseFree => NoiseMode::NoiseFree,
                StpNoise::Noisy { variance, .. } => NoiseMode::Noisy { variance },
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StpPosterior {
    pub mean: f64,
    pub variance_scale: f64,
    pub dof: f64,
    pub query_time: f64,
}

/// Factor applied to the GP posterior variance: `(ν + β − 2)/(ν + n − 2)`.
pub fn variance_factor(dof: f64, quad_y: f64, n: usize) -> f64 {
    (dof + quad_y - 2.0) / (dof + n as f64 - 2.0)
}

/// Posterior of an StP at `t_query`. The mean coincides with the GP mean.
pub fn stp_predict(model: &StpModel, train_times: &[f64], train_values: &[f64], t_query: f64) -> Result<StpPosterior> {
    check_dof(model.dof)?;
    if !t_query.is_finite() {
        return Err(Error::InvalidInput("non-finite query time".into()));
    }
    let gp = model.as_gp();
    let sys = training_system(&gp, train_times, train_values)?;
    let cross = cross_vector(&model.kernel, train_times, t_query);
    let prior = model.kernel.eval(t_query, t_query);
    let n = train_times.len();
    let scale = variance_factor(model.dof, sys.quad_y(), n) * (prior - sys.reduction(&cross));
    Ok(StpPosterior {
        mean: gp.mean.eval(t_query) + sys.mean_shift(&cross),
        variance_scale: clip_variance(scale, prior)?,
        dof: model.dof + n as f64,
        query_time: t_query,
    })
}

/// Log density of the training data under the model, covariance convention.
pub fn stp_log_marginal(model: &StpModel, train_times: &[f64], train_values: &[f64]) -> Result<f64> {
    check_dof(model.dof)?;
    let sys = training_system(&model.as_gp(), train_times, train_values)?;
    Ok(mvt_log_density(model.dof, train_times.len(), sys.quad_y(), sys.log_det()))
}

/// `log T(y | m, ((ν−2)/ν) K, ν)` from `β = (y−m)ᵀK⁻¹(y−m)` and `log|K|`.
pub(crate) fn mvt_log_density(dof: f64, n: usize, quad: f64, log_det: f64) -> f64 {
    let nf = n as f64;
    ln_gamma(0.5 * (dof + nf)) - ln_gamma(0.5 * dof) - 0.5 * nf * ((dof - 2.0) * std::f64::consts::PI).ln()
        - 0.5 * log_det
        - 0.5 * (dof + nf) * (1.0 + quad / (dof - 2.0)).ln()
}

/// RBF hyperparameters maximizing the Student-t marginal density with fixed
/// degrees of freedom (zero mean, noise free).
pub fn fit_hyperparams_stp(
    train_times: &[f64],
    train_values: &[f64],
    init: KernelSpec,
    bounds: &HyperBounds,
    dof: f64,
) -> Result<KernelSpec> {
    check_dof(dof)?;
    if train_times.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: train_times.len(),
        });
    }
    fit_kernel_with(
        |k| {
            let model = StpModel {
                mean: MeanFn::Zero,
                kernel: *k,
                dof,
                noise: StpNoise::NoiseFree,
            };
            stp_log_marginal(&model, train_times, train_values)
        },
        train_values,
        init,
        bounds,
    )
}

/// Scale matrix `((ν−2)/ν) K` of a process with covariance `K`.
pub fn to_scale(cov: &CovMatrix, dof: f64) -> CovMatrix {
    cov.scaled((dof - 2.0) / dof)
}

/// Covariance `ν/(ν−2) κ` of a process with scale matrix `κ`.
pub fn to_covariance(scale: &CovMatrix, dof: f64) -> CovMatrix {
    scale.scaled(dof / (dof - 2.0))
}

/// Moment-matched StP restricted to a time grid: stacked mean values, scale
/// matrix and degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedStp {
    pub mean: DVector<f64>,
    pub kernel: CovMatrix,
    pub dof: f64,
}

impl MatchedStp {
    pub fn new(mean: DVector<f64>, kernel: CovMatrix, dof: f64) -> Result<Self> {
        check_dof(dof)?;
        if !kernel.is_square_grid() {
            return Err(Error::InvalidInput("matched StP needs a square kernel".into()));
        }
        if mean.len() != kernel.entries.nrows() {
            return Err(dim_err(kernel.entries.nrows(), mean.len()));
        }
        Ok(MatchedStp { mean, kernel, dof })
    }

    pub fn zero_mean(kernel: CovMatrix, dof: f64) -> Result<Self> {
        let n = kernel.entries.nrows();
        Self::new(DVector::zeros(n), kernel, dof)
    }

    /// Covariance of the matched process.
    pub fn covariance(&self) -> CovMatrix {
        to_covariance(&self.kernel, self.dof)
    }
}

/// `H ε` matched as an StP: mean `H m`, scale `H κ Hᵀ`, same DoF.
pub fn match_linear(eps: &MatchedStp, map: &MeasurementMap) -> Result<MatchedStp> {
    let kernel = transform_kernel(&eps.kernel, map)?;
    let lift = kron_identity(eps.kernel.row_times.len(), map.h());
    Ok(MatchedStp {
        mean: lift * &eps.mean,
        kernel,
        dof: eps.dof,
    })
}

/// Residual of a trajectory StP after removing its mean function: zero mean,
/// unchanged scale and DoF.
pub fn match_shift(trajectory: &MatchedStp) -> MatchedStp {
    MatchedStp {
        mean: DVector::zeros(trajectory.mean.len()),
        kernel: trajectory.kernel.clone(),
        dof: trajectory.dof,
    }
}

/// Sum of two independent StPs matched in the first two moments, with the
/// DoF set to the average of the two.
pub fn match_sum(g: &MatchedStp, v: &MatchedStp) -> Result<MatchedStp> {
    check_dof(g.dof)?;
    check_dof(v.dof)?;
    if g.mean.len() != v.mean.len() {
        return Err(Error::GridMismatch);
    }
    let dof = 0.5 * (g.dof + v.dof);
    let kernel = if g.dof == v.dof {
        add_kernels(&g.kernel, &v.kernel)?
    } else {
        let cov = add_kernels(&to_covariance(&g.kernel, g.dof), &to_covariance(&v.kernel, v.dof))?;
        to_scale(&cov, dof)
    };
    Ok(MatchedStp {
        mean: &g.mean + &v.mean,
        kernel,
        dof,
    })
}

/// Invert [`match_sum`] for the pseudo-measurement scale `κ_g`, then lift to
/// the state space through the measurement map. Returns the state scale
/// matrix and its DoF `ν_g = 2ν_e − ν_v`.
pub fn recover_state_kernel_stp(
    k_e: &CovMatrix,
    k_v: &CovMatrix,
    dof_e: f64,
    dof_v: f64,
    map: &MeasurementMap,
) -> Result<(CovMatrix, f64)> {
    check_dof(dof_e)?;
    check_dof(dof_v)?;
    let dof_g = 2.0 * dof_e - dof_v;
    check_dof(dof_g)?;
    let k_g = if dof_e == dof_v {
        CovMatrix {
            entries: &k_e.entries - &k_v.entries,
            row_times: k_e.row_times.clone(),
            col_times: k_e.col_times.clone(),
        }
    } else {
        let ce = to_covariance(k_e, dof_e);
        let cv = to_covariance(k_v, dof_v);
        if ce.row_times != cv.row_times || ce.col_times != cv.col_times || ce.entries.shape() != cv.entries.shape() {
            return Err(Error::GridMismatch);
        }
        to_scale(
            &CovMatrix {
                entries: &ce.entries - &cv.entries,
                row_times: ce.row_times,
                col_times: ce.col_times,
            },
            dof_g,
        )
    };
    if k_e.row_times != k_v.row_times || k_e.col_times != k_v.col_times {
        return Err(Error::GridMismatch);
    }
    Ok((lift_to_state(&k_g, map)?, dof_g))
}
