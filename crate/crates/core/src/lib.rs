//! Online target tracking with the trajectory modeled as a stochastic process.
//!
//! Each measurement window is split into a polynomial trend, fitted by least
//! squares, and a zero-mean residual process learned from the fitting errors
//! as either a Gaussian process or a Student's-t process. The known temporal
//! correlation of the measurement noise is removed from the learned error
//! kernel before the residual is predicted, which yields a continuous-time
//! trajectory estimate with uncertainty.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod optim;
pub mod sim;
pub mod stp;
pub mod tracker;
pub mod trend;

pub use baselines::{GpmtConfig, GpmtState, TfotOnlyConfig, TfotOnlyState};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, validate_config, write_outputs, Estimator, ExperimentConfig, ExperimentSummary, NamedTracker,
    TrackerSpec,
};
pub use gp::{fit_hyperparams, gp_log_marginal, gp_predict, GpModel, GpPosterior, HyperBounds, MeanFn, NoiseMode};
pub use kernel::{
    add_kernels, build_cov, kernel_eval, psd_repair, recover_state_kernel, transform_kernel, CovMatrix, KernelSpec,
    MeasurementMap,
};
pub use sim::{armse, gen_noise, gen_trial, gen_truth, rmse, NoiseSpec, ScenarioId, ScenarioSpec, Trial, Truth};
pub use stp::{
    fit_hyperparams_stp, match_linear, match_shift, match_sum, recover_state_kernel_stp, stp_log_marginal, stp_predict,
    MatchedStp, StpModel, StpNoise, StpPosterior,
};
pub use tracker::{
    query, reset, ResidualModel, StateEstimate, TrackOutput, TrackerConfig, TrackerState,
};
pub use trend::{eval_trend, fit_trend, fitting_errors, PolyTrend, TimedSample, Window};
