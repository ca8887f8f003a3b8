//! Ground-truth generators for the four benchmark scenarios, the two colored
//! measurement-noise models and the RMSE/ARMSE metrics.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::kernel::{build_cov, KernelSpec};
use crate::linalg::{cholesky, sample_mvn};

/// RNG streams, one per purpose, so that e.g. changing the noise model never
/// perturbs the truth of a trial.
const STREAM_TRUTH: u64 = 1;
const STREAM_NOISE: u64 = 2;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [ScenarioId::S1, ScenarioId::S2, ScenarioId::S3, ScenarioId::S4];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::S1 => "S1",
            ScenarioId::S2 => "S2",
            ScenarioId::S3 => "S3",
            ScenarioId::S4 => "S4",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ScenarioId::S1 => "gradual coordinated turn (15 deg/s for 10 s) between constant-velocity legs",
            ScenarioId::S2 => "sharp coordinated turn (30 deg/s for 9 s) between constant-velocity legs",
            ScenarioId::S3 => "constant velocity with a random-walk turn rate",
            ScenarioId::S4 => "per-coordinate GP draws around a quadratic mean",
        }
    }
}

/// Motion model of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    /// Constant velocity, one constant-rate turn, constant velocity again.
    CvCt {
        /// Initial speed is drawn uniformly from this range (m/s).
        speed_range: (f64, f64),
        /// Turn rate in degrees per second; negative turns clockwise.
        turn_rate_deg: f64,
        turn_start: f64,
        turn_duration: f64,
    },
    /// Coordinated turn with a Gaussian random-walk turn rate and no
    /// position or velocity noise.
    WpvCt {
        speed_range: (f64, f64),
        /// Turn-rate diffusion intensity (rad²/s³); per-step variance is
        /// `intensity · dt`.
        turn_rate_intensity: f64,
    },
    /// Independent GP per coordinate with a quadratic mean `c0 + c1 t + c2 t²`.
    Gp { mean: [[f64; 3]; 2], kernel: KernelSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    /// Number of measurement steps `T`; step `k` is at time `k · dt`.
    pub steps: usize,
    pub dt: f64,
    #[serde(default)]
    pub initial_position: [f64; 2],
    /// Initial heading in degrees from the x axis.
    #[serde(default)]
    pub initial_heading_deg: f64,
    pub motion: Motion,
}

impl ScenarioSpec {
    /// Default configuration of a scenario.
    pub fn preset(id: ScenarioId) -> Self {
        let (steps, dt, motion) = match id {
            ScenarioId::S1 => (
                40,
                1.0,
                Motion::CvCt {
                    speed_range: (150.0, 250.0),
                    turn_rate_deg: 15.0,
                    turn_start: 15.0,
                    turn_duration: 10.0,
                },
            ),
            ScenarioId::S2 => (
                36,
                1.0,
                Motion::CvCt {
                    speed_range: (150.0, 250.0),
                    turn_rate_deg: 30.0,
                    turn_start: 13.0,
                    turn_duration: 9.0,
                },
            ),
            ScenarioId::S3 => (
                100,
                0.1,
                Motion::WpvCt {
                    speed_range: (3.0, 5.0),
                    turn_rate_intensity: 0.15,
                },
            ),
            ScenarioId::S4 => (
                100,
                0.1,
                Motion::Gp {
                    mean: [[0.0, 2.0, 0.1], [0.0, 1.0, -0.05]],
                    kernel: KernelSpec {
                        variance: 1.0,
                        length_scale: 1.0,
                        jitter: crate::kernel::DEFAULT_JITTER,
                    },
                },
            ),
        };
        ScenarioSpec {
            id,
            steps,
            dt,
            initial_position: [0.0, 0.0],
            initial_heading_deg: 0.0,
            motion,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.steps == 0 {
            return bad("scenario needs at least one step".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !self.initial_position.iter().all(|v| v.is_finite()) || !self.initial_heading_deg.is_finite() {
            return bad("initial state must be finite".into());
        }
        let range_ok = |(lo, hi): (f64, f64)| lo >= 0.0 && lo <= hi && hi.is_finite();
        match &self.motion {
            Motion::CvCt {
                speed_range,
                turn_rate_deg,
                turn_start,
                turn_duration,
            } => {
                if !range_ok(*speed_range) {
                    return bad(format!("invalid speed range {speed_range:?}"));
                }
                if !turn_rate_deg.is_finite() || !(*turn_start >= 0.0) || !(*turn_duration >= 0.0) {
                    return bad("invalid turn segment".into());
                }
            }
            Motion::WpvCt {
                speed_range,
                turn_rate_intensity,
            } => {
                if !range_ok(*speed_range) {
                    return bad(format!("invalid speed range {speed_range:?}"));
                }
                if !(*turn_rate_intensity >= 0.0 && turn_rate_intensity.is_finite()) {
                    return bad("turn rate intensity must be non-negative".into());
                }
            }
            Motion::Gp { mean, kernel } => {
                if !mean.iter().flatten().all(|v| v.is_finite()) {
                    return bad("GP mean coefficients must be finite".into());
                }
                kernel.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Measurement times `dt, 2 dt, …, T dt`.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.steps).map(|k| k as f64 * self.dt).collect()
    }
}

/// True trajectory sampled at the measurement times.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub times: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
}

impl Truth {
    pub fn headings(&self) -> Vec<f64> {
        self.velocities.iter().map(|v| v[1].atan2(v[0])).collect()
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.velocities.iter().map(|v| v[0].hypot(v[1])).collect()
    }
}

/// Advance a constant-turn-rate state by `tau` seconds (exact kinematics).
fn ct_advance(pos: [f64; 2], speed: f64, heading: f64, omega: f64, tau: f64) -> [f64; 2] {
    if omega.abs() < 1e-12 {
        return [pos[0] + speed * tau * heading.cos(), pos[1] + speed * tau * heading.sin()];
    }
    let r = speed / omega;
    let h2 = heading + omega * tau;
    [pos[0] + r * (h2.sin() - heading.sin()), pos[1] + r * (heading.cos() - h2.cos())]
}

fn draw_speed<R: Rng + ?Sized>(range: (f64, f64), rng: &mut R) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        Uniform::new_inclusive(range.0, range.1)
            .expect("validated range")
            .sample(rng)
    }
}

/// Piecewise CV-CT-CV position and heading at time `t`.
fn cv_ct_state(p0: [f64; 2], h0: f64, speed: f64, omega: f64, start: f64, dur: f64, t: f64) -> ([f64; 2], f64) {
    let a = t.min(start);
    let mut pos = ct_advance(p0, speed, h0, 0.0, a);
    let mut heading = h0;
    if t > start {
        let b = (t - start).min(dur);
        pos = ct_advance(pos, speed, heading, omega, b);
        heading += omega * b;
    }
    if t > start + dur {
        pos = ct_advance(pos, speed, heading, 0.0, t - start - dur);
    }
    (pos, heading)
}

/// Deterministic, seeded ground-truth trajectory.
pub fn gen_truth(spec: &ScenarioSpec, seed: u64) -> Result<Truth> {
    spec.validate()?;
    let mut rng = rng_for(seed, STREAM_TRUTH);
    let times = spec.times();
    let h0 = spec.initial_heading_deg.to_radians();
    let p0 = spec.initial_position;
    let mut positions = Vec::with_capacity(times.len());
    let mut velocities = Vec::with_capacity(times.len());
    match &spec.motion {
        Motion::CvCt {
            speed_range,
            turn_rate_deg,
            turn_start,
            turn_duration,
        } => {
            let speed = draw_speed(*speed_range, &mut rng);
            let omega = turn_rate_deg.to_radians();
            for &t in &times {
                let (p, h) = cv_ct_state(p0, h0, speed, omega, *turn_start, *turn_duration, t);
                positions.push(p);
                velocities.push([speed * h.cos(), speed * h.sin()]);
            }
        }
        Motion::WpvCt {
            speed_range,
            turn_rate_intensity,
        } => {
            let speed = draw_speed(*speed_range, &mut rng);
            let step = Normal::new(0.0, (turn_rate_intensity * spec.dt).sqrt()).expect("validated intensity");
            let (mut pos, mut heading, mut omega) = (p0, h0, 0.0);
            for _ in &times {
                pos = ct_advance(pos, speed, heading, omega, spec.dt);
                heading += omega * spec.dt;
                omega += step.sample(&mut rng);
                positions.push(pos);
                velocities.push([speed * heading.cos(), speed * heading.sin()]);
            }
        }
        Motion::Gp { mean, kernel } => {
            let cov = build_cov(kernel, &times, &times)?;
            let chol = cholesky(&cov.entries)?;
            let paths: Vec<DVector<f64>> = (0..2).map(|_| sample_mvn(&chol, None, &mut rng)).collect();
            for (i, &t) in times.iter().enumerate() {
                let m = |c: usize| mean[c][0] + mean[c][1] * t + mean[c][2] * t * t;
                let dm = |c: usize| mean[c][1] + 2.0 * mean[c][2] * t;
                positions.push([p0[0] + m(0) + paths[0][i], p0[1] + m(1) + paths[1][i]]);
                // velocity of the mean only; the GP part has no closed form here
                velocities.push([dm(0), dm(1)]);
            }
        }
    }
    Ok(Truth {
        times,
        positions,
        velocities,
    })
}

/// Measurement-noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// One zero-mean GP draw per coordinate over the measurement times.
    GpColored { kernel: KernelSpec },
    /// Two GP paths (base and outlier variance) on a jittered time grid; each
    /// step takes its value from the outlier path with probability
    /// `p_outlier`, jointly for all coordinates.
    HeavyTailed {
        kernel: KernelSpec,
        variance_outlier: f64,
        #[serde(default = "default_p_outlier")]
        p_outlier: f64,
        /// Half-width of the uniform time jitter, as a fraction of `dt`.
        #[serde(default = "default_time_jitter")]
        time_jitter: f64,
    },
}

fn default_p_outlier() -> f64 {
    0.05
}
fn default_time_jitter() -> f64 {
    0.25
}

impl NoiseSpec {
    pub fn gp_colored(variance: f64, length_scale: f64) -> Result<Self> {
        Ok(NoiseSpec::GpColored {
            kernel: KernelSpec::rbf(variance, length_scale)?,
        })
    }

    pub fn heavy_tailed(variance: f64, variance_outlier: f64, length_scale: f64) -> Result<Self> {
        Ok(NoiseSpec::HeavyTailed {
            kernel: KernelSpec::rbf(variance, length_scale)?,
            variance_outlier,
            p_outlier: default_p_outlier(),
            time_jitter: default_time_jitter(),
        })
    }

    /// Noise model used with a scenario by default.
    pub fn preset(id: ScenarioId, heavy: bool) -> Self {
        let (var, ls) = match id {
            ScenarioId::S1 | ScenarioId::S2 => (25.0, 1.0),
            ScenarioId::S3 | ScenarioId::S4 => (0.25, 0.1),
        };
        if heavy {
            Self::heavy_tailed(var, 10.0 * var, ls).expect("preset kernel is valid")
        } else {
            Self::gp_colored(var, ls).expect("preset kernel is valid")
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        match self {
            NoiseSpec::GpColored { kernel } | NoiseSpec::HeavyTailed { kernel, .. } => kernel,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::GpColored { .. } => "gp",
            NoiseSpec::HeavyTailed { .. } => "heavy",
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel().validate().map_err(|e| Error::Config(e.to_string()))?;
        if let NoiseSpec::HeavyTailed {
            variance_outlier,
            p_outlier,
            time_jitter,
            ..
        } = self
        {
            if !(*variance_outlier >= 0.0 && variance_outlier.is_finite()) {
                return Err(Error::Config(format!("invalid outlier variance {variance_outlier}")));
            }
            if !(0.0..=1.0).contains(p_outlier) {
                return Err(Error::Config(format!("outlier probability {p_outlier} outside [0, 1]")));
            }
            if !(0.0..0.5).contains(time_jitter) {
                return Err(Error::Config(format!("time jitter {time_jitter} must lie in [0, 0.5)")));
            }
        }
        Ok(())
    }
}

/// Noise realization for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    /// `values[k][c]` for step `k` and coordinate `c`.
    pub values: Vec<Vec<f64>>,
    /// Steps taken from the outlier path (always false for GP noise).
    pub outlier: Vec<bool>,
}

fn gp_paths<R: Rng + ?Sized>(kernel: &KernelSpec, times: &[f64], dims: usize, rng: &mut R) -> Result<Vec<DVector<f64>>> {
    if kernel.variance == 0.0 {
        return Ok(vec![DVector::zeros(times.len()); dims]);
    }
    let cov = build_cov(kernel, times, times)?;
    let chol = cholesky(&cov.entries)?;
    Ok((0..dims).map(|_| sample_mvn(&chol, None, rng)).collect())
}

/// Seeded noise over the given measurement times, `dims` coordinates each.
pub fn gen_noise(spec: &NoiseSpec, times: &[f64], dims: usize, seed: u64) -> Result<NoiseDraw> {
    spec.validate()?;
    let mut rng = rng_for(seed, STREAM_NOISE);
    let n = times.len();
    match spec {
        NoiseSpec::GpColored { kernel } => {
            let paths = gp_paths(kernel, times, dims, &mut rng)?;
            Ok(NoiseDraw {
                values: (0..n).map(|k| paths.iter().map(|p| p[k]).collect()).collect(),
                outlier: vec![false; n],
            })
        }
        NoiseSpec::HeavyTailed {
            kernel,
            variance_outlier,
            p_outlier,
            time_jitter,
        } => {
            let spacing = if n > 1 { (times[n - 1] - times[0]) / (n - 1) as f64 } else { 1.0 };
            let half = time_jitter * spacing;
            let grid: Vec<f64> = times
                .iter()
                .map(|t| if half > 0.0 { t + rng.random_range(-half..half) } else { *t })
                .collect();
            let base = gp_paths(kernel, &grid, dims, &mut rng)?;
            let wide = KernelSpec {
                variance: *variance_outlier,
                ..*kernel
            };
            let out = gp_paths(&wide, &grid, dims, &mut rng)?;
            let outlier: Vec<bool> = (0..n).map(|_| rng.random_bool(*p_outlier)).collect();
            let values = (0..n)
                .map(|k| {
                    let src = if outlier[k] { &out } else { &base };
                    src.iter().map(|p| p[k]).collect()
                })
                .collect();
            Ok(NoiseDraw { values, outlier })
        }
    }
}

/// One Monte-Carlo trial: truth plus position measurements `y_k = x_k + v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub seed: u64,
    pub truth: Truth,
    /// `(k, y_k)` with `k = 1..=T`.
    pub measurements: Vec<(u64, [f64; 2])>,
}

pub fn gen_trial(scenario: &ScenarioSpec, noise: &NoiseSpec, seed: u64) -> Result<Trial> {
    let truth = gen_truth(scenario, seed)?;
    let draw = gen_noise(noise, &truth.times, 2, seed)?;
    let measurements = truth
        .positions
        .iter()
        .zip(&draw.values)
        .enumerate()
        .map(|(i, (p, v))| (i as u64 + 1, [p[0] + v[0], p[1] + v[1]]))
        .collect();
    Ok(Trial {
        seed,
        truth,
        measurements,
    })
}

/// Per-step RMSE over trials: `truth[i][k]` and `estimates[i][k]` are position
/// vectors of trial `i` at step `k`; the squared Euclidean error is averaged
/// over trials.
pub fn rmse<P: AsRef<[f64]>, Q: AsRef<[f64]>>(truth: &[Vec<P>], estimates: &[Vec<Q>]) -> Result<Vec<f64>> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    if truth.len() != estimates.len() {
        return Err(dim_err(format!("{} trials", truth.len()), format!("{} trials", estimates.len())));
    }
    let steps = truth[0].len();
    let mut acc = vec![0.0; steps];
    for (tr, es) in truth.iter().zip(estimates) {
        if tr.len() != steps || es.len() != steps {
            return Err(dim_err(format!("{steps} steps"), format!("{}/{} steps", tr.len(), es.len())));
        }
        for (k, (x, xh)) in tr.iter().zip(es).enumerate() {
            let (x, xh) = (x.as_ref(), xh.as_ref());
            if x.len() != xh.len() {
                return Err(dim_err(x.len(), xh.len()));
            }
            acc[k] += x.iter().zip(xh).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    let n = truth.len() as f64;
    Ok(acc.into_iter().map(|s| (s / n).sqrt()).collect())
}

/// Time average of an RMSE series.
pub fn armse(rmse_series: &[f64]) -> Result<f64> {
    if rmse_series.is_empty() {
        return Err(Error::InvalidInput("empty RMSE series".into()));
    }
    Ok(rmse_series.iter().sum::<f64>() / rmse_series.len() as f64)
}
