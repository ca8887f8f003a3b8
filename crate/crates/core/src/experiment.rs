//! Monte-Carlo experiment runner: generates trials, drives every configured
//! tracker over the same measurement streams and aggregates RMSE/ARMSE.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{GpmtConfig, GpmtState, TfotOnlyConfig, TfotOnlyState};
use crate::error::{Error, Result};
use crate::sim::{armse, gen_trial, rmse, NoiseSpec, ScenarioSpec, Trial};
use crate::tracker::{reset, TrackerConfig, TrackerState};

/// Tracker selection inside an experiment. The sampling interval of every
/// tracker is taken from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackerSpec {
    Tfot(TrackerConfig),
    Gpmt(GpmtConfig),
    TfotOnly(TfotOnlyConfig),
}

impl TrackerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TrackerSpec::Tfot(c) => c.validate(),
            TrackerSpec::Gpmt(c) => c.validate(),
            TrackerSpec::TfotOnly(c) => c.validate(),
        }
    }

    fn with_dt(&self, dt: f64) -> TrackerSpec {
        let mut s = self.clone();
        match &mut s {
            TrackerSpec::Tfot(c) => c.dt = dt,
            TrackerSpec::Gpmt(c) => c.dt = dt,
            TrackerSpec::TfotOnly(c) => c.dt = dt,
        }
        s
    }

    pub fn build(&self) -> Result<Box<dyn Estimator>> {
        Ok(match self {
            TrackerSpec::Tfot(c) => Box::new(reset(c)?),
            TrackerSpec::Gpmt(c) => Box::new(GpmtState::new(c)?),
            TrackerSpec::TfotOnly(c) => Box::new(TfotOnlyState::new(c)?),
        })
    }
}

/// Common online interface: consume `y_k` and return the position estimate at `t_k`.
pub trait Estimator: Send {
    fn estimate(&mut self, k: u64, y: &[f64]) -> Result<Vec<f64>>;
}

impl Estimator for TrackerState {
    fn estimate(&mut self, k: u64, y: &[f64]) -> Result<Vec<f64>> {
        let out = self.step(k, y)?;
        out.total_mean(out.time)
    }
}

impl Estimator for GpmtState {
    fn estimate(&mut self, k: u64, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.step(k, y)?.mean)
    }
}

impl Estimator for TfotOnlyState {
    fn estimate(&mut self, k: u64, y: &[f64]) -> Result<Vec<f64>> {
        Ok(TfotOnlyState::estimate(self, k, y)?.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTracker {
    pub name: String,
    #[serde(flatten)]
    pub spec: TrackerSpec,
}

fn default_trials() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub noise: NoiseSpec,
    pub trackers: Vec<NamedTracker>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Also write per-step truth, measurements and estimates.
    #[serde(default)]
    pub write_trajectories: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.scenario.validate()?;
        self.noise.validate()?;
        if self.trackers.is_empty() {
            return Err(Error::Config("at least one tracker is required".into()));
        }
        let mut names = HashSet::new();
        for t in &self.trackers {
            if t.name.is_empty() || !t.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(Error::Config(format!(
                    "tracker name {:?} must be non-empty and use only [A-Za-z0-9._-]",
                    t.name
                )));
            }
            if !names.insert(t.name.as_str()) {
                return Err(Error::Config(format!("duplicate tracker name {:?}", t.name)));
            }
            t.spec
                .validate()
                .map_err(|e| Error::Config(format!("tracker {:?}: {}", t.name, strip_config(e))))?;
        }
        Ok(())
    }

    /// Parse and validate a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            let line = text.lines().nth(e.line().saturating_sub(1)).unwrap_or("");
            Error::Config(format!(
                "line {}, column {}: {}\n  | {}\n  | {}^",
                e.line(),
                e.column(),
                e,
                line,
                " ".repeat(e.column().saturating_sub(1))
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Read and check a config file; the error carries the diagnostic.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

/// Per-trial record of one tracker's position estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub trial: Trial,
    /// `estimates[j][k]` for tracker `j` at step `k`.
    pub estimates: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerSummary {
    pub name: String,
    pub rmse: Vec<f64>,
    pub armse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub scenario: String,
    pub noise: String,
    pub times: Vec<f64>,
    pub trackers: Vec<TrackerSummary>,
    pub runs: Vec<TrialRun>,
}

impl ExperimentSummary {
    pub fn armse_of(&self, name: &str) -> Option<f64> {
        self.trackers.iter().find(|t| t.name == name).map(|t| t.armse)
    }

    /// Plain-text ARMSE table.
    pub fn table(&self) -> String {
        let width = self.trackers.iter().map(|t| t.name.len()).max().unwrap_or(0).max(7);
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} / noise {} / {} trials", self.scenario, self.noise, self.runs.len());
        let _ = writeln!(s, "{:<width$}  {:>12}", "tracker", "ARMSE");
        for t in &self.trackers {
            let _ = writeln!(s, "{:<width$}  {:>12.4}", t.name, t.armse);
        }
        s
    }
}

fn run_trial(cfg: &ExperimentConfig, specs: &[TrackerSpec], seed: u64) -> Result<TrialRun> {
    let trial = gen_trial(&cfg.scenario, &cfg.noise, seed)?;
    let mut estimates = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut est = spec.build()?;
        let mut path = Vec::with_capacity(trial.measurements.len());
        for (k, y) in &trial.measurements {
            let e = est.estimate(*k, y)?;
            path.push([e[0], e[1]]);
        }
        estimates.push(path);
    }
    Ok(TrialRun { trial, estimates })
}

/// Run all trials, optionally in parallel with `jobs` threads. The result is
/// independent of `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let specs: Vec<TrackerSpec> = cfg.trackers.iter().map(|t| t.spec.with_dt(cfg.scenario.dt)).collect();
    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|i| cfg.base_seed.wrapping_add(i)).collect();
    let runs: Vec<TrialRun> = if jobs <= 1 {
        seeds.iter().map(|&s| run_trial(cfg, &specs, s)).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(|&s| run_trial(cfg, &specs, s)).collect::<Result<_>>())?
    };

    let truth: Vec<&Vec<[f64; 2]>> = runs.iter().map(|r| &r.trial.truth.positions).collect();
    let truth: Vec<Vec<[f64; 2]>> = truth.into_iter().cloned().collect();
    let mut trackers = Vec::with_capacity(specs.len());
    for (j, t) in cfg.trackers.iter().enumerate() {
        let est: Vec<Vec<[f64; 2]>> = runs.iter().map(|r| r.estimates[j].clone()).collect();
        let series = rmse(&truth, &est)?;
        trackers.push(TrackerSummary {
            name: t.name.clone(),
            armse: armse(&series)?,
            rmse: series,
        });
    }
    Ok(ExperimentSummary {
        scenario: cfg.scenario.id.name().to_string(),
        noise: cfg.noise.name().to_string(),
        times: cfg.scenario.times(),
        trackers,
        runs,
    })
}

/// Write the CSV and plot-data files into `dir` and return their paths.
pub fn write_outputs(summary: &ExperimentSummary, dir: &Path, trajectories: bool) -> Result<Vec<PathBuf>> {
    let io = |p: &Path, e: std::io::Error| Error::Config(format!("cannot write {}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| io(&p, e))?;
        written.push(p);
        Ok(())
    };

    for t in &summary.trackers {
        let mut s = String::from("k,rmse\n");
        for (k, v) in t.rmse.iter().enumerate() {
            let _ = writeln!(s, "{},{}", k + 1, v);
        }
        put(format!("rmse_{}.csv", t.name), s)?;
    }

    let mut s = String::from("tracker,scenario,armse\n");
    for t in &summary.trackers {
        let _ = writeln!(s, "{},{},{}", t.name, summary.scenario, t.armse);
    }
    put("armse.csv".into(), s)?;

    // gnuplot: one column per tracker, `plot for [i=3:*] 'rmse.dat' using 2:i`
    let mut s = String::from("# k t");
    for t in &summary.trackers {
        let _ = write!(s, " {}", t.name);
    }
    s.push('\n');
    for (k, time) in summary.times.iter().enumerate() {
        let _ = write!(s, "{} {}", k + 1, time);
        for t in &summary.trackers {
            let _ = write!(s, " {}", t.rmse[k]);
        }
        s.push('\n');
    }
    put("rmse.dat".into(), s)?;

    if trajectories {
        let mut s = String::from("trial,k,t,truth_x,truth_y,meas_x,meas_y");
        for t in &summary.trackers {
            let _ = write!(s, ",{0}_x,{0}_y", t.name);
        }
        s.push('\n');
        for (i, run) in summary.runs.iter().enumerate() {
            let tr = &run.trial;
            for (k, (kk, y)) in tr.measurements.iter().enumerate() {
                let x = tr.truth.positions[k];
                let _ = write!(s, "{},{},{},{},{},{},{}", i, kk, tr.truth.times[k], x[0], x[1], y[0], y[1]);
                for e in &run.estimates {
                    let _ = write!(s, ",{},{}", e[k][0], e[k][1]);
                }
                s.push('\n');
            }
        }
        put("trajectories.csv".into(), s)?;
    }
    Ok(written)
}

/// Default experiment for a scenario and noise model, with the four trackers.
pub fn preset_experiment(id: crate::sim::ScenarioId, heavy: bool) -> ExperimentConfig {
    use crate::sim::ScenarioId;
    let scenario = ScenarioSpec::preset(id);
    let noise = NoiseSpec::preset(id, heavy);
    let noise_kernel = *noise.kernel();
    let gpmt_d = match id {
        ScenarioId::S1 | ScenarioId::S2 => 8,
        ScenarioId::S3 => 9,
        ScenarioId::S4 => 10,
    };
    let trackers = vec![
        NamedTracker {
            name: "gpmt".into(),
            spec: TrackerSpec::Gpmt(GpmtConfig::new(gpmt_d)),
        },
        NamedTracker {
            name: "tfot".into(),
            spec: TrackerSpec::TfotOnly(TfotOnlyConfig::new(5)),
        },
        NamedTracker {
            name: "tfot-gp".into(),
            spec: TrackerSpec::Tfot(TrackerConfig::gp(noise_kernel)),
        },
        NamedTracker {
            name: "tfot-stp".into(),
            spec: TrackerSpec::Tfot(TrackerConfig::stp(noise_kernel, 5.0)),
        },
    ];
    ExperimentConfig {
        scenario,
        noise,
        trackers,
        trials: default_trials(),
        base_seed: 0,
        output_dir: None,
        write_trajectories: false,
    }
}
