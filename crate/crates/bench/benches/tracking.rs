use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tfot_core::experiment::preset_experiment;
use tfot_core::{gen_trial, gp_predict, reset, run_experiment, GpModel, KernelSpec, NoiseSpec, ScenarioId, ScenarioSpec, TrackerConfig};

fn tracker_step(c: &mut Criterion) {
    let spec = ScenarioSpec::preset(ScenarioId::S1);
    let noise = NoiseSpec::preset(ScenarioId::S1, false);
    let trial = gen_trial(&spec, &noise, 0).unwrap();
    let mut group = c.benchmark_group("tracker_trial_s1");
    for (name, cfg) in [
        ("gp", TrackerConfig::gp(*noise.kernel())),
        ("stp", TrackerConfig::stp(*noise.kernel(), 5.0)),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut st = reset(&cfg).unwrap();
                for (k, y) in &trial.measurements {
                    black_box(st.step(*k, y).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn gp_predict_window(c: &mut Criterion) {
    let model = GpModel::zero_mean(KernelSpec::rbf(2.0, 1.5).unwrap()).unwrap();
    let times: Vec<f64> = (0..5).map(|i| i as f64).collect();
    let values = [0.3, -0.2, 0.8, 1.1, 0.4];
    c.bench_function("gp_predict_d5", |b| {
        b.iter(|| gp_predict(&model, black_box(&times), black_box(&values), 4.5).unwrap())
    });
}

fn experiment_trial(c: &mut Criterion) {
    let mut cfg = preset_experiment(ScenarioId::S1, true);
    cfg.trials = 1;
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    group.bench_function("s1_heavy_one_trial", |b| b.iter(|| run_experiment(&cfg, 1).unwrap()));
    group.finish();
}

criterion_group!(benches, tracker_step, gp_predict_window, experiment_trial);
criterion_main!(benches);
