mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use tfot_core::gp::{gp_predict_many, NoiseMode};
use tfot_core::stp::{match_linear, match_sum, MatchedStp};
use tfot_core::{gp_log_marginal, gp_predict, stp_predict, CovMatrix, GpModel, MeanFn, MeasurementMap, StpModel, StpNoise};

fn instance(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, tfot_core::KernelSpec) {
    let mut r = rng(seed);
    let times = random_times(&mut r, n, 0.8);
    let values: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let spec = rbf(r.random_range(0.5..4.0), r.random_range(0.5..2.0));
    (times, values, spec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gp_matches_dense_oracle(seed in any::<u64>(), n in 1usize..=10, q in -6.0f64..8.0) {
        let (times, values, spec) = instance(seed, n);
        let model = GpModel::zero_mean(spec).unwrap();
        let post = gp_predict(&model, &times, &values, q).unwrap();
        let k = with_jitter(dense_kernel(&spec, &times, &times), spec.jitter);
        let cross = dense_kernel(&spec, &[q], &times).transpose().column(0).into_owned();
        let y = DVector::from_column_slice(&values);
        let (m, v) = dense_posterior(&k, &cross, spec.variance, &y);
        prop_assert!((post.mean - m).abs() < 1e-8 * (1.0 + m.abs()));
        prop_assert!((post.variance - v.max(0.0)).abs() < 1e-8 * spec.variance);

        let lml = gp_log_marginal(&model, &times, &values).unwrap();
        let inv = dense_inverse(&k);
        let oracle = -0.5 * (y.transpose() * inv * &y)[(0, 0)] - 0.5 * dense_log_det(&k)
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        prop_assert!((lml - oracle).abs() < 1e-8 * (1.0 + oracle.abs()));
    }

    #[test]
    fn gp_interpolates_and_never_exceeds_prior(seed in any::<u64>(), n in 1usize..=10, ls in 0.2f64..0.6) {
        // length scale comparable to the spacing keeps the jitter's effect below tolerance
        let (times, values, mut spec) = instance(seed, n);
        spec.length_scale = ls;
        let model = GpModel::zero_mean(spec).unwrap();
        let at_train = gp_predict_many(&model, &times, &values, &times).unwrap();
        for (p, y) in at_train.iter().zip(&values) {
            prop_assert!((p.mean - y).abs() < 1e-6 * (1.0 + y.abs()));
            prop_assert!(p.variance <= 1e-6 * spec.variance);
        }
        for i in 0..20 {
            let q = times[0] - 2.0 + i as f64 * 0.7;
            let p = gp_predict(&model, &times, &values, q).unwrap();
            prop_assert!(p.variance <= spec.variance + 1e-10);
        }
    }

    #[test]
    fn more_data_never_raises_variance(seed in any::<u64>(), n in 2usize..=10, q in -6.0f64..8.0) {
        let (times, values, spec) = instance(seed, n);
        let mut model = GpModel::zero_mean(spec).unwrap();
        model.kernel.jitter = 0.0;
        model.noise = NoiseMode::Noisy { variance: 1e-9 };
        let fewer = gp_predict(&model, &times[..n - 1], &values[..n - 1], q).unwrap();
        let more = gp_predict(&model, &times, &values, q).unwrap();
        prop_assert!(more.variance <= fewer.variance + 1e-9);
    }

    #[test]
    fn stp_mean_is_gp_mean(seed in any::<u64>(), n in 1usize..=8, q in -6.0f64..8.0, dof in 2.5f64..50.0) {
        let (times, values, spec) = instance(seed, n);
        let gp = gp_predict(&GpModel::zero_mean(spec).unwrap(), &times, &values, q).unwrap();
        let st = stp_predict(&StpModel::zero_mean(spec, dof).unwrap(), &times, &values, q).unwrap();
        prop_assert_eq!(gp.mean.to_bits(), st.mean.to_bits());
        prop_assert_eq!(st.dof, dof + n as f64);
    }

    #[test]
    fn stp_variance_grows_with_residual_scale(seed in any::<u64>(), n in 1usize..=8, c in 1.01f64..5.0) {
        let (times, values, spec) = instance(seed, n);
        prop_assume!(values.iter().any(|v| v.abs() > 1e-3));
        let model = StpModel::zero_mean(spec, 5.0).unwrap();
        let q = times[n - 1] + 0.4;
        let base = stp_predict(&model, &times, &values, q).unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        let big = stp_predict(&model, &times, &scaled, q).unwrap();
        prop_assert!(big.variance_scale >= base.variance_scale);
    }

    #[test]
    fn sum_moment_identity(seed in any::<u64>(), n in 1usize..=8, dg in 2.1f64..30.0, dv in 2.1f64..30.0) {
        let mut r = rng(seed);
        let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let kg = CovMatrix::square(random_psd(&mut r, n), times.clone()).unwrap();
        let kv = CovMatrix::square(random_psd(&mut r, n), times).unwrap();
        let g = MatchedStp::zero_mean(kg.clone(), dg).unwrap();
        let v = MatchedStp::zero_mean(kv.clone(), dv).unwrap();
        let e = match_sum(&g, &v).unwrap();
        let lhs = e.kernel.entries * (e.dof / (e.dof - 2.0));
        let rhs = kg.entries * (dg / (dg - 2.0)) + kv.entries * (dv / (dv - 2.0));
        prop_assert!((lhs - &rhs).amax() <= 1e-12 * (1.0 + rhs.amax()));
    }
}

#[test]
fn stp_variance_approaches_gp_as_dof_grows() {
    for seed in 0..20 {
        let (times, values, spec) = instance(seed, 6);
        let q = times[2] + 0.3;
        let gp = gp_predict(&GpModel::zero_mean(spec).unwrap(), &times, &values, q).unwrap();
        let gap = |dof: f64| {
            let st = stp_predict(&StpModel::zero_mean(spec, dof).unwrap(), &times, &values, q).unwrap();
            (st.variance_scale - gp.variance).abs()
        };
        assert!(gap(1e6) <= gap(1e3) + 1e-15, "seed {seed}");
    }
}

#[test]
fn stp_noisy_mode_matches_dense_oracle() {
    let (times, values, spec) = instance(3, 5);
    let model = StpModel::new(MeanFn::Zero, spec, 6.0, StpNoise::Noisy { variance: 0.3, dof: 6.0 }).unwrap();
    let q = 0.25 * (times[1] + times[2]);
    let p = stp_predict(&model, &times, &values, q).unwrap();
    let mut k = with_jitter(dense_kernel(&spec, &times, &times), spec.jitter);
    k += DMatrix::identity(5, 5) * 0.3;
    let cross = dense_kernel(&spec, &[q], &times).transpose().column(0).into_owned();
    let y = DVector::from_column_slice(&values);
    let (m, v) = dense_posterior(&k, &cross, spec.variance, &y);
    let beta = (y.transpose() * dense_inverse(&k) * &y)[(0, 0)];
    let factor = (6.0 + beta - 2.0) / (6.0 + 5.0 - 2.0);
    assert!((p.mean - m).abs() < 1e-8);
    assert!((p.variance_scale - factor * v).abs() < 1e-8);
}

#[test]
fn scaled_student_t_samples_match_match_linear() {
    let mut r = rng(41);
    let dof = 5.0;
    let eps = MatchedStp::zero_mean(CovMatrix::square(DMatrix::from_element(1, 1, 1.5), vec![0.0]).unwrap(), dof).unwrap();
    let map = MeasurementMap::scalar(2.0).unwrap();
    let g = match_linear(&eps, &map).unwrap();
    let l = chol_lower(&eps.kernel.entries);
    let draws: Vec<DVector<f64>> = (0..100_000).map(|_| student_t_draw(&mut r, &l, dof) * 2.0).collect();
    let emp = second_moment(&draws)[(0, 0)];
    let expected = g.covariance().entries[(0, 0)];
    assert!((emp / expected - 1.0).abs() < 0.05, "{emp} vs {expected}");
}

#[test]
fn summed_student_t_samples_match_match_sum() {
    let mut r = rng(42);
    let times = [0.0, 1.0, 2.5];
    let kg = CovMatrix::square(dense_kernel(&rbf(2.0, 1.0), &times, &times), times.to_vec()).unwrap();
    let kv = CovMatrix::square(dense_kernel(&rbf(1.0, 0.5), &times, &times), times.to_vec()).unwrap();
    let (dg, dv) = (6.0, 9.0);
    let e = match_sum(&MatchedStp::zero_mean(kg.clone(), dg).unwrap(), &MatchedStp::zero_mean(kv.clone(), dv).unwrap()).unwrap();
    let (lg, lv) = (chol_lower(&kg.entries), chol_lower(&kv.entries));
    let draws: Vec<DVector<f64>> = (0..100_000)
        .map(|_| student_t_draw(&mut r, &lg, dg) + student_t_draw(&mut r, &lv, dv))
        .collect();
    let err = rel_err(&second_moment(&draws), &e.covariance().entries);
    assert!(err < 0.05, "relative error {err}");
}
