#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use tfot_core::KernelSpec;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rbf(variance: f64, length_scale: f64) -> KernelSpec {
    KernelSpec::rbf(variance, length_scale).unwrap()
}

/// Dense kernel matrix by direct evaluation, no jitter.
pub fn dense_kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        let d = a[i] - b[j];
        spec.variance * (-d * d / (2.0 * spec.length_scale * spec.length_scale)).exp()
    })
}

/// Jitter as the library applies it on square grids.
pub fn with_jitter(mut k: DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
    let m = k.diagonal().max();
    for i in 0..k.nrows() {
        k[(i, i)] += jitter * m;
    }
    k
}

pub fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

pub fn dense_log_det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant().ln()
}

/// Independent GP posterior by explicit inversion.
pub fn dense_posterior(k: &DMatrix<f64>, cross: &DVector<f64>, prior: f64, y: &DVector<f64>) -> (f64, f64) {
    let inv = dense_inverse(k);
    let mean = (cross.transpose() * &inv * y)[(0, 0)];
    let var = prior - (cross.transpose() * &inv * cross)[(0, 0)];
    (mean, var)
}

pub fn random_times<R: Rng>(rng: &mut R, n: usize, spacing: f64) -> Vec<f64> {
    let mut t = rng.random_range(-5.0..5.0);
    (0..n)
        .map(|_| {
            t += spacing * rng.random_range(0.5..1.5);
            t
        })
        .collect()
}

pub fn standard_normal_vec<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Lower Cholesky factor of a PSD matrix, with a tiny ridge.
pub fn chol_lower(m: &DMatrix<f64>) -> DMatrix<f64> {
    let ridge = 1e-12 * m.diagonal().max().max(1.0);
    let m = m + DMatrix::identity(m.nrows(), m.ncols()) * ridge;
    m.cholesky().expect("PSD").l()
}

/// Multivariate Student-t draw `sqrt(ν / χ²_ν) · L z` with scale `L Lᵀ`.
pub fn student_t_draw<R: Rng>(rng: &mut R, l: &DMatrix<f64>, dof: f64) -> DVector<f64> {
    let w = ChiSquared::new(dof).unwrap().sample(rng);
    (l * standard_normal_vec(rng, l.nrows())) * (dof / w).sqrt()
}

/// Sample covariance about the known zero mean.
pub fn second_moment(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples[0].len();
    let mut acc = DMatrix::zeros(n, n);
    for s in samples {
        acc += s * s.transpose();
    }
    acc / samples.len() as f64
}

/// `max |a - b| / max |b|`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

pub fn random_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
}

/// Random symmetric PSD matrix of size `n`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}
