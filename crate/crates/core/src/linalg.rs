//! Small dense linear-algebra helpers shared by the regression and simulation code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Cholesky factor of a symmetric positive-definite matrix.
pub type Chol = Cholesky<f64, Dyn>;

pub fn cholesky(m: &DMatrix<f64>) -> Result<Chol> {
    if !m.is_square() {
        return Err(Error::Conditioning(format!(
            "cannot factor a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("non-finite matrix entry".into()));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Conditioning("matrix is not positive definite".into()))?;
    if chol.l_dirty().diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::Conditioning("non-positive Cholesky pivot".into()));
    }
    Ok(chol)
}

/// `log det` of the factored matrix.
pub fn log_det(chol: &Chol) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Quadratic form `aᵀ M⁻¹ a` through the factor of `M`.
pub fn inv_quad(chol: &Chol, a: &DVector<f64>) -> f64 {
    let z = chol
        .l()
        .solve_lower_triangular(a)
        .expect("Cholesky factor has a positive diagonal");
    z.norm_squared()
}

/// One draw from `N(mean, LLᵀ)`.
pub fn sample_mvn<R: Rng + ?Sized>(chol: &Chol, mean: Option<&DVector<f64>>, rng: &mut R) -> DVector<f64> {
    let n = chol.l_dirty().nrows();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let mut x = chol.l() * z;
    if let Some(m) = mean {
        x += m;
    }
    x
}

/// `I_n ⊗ m`, the block-diagonal repetition of `m`.
pub fn kron_identity(n: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = m.shape();
    let mut out = DMatrix::zeros(n * p, n * q);
    for i in 0..n {
        out.view_mut((i * p, i * q), (p, q)).copy_from(m);
    }
    out
}
