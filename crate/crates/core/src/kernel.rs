//! RBF kernel, covariance matrices and the kernel algebra used to move between
//! the state-space residual process, its measurement-space image, and the
//! observed fitting-error process.
//!
//! A [`CovMatrix`] may carry vector-valued blocks: with `n` row times and block
//! dimension `p` the entry matrix is `(n·p) × (m·p)` and block `(i, j)` is the
//! `p × p` cross-covariance between the values at `row_times[i]` and
//! `col_times[j]`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::kron_identity;

/// Default relative diagonal jitter added to square covariance matrices.
pub const DEFAULT_JITTER: f64 = 1e-8;

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

/// Hyperparameters of the squared-exponential (RBF) kernel
/// `variance · exp(-(t - t')² / (2 length_scale²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub variance: f64,
    pub length_scale: f64,
    /// Relative diagonal term, scaled by the largest diagonal entry.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

impl KernelSpec {
    pub fn new(variance: f64, length_scale: f64, jitter: f64) -> Result<Self> {
        let spec = KernelSpec {
            variance,
            length_scale,
            jitter,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// RBF kernel with the default jitter.
    pub fn rbf(variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(variance, length_scale, DEFAULT_JITTER)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel variance must be finite and >= 0, got {}",
                self.variance
            )));
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel length scale must be finite and > 0, got {}",
                self.length_scale
            )));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel jitter must be finite and >= 0, got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    /// Pointwise kernel value. Jitter never enters here.
    #[inline]
    pub fn eval(&self, t: f64, t2: f64) -> f64 {
        let d = t - t2;
        self.variance * (-(d * d) / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn kernel_eval(spec: &KernelSpec, t: f64, t2: f64) -> f64 {
    spec.eval(t, t2)
}

/// Covariance (or cross-covariance) matrix between two time grids.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub entries: DMatrix<f64>,
    pub row_times: Vec<f64>,
    pub col_times: Vec<f64>,
}

impl CovMatrix {
    pub fn new(entries: DMatrix<f64>, row_times: Vec<f64>, col_times: Vec<f64>) -> Result<Self> {
        if row_times.is_empty() || col_times.is_empty() {
            return Err(Error::InvalidInput("empty time grid".into()));
        }
        let (nr, nc) = entries.shape();
        if nr % row_times.len() != 0 || nc % col_times.len() != 0 {
            return Err(dim_err(
                format!("multiples of {}x{}", row_times.len(), col_times.len()),
                format!("{nr}x{nc}"),
            ));
        }
        let m = CovMatrix {
            entries,
            row_times,
            col_times,
        };
        if m.row_block() != m.col_block() {
            return Err(dim_err("square blocks", format!("{}x{} blocks", m.row_block(), m.col_block())));
        }
        Ok(m)
    }

    /// Scalar-valued covariance over a shared grid.
    pub fn square(entries: DMatrix<f64>, times: Vec<f64>) -> Result<Self> {
        Self::new(entries, times.clone(), times)
    }

    pub fn zeros(times: Vec<f64>, block: usize) -> Self {
        let n = times.len() * block;
        CovMatrix {
            entries: DMatrix::zeros(n, n),
            row_times: times.clone(),
            col_times: times,
        }
    }

    /// Dimension of the value attached to each time.
    pub fn block(&self) -> usize {
        self.row_block()
    }

    fn row_block(&self) -> usize {
        self.entries.nrows() / self.row_times.len()
    }

    fn col_block(&self) -> usize {
        self.entries.ncols() / self.col_times.len()
    }

    pub fn is_square_grid(&self) -> bool {
        self.row_times == self.col_times
    }

    fn same_grid(&self, other: &CovMatrix) -> bool {
        self.row_times == other.row_times
            && self.col_times == other.col_times
            && self.entries.shape() == other.entries.shape()
    }

    pub fn scaled(&self, factor: f64) -> CovMatrix {
        CovMatrix {
            entries: &self.entries * factor,
            row_times: self.row_times.clone(),
            col_times: self.col_times.clone(),
        }
    }
}

/// Evaluate the kernel between two grids. When the grids coincide the diagonal
/// receives `jitter · max(diag)`.
pub fn build_cov(spec: &KernelSpec, row_times: &[f64], col_times: &[f64]) -> Result<CovMatrix> {
    spec.validate()?;
    if row_times.is_empty() || col_times.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if row_times.iter().chain(col_times).any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite time".into()));
    }
    let mut entries = DMatrix::from_fn(row_times.len(), col_times.len(), |i, j| {
        spec.eval(row_times[i], col_times[j])
    });
    if row_times == col_times && spec.jitter > 0.0 {
        let max_diag = entries.diagonal().max();
        let add = spec.jitter * max_diag;
        for i in 0..row_times.len() {
            entries[(i, i)] += add;
        }
    }
    Ok(CovMatrix {
        entries,
        row_times: row_times.to_vec(),
        col_times: col_times.to_vec(),
    })
}

/// Linear measurement map `H` with its canonical left inverse `A` (`A H = I`)
/// and the right inverse `B` of `Hᵀ` (`Hᵀ B = I`), both Moore-Penrose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapRepr", into = "MapRepr")]
pub struct MeasurementMap {
    h: DMatrix<f64>,
    a_left: DMatrix<f64>,
    b_right: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct MapRepr {
    h: Vec<Vec<f64>>,
}

impl TryFrom<MapRepr> for MeasurementMap {
    type Error = Error;

    fn try_from(repr: MapRepr) -> Result<Self> {
        let rows = repr.h.len();
        let cols = repr.h.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || repr.h.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("measurement matrix must be a non-empty rectangle".into()));
        }
        MeasurementMap::new(DMatrix::from_fn(rows, cols, |i, j| repr.h[i][j]))
    }
}

impl From<MeasurementMap> for MapRepr {
    fn from(m: MeasurementMap) -> Self {
        MapRepr {
            h: m.h.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

impl Default for MeasurementMap {
    fn default() -> Self {
        Self::identity(1)
    }
}

impl MeasurementMap {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.is_empty() || h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("measurement matrix must be finite and non-empty".into()));
        }
        let a_left = h
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Conditioning(e.to_string()))?;
        let b_right = h
            .transpose()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Conditioning(e.to_string()))?;
        let r = h.ncols();
        if (&a_left * &h - DMatrix::<f64>::identity(r, r)).amax() > 1e-10 {
            return Err(Error::Conditioning(
                "measurement matrix has no left inverse (rank below state dimension)".into(),
            ));
        }
        Ok(MeasurementMap { h, a_left, b_right })
    }

    pub fn identity(r: usize) -> Self {
        let eye = DMatrix::identity(r, r);
        MeasurementMap {
            h: eye.clone(),
            a_left: eye.clone(),
            b_right: eye,
        }
    }

    /// Scalar observation `y = gain · x`.
    pub fn scalar(gain: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, gain))
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn a_left(&self) -> &DMatrix<f64> {
        &self.a_left
    }

    pub fn b_right(&self) -> &DMatrix<f64> {
        &self.b_right
    }

    /// Measurement dimension `p`.
    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    /// State dimension `r`.
    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }
}

/// Blockwise `H κ Hᵀ`: the covariance of `H ε` when `ε` has covariance `κ`.
pub fn transform_kernel(k: &CovMatrix, map: &MeasurementMap) -> Result<CovMatrix> {
    if k.block() != map.state_dim() {
        return Err(dim_err(
            format!("block dimension {}", map.state_dim()),
            format!("block dimension {}", k.block()),
        ));
    }
    let left = kron_identity(k.row_times.len(), map.h());
    let right = kron_identity(k.col_times.len(), map.h()).transpose();
    Ok(CovMatrix {
        entries: left * &k.entries * right,
        row_times: k.row_times.clone(),
        col_times: k.col_times.clone(),
    })
}

/// Covariance of the sum of two independent processes on the same grid.
pub fn add_kernels(a: &CovMatrix, b: &CovMatrix) -> Result<CovMatrix> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch);
    }
    Ok(CovMatrix {
        entries: &a.entries + &b.entries,
        row_times: a.row_times.clone(),
        col_times: a.col_times.clone(),
    })
}

/// Recover the state-space kernel `A (κ_e − κ_v) B` from the fitting-error
/// kernel and the known noise kernel. Square grids are projected onto the PSD
/// cone afterwards.
pub fn recover_state_kernel(k_e: &CovMatrix, k_v: &CovMatrix, map: &MeasurementMap) -> Result<CovMatrix> {
    if !k_e.same_grid(k_v) {
        return Err(Error::GridMismatch);
    }
    let diff = CovMatrix {
        entries: &k_e.entries - &k_v.entries,
        row_times: k_e.row_times.clone(),
        col_times: k_e.col_times.clone(),
    };
    lift_to_state(&diff, map)
}

/// Blockwise `A m B` followed by PSD repair on square grids.
pub(crate) fn lift_to_state(m: &CovMatrix, map: &MeasurementMap) -> Result<CovMatrix> {
    if m.block() != map.meas_dim() {
        return Err(dim_err(
            format!("block dimension {}", map.meas_dim()),
            format!("block dimension {}", m.block()),
        ));
    }
    let left = kron_identity(m.row_times.len(), map.a_left());
    let right = kron_identity(m.col_times.len(), map.b_right());
    let lifted = CovMatrix {
        entries: left * &m.entries * right,
        row_times: m.row_times.clone(),
        col_times: m.col_times.clone(),
    };
    if lifted.is_square_grid() {
        psd_repair(&lifted)
    } else {
        Ok(lifted)
    }
}

/// Symmetrize and clip negative eigenvalues to zero. Matrices that are
/// already PSD come back symmetrized but otherwise untouched.
pub fn psd_repair(m: &CovMatrix) -> Result<CovMatrix> {
    if !m.entries.is_square() {
        return Err(dim_err("square matrix", format!("{}x{}", m.entries.nrows(), m.entries.ncols())));
    }
    let sym = (&m.entries + m.entries.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let entries = if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        sym
    } else {
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let v = &eig.eigenvectors;
        let mut rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
        rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
        rebuilt
    };
    Ok(CovMatrix {
        entries,
        row_times: m.row_times.clone(),
        col_times: m.col_times.clone(),
    })
}
