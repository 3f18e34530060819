//! AR(1)-style temporal weight: global correlation, Toeplitz matrix and its
//! principal square root.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::WeightError;

/// Largest magnitude allowed for the global correlation; keeps `T` invertible.
pub const RHO_CLAMP: f64 = 0.999;

/// Global temporal correlation `rho` with the matrices derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWeight {
    pub rho: f64,
    pub n: usize,
    /// `T[i][j] = rho^|i-j|`.
    pub toeplitz: DMatrix<f64>,
    /// Symmetric positive-definite square root of `toeplitz`.
    pub omega: DMatrix<f64>,
    pub omega_inv: DMatrix<f64>,
}

impl TemporalWeight {
    /// `rho == 0` returns exact identities without any decomposition.
    pub fn new(n: usize, rho: f64) -> Result<Self, WeightError> {
        let toeplitz = toeplitz_t(n, rho)?;
        if rho == 0.0 {
            let eye = DMatrix::identity(n, n);
            return Ok(Self {
                rho,
                n,
                toeplitz,
                omega: eye.clone(),
                omega_inv: eye,
            });
        }
        let eig = SymmetricEigen::new(toeplitz.clone());
        let omega = sqrt_from_eigen(&eig, &toeplitz)?;
        let omega_inv = inverse_from_eigen(&eig, 0.5)?;
        Ok(Self {
            rho,
            n,
            toeplitz,
            omega,
            omega_inv,
        })
    }

    /// Extreme eigenvalues of `omega`, smallest first.
    pub fn omega_eigen_range(&self) -> (f64, f64) {
        let ev = SymmetricEigen::new(self.omega.clone()).eigenvalues;
        (ev.min(), ev.max())
    }
}

/// Median of per-stream correlations, clamped to `[-RHO_CLAMP, RHO_CLAMP]`.
pub fn median_rho(per_stream: &[f64]) -> Result<f64, WeightError> {
    if per_stream.is_empty() {
        return Err(WeightError::EmptyInput);
    }
    if let Some(bad) = per_stream.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
        return Err(WeightError::OutOfRange(*bad));
    }
    Ok(crate::stats::median(per_stream).clamp(-RHO_CLAMP, RHO_CLAMP))
}

/// Kac-Murdock-Szego matrix `rho^|i-j|`.
pub fn toeplitz_t(n: usize, rho: f64) -> Result<DMatrix<f64>, WeightError> {
    if !(rho.abs() < 1.0) {
        return Err(WeightError::InvalidRho(rho));
    }
    let powers: Vec<f64> = (0..n as i32).map(|d| rho.powi(d)).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| powers[i.abs_diff(j)]))
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), WeightError> {
    if !m.is_square() {
        return Err(WeightError::NotSymmetric);
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(WeightError::NotSymmetric);
            }
        }
    }
    Ok(())
}

fn diagonal_only(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Principal square root `Q diag(sqrt(l)) Q^T`. Eigenvalues slightly below
/// zero from rounding are clamped; anything below `-1e-10 * max` is rejected.
pub fn sqrt_psd(t: &DMatrix<f64>) -> Result<DMatrix<f64>, WeightError> {
    check_symmetric(t)?;
    if diagonal_only(t) {
        let mut out = DMatrix::zeros(t.nrows(), t.ncols());
        for i in 0..t.nrows() {
            let v = t[(i, i)];
            if v < 0.0 {
                return Err(WeightError::NotPsd(v));
            }
            out[(i, i)] = v.sqrt();
        }
        return Ok(out);
    }
    sqrt_from_eigen(&SymmetricEigen::new(t.clone()), t)
}

fn sqrt_from_eigen(eig: &SymmetricEigen<f64, nalgebra::Dyn>, t: &DMatrix<f64>) -> Result<DMatrix<f64>, WeightError> {
    let max = eig.eigenvalues.max().max(0.0);
    let floor = -1e-10 * max;
    if let Some(bad) = eig.eigenvalues.iter().find(|l| **l < floor) {
        return Err(WeightError::NotPsd(*bad));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let root = compose(&eig.eigenvectors, &roots);
    debug_assert_eq!(root.shape(), t.shape());
    Ok(root)
}

/// `Q diag(w) Q^T`, symmetrized.
fn compose(q: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = q.clone();
    for (mut col, wi) in scaled.column_iter_mut().zip(w.iter()) {
        col *= *wi;
    }
    let m = scaled * q.transpose();
    0.5 * (&m + m.transpose())
}

/// Inverse of a symmetric positive-definite matrix via its eigendecomposition.
pub fn inverse_psd(omega: &DMatrix<f64>) -> Result<DMatrix<f64>, WeightError> {
    check_symmetric(omega)?;
    if diagonal_only(omega) {
        let mut out = DMatrix::zeros(omega.nrows(), omega.ncols());
        for i in 0..omega.nrows() {
            let v = omega[(i, i)];
            if v <= 0.0 {
                return Err(WeightError::SingularMatrix);
            }
            out[(i, i)] = 1.0 / v;
        }
        return Ok(out);
    }
    inverse_from_eigen(&SymmetricEigen::new(omega.clone()), 1.0)
}

/// Inverse of `M^power` where `eig` decomposes `M`.
fn inverse_from_eigen(eig: &SymmetricEigen<f64, nalgebra::Dyn>, power: f64) -> Result<DMatrix<f64>, WeightError> {
    let max = eig.eigenvalues.max();
    if !(max > 0.0) || eig.eigenvalues.iter().any(|l| *l <= 1e-14 * max) {
        return Err(WeightError::SingularMatrix);
    }
    let inv = eig.eigenvalues.map(|l| l.powf(-power));
    Ok(compose(&eig.eigenvectors, &inv))
}
