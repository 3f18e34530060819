//! Penalized cubic regression splines of the date index, one per stream.
//!
//! Each stream is smoothed independently with an identity link and Gaussian
//! errors. The smoothing parameter is chosen by generalized cross-validation
//! and the residual lag-1 correlation feeds the temporal weight matrix.
//!
//! Fits go through a Demmler-Reinsch reparametrization: with `B = QR` and
//! `R^-T P R^-1 = U diag(d) U^T`, the hat matrix is
//! `Q U diag(1 / (1 + lambda d)) U^T Q^T`, which stays well conditioned for any
//! `lambda` and makes each GCV evaluation O(nk).

use nalgebra::{DMatrix, DVector};

use crate::error::SmoothError;
use crate::par::Exec;

/// Cubic B-spline design over indices `1..=n` plus its second-difference penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    pub n: usize,
    pub k: usize,
    pub design: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
}

/// Default basis dimension for `n` observations.
pub fn default_basis_size(n: usize) -> usize {
    10.min(n.saturating_sub(1)).max(4)
}

/// Builds a cubic B-spline basis with `k` functions on equally spaced knots
/// spanning `1..=n`.
pub fn build_basis(n: usize, k: usize) -> Result<SplineBasis, SmoothError> {
    if n < 4 || k < 4 || k > n {
        return Err(SmoothError::InvalidBasisSize { n, k });
    }
    const DEGREE: usize = 3;
    let (lo, hi) = (1.0, n as f64);
    let h = (hi - lo) / (k - DEGREE) as f64;
    // k + 4 knots, three beyond each end of the data range
    let knots: Vec<f64> = (0..k + DEGREE + 1)
        .map(|j| lo + (j as f64 - DEGREE as f64) * h)
        .collect();
    let mut design = DMatrix::zeros(n, k);
    for i in 0..n {
        let row = bspline_row(&knots, (i + 1) as f64, k, DEGREE);
        for (j, v) in row.into_iter().enumerate() {
            design[(i, j)] = v;
        }
    }
    let mut d2 = DMatrix::zeros(k - 2, k);
    for r in 0..k - 2 {
        d2[(r, r)] = 1.0;
        d2[(r, r + 1)] = -2.0;
        d2[(r, r + 2)] = 1.0;
    }
    let penalty = d2.transpose() * &d2;
    Ok(SplineBasis { n, k, design, penalty })
}

/// Cox-de Boor evaluation of all `k` B-splines of the given degree at `x`.
fn bspline_row(knots: &[f64], x: f64, k: usize, degree: usize) -> Vec<f64> {
    let m = knots.len() - 1;
    // Extended knots keep the data range strictly inside the outer intervals,
    // so half-open indicators need no special case at the upper bound.
    let mut b: Vec<f64> = (0..m)
        .map(|j| if knots[j] <= x && x < knots[j + 1] { 1.0 } else { 0.0 })
        .collect();
    for d in 1..=degree {
        let next: Vec<f64> = (0..m - d)
            .map(|j| {
                let mut v = 0.0;
                let left = knots[j + d] - knots[j];
                if left > 0.0 {
                    v += (x - knots[j]) / left * b[j];
                }
                let right = knots[j + d + 1] - knots[j + 1];
                if right > 0.0 {
                    v += (knots[j + d + 1] - x) / right * b[j + 1];
                }
                v
            })
            .collect();
        b = next;
    }
    b.truncate(k);
    b
}

/// A penalized least-squares fit for one smoothing parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFit {
    pub coefficients: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub lambda: f64,
    /// Trace of the hat matrix.
    pub edf: f64,
    /// GCV score at `lambda`.
    pub criterion_value: f64,
}

/// Criterion minimized over the smoothing parameter.
pub trait SmoothingCriterion: Sync {
    fn score(&self, n: usize, rss: f64, edf: f64) -> f64;
}

/// Generalized cross-validation, `n * RSS / (n - edf)^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gcv;

impl SmoothingCriterion for Gcv {
    fn score(&self, n: usize, rss: f64, edf: f64) -> f64 {
        let denom = n as f64 - edf;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        n as f64 * rss / (denom * denom)
    }
}

/// Precomputed spectral form of a basis, reusable across responses and lambdas.
#[derive(Debug, Clone)]
pub struct PenalizedSmoother {
    basis: SplineBasis,
    /// `Q U`: n x k, orthonormal columns.
    rotated: DMatrix<f64>,
    /// `R^-1 U`: maps rotated coefficients back to spline coefficients.
    back: DMatrix<f64>,
    /// Penalty eigenvalues in the rotated frame, tiny ones clamped to 0.
    eigenvalues: Vec<f64>,
}

impl PenalizedSmoother {
    /// Fails with `SingularSystem` when the design is rank deficient.
    pub fn new(basis: &SplineBasis) -> Result<Self, SmoothError> {
        let qr = basis.design.clone().qr();
        let r = qr.r();
        let q = qr.q();
        let diag_max = r.diagonal().amax();
        if diag_max == 0.0 || r.diagonal().iter().any(|v| v.abs() <= 1e-12 * diag_max) {
            return Err(SmoothError::SingularSystem);
        }
        let r_inv = r.clone().try_inverse().ok_or(SmoothError::SingularSystem)?;
        let m = r_inv.transpose() * &basis.penalty * &r_inv;
        let m = 0.5 * (&m + m.transpose());
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..basis.k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let dmax = eig.eigenvalues.amax();
        let eigenvalues: Vec<f64> = order
            .iter()
            .map(|&i| {
                let v = eig.eigenvalues[i];
                if v <= 1e-10 * dmax {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let u = DMatrix::from_fn(basis.k, basis.k, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(Self {
            basis: basis.clone(),
            rotated: q * &u,
            back: r_inv * u,
            eigenvalues,
        })
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    fn shrinkage(&self, lambda: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|d| 1.0 / (1.0 + lambda * d)).collect()
    }

    /// Effective degrees of freedom at `lambda`.
    pub fn edf(&self, lambda: f64) -> f64 {
        self.shrinkage(lambda).iter().sum()
    }

    /// Diagonal of the hat matrix.
    pub fn leverages(&self, lambda: f64) -> Vec<f64> {
        let s = self.shrinkage(lambda);
        self.rotated
            .row_iter()
            .map(|row| row.iter().zip(&s).map(|(q, s)| q * q * s).sum())
            .collect()
    }

    /// Fits `y` at a fixed smoothing parameter.
    pub fn fit(&self, y: &DVector<f64>, lambda: f64, criterion: &dyn SmoothingCriterion) -> Result<SmoothFit, SmoothError> {
        self.check(y)?;
        if lambda.is_nan() || lambda < 0.0 {
            return Err(SmoothError::NegativeLambda(lambda));
        }
        let c = self.rotated.tr_mul(y);
        Ok(self.fit_rotated(y, &c, lambda, criterion))
    }

    fn check(&self, y: &DVector<f64>) -> Result<(), SmoothError> {
        if y.len() != self.basis.n {
            return Err(SmoothError::LengthMismatch {
                expected: self.basis.n,
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SmoothError::NonFinite);
        }
        Ok(())
    }

    fn fit_rotated(&self, y: &DVector<f64>, c: &DVector<f64>, lambda: f64, criterion: &dyn SmoothingCriterion) -> SmoothFit {
        let s = self.shrinkage(lambda);
        let shrunk = DVector::from_iterator(c.len(), c.iter().zip(&s).map(|(c, s)| c * s));
        let fitted = &self.rotated * &shrunk;
        let residuals = y - &fitted;
        let edf: f64 = s.iter().sum();
        let rss = residuals.norm_squared();
        SmoothFit {
            coefficients: &self.back * shrunk,
            fitted,
            residuals,
            lambda,
            edf,
            criterion_value: criterion.score(self.basis.n, rss, edf),
        }
    }

    /// Criterion value at `lambda` without materializing the fit.
    fn score(&self, y_perp_ss: f64, c: &DVector<f64>, lambda: f64, criterion: &dyn SmoothingCriterion) -> f64 {
        let s = self.shrinkage(lambda);
        let rss = y_perp_ss
            + c.iter()
                .zip(&s)
                .map(|(c, s)| {
                    let r = (1.0 - s) * c;
                    r * r
                })
                .sum::<f64>();
        criterion.score(self.basis.n, rss, s.iter().sum())
    }

    /// Minimizes `criterion` over a log-spaced grid, then refines the best
    /// bracket by golden-section search on `log10(lambda)`.
    pub fn select(&self, y: &DVector<f64>, criterion: &dyn SmoothingCriterion) -> Result<SmoothFit, SmoothError> {
        self.check(y)?;
        let c = self.rotated.tr_mul(y);
        let y_perp_ss = (y - &self.rotated * &c).norm_squared();
        let (lo, hi) = self.lambda_range();
        let grid: Vec<f64> = (0..GRID_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
            .collect();
        let f = |log_lambda: f64| self.score(y_perp_ss, &c, 10f64.powf(log_lambda), criterion);
        let scores: Vec<f64> = grid.iter().map(|&g| f(g)).collect();
        let best = scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(GRID_POINTS - 1)];
        let refined = golden_section(&f, a, b, 1e-7);
        let log_lambda = if f(refined) <= scores[best] { refined } else { grid[best] };
        Ok(self.fit_rotated(y, &c, 10f64.powf(log_lambda), criterion))
    }

    /// `log10` bounds of the search: from nearly interpolating (edf near k)
    /// to nearly linear (edf near 2).
    pub fn lambda_range(&self) -> (f64, f64) {
        let positive: Vec<f64> = self.eigenvalues.iter().copied().filter(|d| *d > 0.0).collect();
        if positive.is_empty() {
            return (0.0, 0.0);
        }
        let dmin = positive.iter().copied().fold(f64::INFINITY, f64::min);
        let dmax = positive.iter().copied().fold(0.0, f64::max);
        ((1e-4 / dmax).log10(), (1e4 / dmin).log10())
    }
}

const GRID_POINTS: usize = 60;

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Penalized least squares `argmin |y - B beta|^2 + lambda beta^T P beta`.
pub fn fit_penalized(y: &DVector<f64>, basis: &SplineBasis, lambda: f64) -> Result<SmoothFit, SmoothError> {
    match PenalizedSmoother::new(basis) {
        Ok(s) => s.fit(y, lambda, &Gcv),
        Err(SmoothError::SingularSystem) if lambda > 0.0 => fit_direct(y, basis, lambda),
        Err(e) => Err(e),
    }
}

/// Solves the penalized normal equations by Cholesky. Handles rank-deficient
/// designs for `lambda > 0`.
pub fn fit_direct(y: &DVector<f64>, basis: &SplineBasis, lambda: f64) -> Result<SmoothFit, SmoothError> {
    if y.len() != basis.n {
        return Err(SmoothError::LengthMismatch {
            expected: basis.n,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SmoothError::NonFinite);
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(SmoothError::NegativeLambda(lambda));
    }
    let btb = basis.design.tr_mul(&basis.design);
    let a = &btb + &basis.penalty * lambda;
    let chol = a.cholesky().ok_or(SmoothError::SingularSystem)?;
    let coefficients = chol.solve(&basis.design.tr_mul(y));
    let fitted = &basis.design * &coefficients;
    let residuals = y - &fitted;
    let edf = chol.solve(&btb).trace();
    let rss = residuals.norm_squared();
    Ok(SmoothFit {
        coefficients,
        fitted,
        residuals,
        lambda,
        edf,
        criterion_value: Gcv.score(basis.n, rss, edf),
    })
}

/// Chooses lambda by GCV and returns it with the corresponding fit.
pub fn select_lambda(y: &DVector<f64>, basis: &SplineBasis) -> Result<(f64, SmoothFit), SmoothError> {
    select_lambda_with(y, basis, &Gcv)
}

pub fn select_lambda_with(
    y: &DVector<f64>,
    basis: &SplineBasis,
    criterion: &dyn SmoothingCriterion,
) -> Result<(f64, SmoothFit), SmoothError> {
    let fit = PenalizedSmoother::new(basis)?.select(y, criterion)?;
    Ok((fit.lambda, fit))
}

/// Pearson correlation between `r[..n-1]` and `r[1..]`.
pub fn lag1_correlation(residuals: &[f64]) -> Result<f64, SmoothError> {
    let n = residuals.len();
    if n < 3 {
        return Err(SmoothError::TooShort(n));
    }
    let mean_square = residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
    let (a, b) = (&residuals[..n - 1], &residuals[1..]);
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
    };
    let floor = 1e-14 * mean_square;
    if mean_square == 0.0 || var(a) <= floor || var(b) <= floor {
        return Err(SmoothError::DegenerateResiduals);
    }
    crate::stats::pearson(a, b).ok_or(SmoothError::DegenerateResiduals)
}

/// Smooths every column of `values` with a shared basis of size `k`.
pub fn smooth_columns(values: &DMatrix<f64>, k: usize, exec: Exec) -> Result<Vec<Result<SmoothFit, SmoothError>>, SmoothError> {
    let basis = build_basis(values.nrows(), k)?;
    let smoother = PenalizedSmoother::new(&basis)?;
    Ok(exec.map_range(values.ncols(), |j| {
        let y = values.column(j).into_owned();
        smoother.select(&y, &Gcv)
    }))
}
