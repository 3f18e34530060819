use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wpca_core::smoother::{build_basis, fit_penalized, select_lambda, PenalizedSmoother, SplineBasis};

/// Uniform cubic B-spline pieces on the segment containing `u` in [0, 1).
fn uniform_cubic(u: f64) -> [f64; 4] {
    [
        (1.0 - u).powi(3) / 6.0,
        (3.0 * u.powi(3) - 6.0 * u * u + 4.0) / 6.0,
        (-3.0 * u.powi(3) + 3.0 * u * u + 3.0 * u + 1.0) / 6.0,
        u.powi(3) / 6.0,
    ]
}

fn closed_form_design(n: usize, k: usize) -> DMatrix<f64> {
    let h = (n as f64 - 1.0) / (k - 3) as f64;
    let mut b = DMatrix::zeros(n, k);
    for i in 0..n {
        let s = (i as f64) / h;
        let seg = (s.floor() as usize).min(k - 4);
        let u = s - seg as f64;
        for (off, v) in uniform_cubic(u).into_iter().enumerate() {
            b[(i, seg + off)] = v;
        }
    }
    b
}

/// Hat matrix from an explicit LU solve of the penalized normal equations.
fn oracle_hat(basis: &SplineBasis, lambda: f64) -> DMatrix<f64> {
    let b = &basis.design;
    let a = b.transpose() * b + &basis.penalty * lambda;
    let inv = a.lu().try_inverse().expect("penalized system invertible");
    b * inv * b.transpose()
}

fn oracle_gcv(y: &DVector<f64>, basis: &SplineBasis, lambda: f64) -> (f64, f64) {
    let n = y.len() as f64;
    let hat = oracle_hat(basis, lambda);
    let rss = (y - &hat * y).norm_squared();
    let edf = hat.trace();
    (n * rss / (n - edf).powi(2), rss)
}

fn noisy_sine(n: usize, sd: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    DVector::from_fn(n, |i, _| (i as f64 / 9.0).sin() + noise.sample(&mut rng))
}

#[test]
fn design_matches_closed_form_uniform_splines() {
    for (n, k) in [(20, 4), (50, 10), (97, 13)] {
        let basis = build_basis(n, k).unwrap();
        let oracle = closed_form_design(n, k);
        assert!((&basis.design - &oracle).amax() < 1e-12, "n={n} k={k}");
        for row in basis.design.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn fits_match_explicit_normal_equations() {
    let y = noisy_sine(60, 0.2, 1);
    let basis = build_basis(60, 12).unwrap();
    for lambda in [1e-4, 0.1, 10.0, 1e4] {
        let fit = fit_penalized(&y, &basis, lambda).unwrap();
        let hat = oracle_hat(&basis, lambda);
        assert!((&fit.fitted - &hat * &y).amax() < 1e-9, "lambda {lambda}");
        assert!((fit.edf - hat.trace()).abs() < 1e-9);
    }
}

#[test]
fn gcv_choice_matches_dense_grid_search() {
    for seed in 0..5 {
        let n = 80;
        let y = noisy_sine(n, 0.3, seed);
        let basis = build_basis(n, 10).unwrap();
        let (lo, hi) = PenalizedSmoother::new(&basis).unwrap().lambda_range();
        let (best_score, best_rss) = (0..2000)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / 1999.0))
            .map(|l| oracle_gcv(&y, &basis, l))
            .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc });
        let (lambda, fit) = select_lambda(&y, &basis).unwrap();
        let (score, rss) = oracle_gcv(&y, &basis, lambda);
        assert!(score <= best_score * (1.0 + 1e-6), "seed {seed}: {score} vs grid {best_score}");
        assert!((rss - best_rss).abs() <= 0.1 * best_rss, "seed {seed}: rss {rss} vs {best_rss}");
        assert!((fit.criterion_value - score).abs() < 1e-9 * score);
    }
}

#[test]
fn large_lambda_approaches_linear_fit() {
    let y = noisy_sine(40, 0.5, 3);
    let basis = build_basis(40, 10).unwrap();
    let fit = fit_penalized(&y, &basis, 1e12).unwrap();
    assert!((fit.edf - 2.0).abs() < 1e-3);
    let x = DMatrix::from_fn(40, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
    let ols = &x * (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
    assert!((&fit.fitted - ols).amax() < 1e-4);
}
