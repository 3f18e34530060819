//! Reference implementations used as oracles. Nothing here calls into the
//! decomposition or eigen routines of the library under test.

#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use wpca_core::data::{center_columns, CenteredMatrix, TimeSeriesMatrix};

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues in
/// descending order with matching eigenvector columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (a[(i, j)] + a[(j, i)])).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r][order[c]]);
    (values, vectors)
}

/// `Q f(Lambda) Q^T` for a symmetric matrix.
pub fn spectral_fn(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, q) = jacobi_eigen(a);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&l| f(l))));
    &q * d * q.transpose()
}

pub fn oracle_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_fn(a, |l| l.max(0.0).sqrt())
}

pub fn oracle_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_fn(a, |l| 1.0 / l)
}

pub fn oracle_toeplitz(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let mut v = 1.0;
        for _ in 0..i.abs_diff(j) {
            v *= rho;
        }
        v
    })
}

/// PCA by eigendecomposition of the weighted cross-product matrix.
pub struct OraclePca {
    pub sigma: Vec<f64>,
    pub fractions: Vec<f64>,
    pub scores: DMatrix<f64>,
    pub loadings: DMatrix<f64>,
}

/// `x` is the oriented, centred matrix; `row` and `col` are optional
/// symmetric weights applied as `row * x * col`.
pub fn oracle_pca(x: &DMatrix<f64>, row: Option<&DMatrix<f64>>, col: Option<&DMatrix<f64>>) -> OraclePca {
    let mut xt = x.clone();
    if let Some(phi) = row {
        xt = phi * xt;
    }
    if let Some(om) = col {
        xt = xt * om;
    }
    let r = xt.nrows().min(xt.ncols());
    let cross = xt.transpose() * &xt;
    let (vals, vecs) = jacobi_eigen(&cross);
    let vals: Vec<f64> = vals.iter().take(r).map(|l| l.max(0.0)).collect();
    let total: f64 = vals.iter().sum();
    let v = vecs.columns(0, r).into_owned();
    let scores = &xt * &v;
    let loadings = match col {
        Some(om) => oracle_inverse(om).transpose() * &v,
        None => v,
    };
    OraclePca {
        sigma: vals.iter().map(|l| l.sqrt()).collect(),
        fractions: vals.iter().map(|l| l / total).collect(),
        scores,
        loadings,
    }
}

/// Largest discrepancy between two decompositions, treating each component
/// as defined up to sign. Components whose squared singular values coincide
/// are compared through the projector onto their joint span; components with
/// zero singular value have arbitrary directions, so only their scores (which
/// vanish) are compared.
pub fn component_discrepancy(
    sigma: &[f64],
    scores_a: &DMatrix<f64>,
    load_a: &DMatrix<f64>,
    scores_b: &DMatrix<f64>,
    load_b: &DMatrix<f64>,
) -> f64 {
    let r = sigma.len();
    let top = sigma.iter().fold(0.0f64, |m, s| m.max(*s));
    let zero = |s: f64| s <= 1e-6 * top.max(1e-300);
    let mut worst = 0.0f64;
    let mut start = 0;
    while start < r {
        let mut end = start + 1;
        while end < r && (sigma[end] - sigma[start]).abs() <= 1e-6 * top {
            end += 1;
        }
        if zero(sigma[start]) {
            for j in start..r {
                worst = worst.max(scores_a.column(j).amax()).max(scores_b.column(j).amax());
            }
            break;
        }
        if end - start == 1 {
            let j = start;
            let s = if scores_a.column(j).dot(&scores_b.column(j)) + load_a.column(j).dot(&load_b.column(j)) < 0.0 {
                -1.0
            } else {
                1.0
            };
            worst = worst.max((scores_a.column(j) - scores_b.column(j) * s).amax());
            worst = worst.max((load_a.column(j) - load_b.column(j) * s).amax());
        } else {
            let k = end - start;
            let proj = |m: &DMatrix<f64>| {
                let c = m.columns(start, k);
                &c * c.transpose()
            };
            worst = worst.max((proj(scores_a) - proj(scores_b)).amax());
            worst = worst.max((proj(load_a) - proj(load_b)).amax());
        }
        start = end;
    }
    worst
}

pub fn dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
    (0..n).map(|i| start + Days::new(i as u64)).collect()
}

pub fn series(values: DMatrix<f64>) -> TimeSeriesMatrix {
    let labels = (0..values.ncols()).map(|j| format!("s{j}")).collect();
    TimeSeriesMatrix::new(dates(values.nrows()), labels, values, "test").unwrap()
}

pub fn centred(values: DMatrix<f64>) -> CenteredMatrix {
    center_columns(&series(values), false).unwrap()
}

/// Column-centres a raw matrix independently of the library.
pub fn centre(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let m = col.sum() / col.len() as f64;
        col.add_scalar_mut(-m);
    }
    c
}
