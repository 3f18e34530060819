//! SVD-based principal components with optional row/column weighting.
//!
//! The decomposed matrix is `X~ = Phi M Omega` where `M` is the centred data
//! in the requested orientation: `n x p` (time by stream) in S-mode, or its
//! transpose in T-mode. With `X~ = U D V^T`, scores are `X~ V` and loadings are
//! `Omega^-T V`. The temporal weight is attached to whichever axis of `M`
//! carries time, see [`WeightConfig::temporal`].

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{CenteredMatrix, DATE_FORMAT};
use crate::error::PcaError;

/// Orientation of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Rows are dates, columns are streams; components are shared temporal trends.
    S,
    /// Rows are streams, columns are dates; components contrast streams.
    T,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::S => "S",
            Mode::T => "T",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeAxis {
    Rows,
    Columns,
}

impl Mode {
    /// Axis of the decomposed matrix that indexes dates.
    pub fn time_axis(self) -> TimeAxis {
        match self {
            Mode::S => TimeAxis::Rows,
            Mode::T => TimeAxis::Columns,
        }
    }
}

/// Row and column weights for the decomposed (oriented) matrix. `None` means
/// identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightConfig {
    pub row_weight: Option<DMatrix<f64>>,
    pub column_weight: Option<DMatrix<f64>>,
}

impl WeightConfig {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Places a temporal weight on the time axis for `mode`: as the row
    /// weight in S-mode and as the column weight in T-mode.
    pub fn temporal(omega: DMatrix<f64>, mode: Mode) -> Self {
        match mode.time_axis() {
            TimeAxis::Rows => Self {
                row_weight: Some(omega),
                column_weight: None,
            },
            TimeAxis::Columns => Self {
                row_weight: None,
                column_weight: Some(omega),
            },
        }
    }

    /// Adds a stream (spatial) weight on the axis that does not carry time.
    pub fn with_stream_weight(mut self, phi: DMatrix<f64>, mode: Mode) -> Self {
        match mode.time_axis() {
            TimeAxis::Rows => self.column_weight = Some(phi),
            TimeAxis::Columns => self.row_weight = Some(phi),
        }
        self
    }

    pub fn is_identity(&self) -> bool {
        self.row_weight.is_none() && self.column_weight.is_none()
    }
}

/// Thin singular value decomposition with singular values sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub d: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD, `r = min(n, p)` triplets.
pub fn svd_decompose(x: &DMatrix<f64>) -> Result<Svd, PcaError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PcaError::NonFinite);
    }
    let r = x.nrows().min(x.ncols());
    if r == 0 {
        return Err(PcaError::DimensionMismatch(format!("empty matrix {:?}", x.shape())));
    }
    let a = faer::Mat::<f64>::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)]);
    let svd = a.thin_svd().map_err(|_| PcaError::ConvergenceFailure)?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    Ok(Svd {
        u: DMatrix::from_fn(x.nrows(), r, |i, j| u[(i, order[j])]),
        d: DVector::from_fn(r, |j, _| s[order[j]]),
        v: DMatrix::from_fn(x.ncols(), r, |i, j| v[(i, order[j])]),
    })
}

/// Squared singular values normalized to sum to one.
pub fn variance_explained(singular_values: &[f64]) -> Result<Vec<f64>, PcaError> {
    if singular_values.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(PcaError::NonFinite);
    }
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(PcaError::AllZero);
    }
    Ok(singular_values.iter().map(|s| s * s / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub mode: Mode,
    pub singular_values: Vec<f64>,
    /// `U`, rows of the decomposed matrix by `r`.
    pub left_vectors: DMatrix<f64>,
    /// `V`, columns of the decomposed matrix by `r`.
    pub right_vectors: DMatrix<f64>,
    /// `X~ V`; one row per date in S-mode, per stream in T-mode.
    pub scores: DMatrix<f64>,
    /// `Omega^-T V`; one row per stream in S-mode, per date in T-mode.
    pub loadings: DMatrix<f64>,
    pub variance_fraction: Vec<f64>,
    pub stream_labels: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// The weighted matrix that was decomposed.
    pub transformed: DMatrix<f64>,
}

impl PcaResult {
    pub fn n_components(&self) -> usize {
        self.singular_values.len()
    }

    fn date_labels(&self) -> Vec<String> {
        self.dates.iter().map(|d| d.format(DATE_FORMAT).to_string()).collect()
    }

    /// Labels for rows of `scores`.
    pub fn score_labels(&self) -> Vec<String> {
        match self.mode {
            Mode::S => self.date_labels(),
            Mode::T => self.stream_labels.clone(),
        }
    }

    /// Labels for rows of `loadings`.
    pub fn loading_labels(&self) -> Vec<String> {
        match self.mode {
            Mode::S => self.stream_labels.clone(),
            Mode::T => self.date_labels(),
        }
    }

    /// Index and value of the largest-magnitude loading of `component`.
    pub fn dominant_loading(&self, component: usize) -> Option<(usize, f64)> {
        if component >= self.n_components() {
            return None;
        }
        let col = self.loadings.column(component);
        argmax_abs(col.as_slice()).map(|i| (i, col[i]))
    }

    pub fn score_column(&self, component: usize) -> Result<Vec<f64>, PcaError> {
        if component >= self.n_components() {
            return Err(PcaError::NoSuchComponent {
                component,
                available: self.n_components(),
            });
        }
        Ok(self.scores.column(component).iter().copied().collect())
    }
}

/// First index of the largest absolute value.
fn argmax_abs(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in xs.iter().enumerate() {
        if best.is_none_or(|b| x.abs() > xs[b].abs()) {
            best = Some(i);
        }
    }
    best
}

fn check_weight(w: &DMatrix<f64>, dim: usize, what: &str) -> Result<(), PcaError> {
    if w.shape() != (dim, dim) {
        return Err(PcaError::DimensionMismatch(format!(
            "{what} weight is {:?}, expected {dim}x{dim}",
            w.shape()
        )));
    }
    Ok(())
}

/// The matrix decomposed for `mode` before weighting. In T-mode the data are
/// transposed and each date's column is centred across streams.
pub fn oriented(x: &CenteredMatrix, mode: Mode) -> DMatrix<f64> {
    match mode {
        Mode::S => x.values().clone(),
        Mode::T => {
            let mut m = x.values().transpose();
            for mut col in m.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
            m
        }
    }
}

/// Weighted PCA of a centred matrix in the requested orientation.
pub fn weighted_pca(x: &CenteredMatrix, w: &WeightConfig, mode: Mode) -> Result<PcaResult, PcaError> {
    let m = oriented(x, mode);
    let (rows, cols) = m.shape();
    if let Some(phi) = &w.row_weight {
        check_weight(phi, rows, "row")?;
    }
    if let Some(omega) = &w.column_weight {
        check_weight(omega, cols, "column")?;
    }
    let mut transformed = match &w.row_weight {
        Some(phi) => phi * &m,
        None => m,
    };
    if let Some(omega) = &w.column_weight {
        transformed = &transformed * omega;
    }
    let svd = svd_decompose(&transformed)?;
    let singular_values: Vec<f64> = svd.d.iter().copied().collect();
    let variance_fraction = variance_explained(&singular_values)?;
    let scores = &transformed * &svd.v;
    let loadings = match &w.column_weight {
        Some(omega) => {
            let inv_t = omega
                .clone()
                .try_inverse()
                .ok_or_else(|| PcaError::DimensionMismatch("column weight is singular".into()))?
                .transpose();
            inv_t * &svd.v
        }
        None => svd.v.clone(),
    };
    Ok(PcaResult {
        mode,
        singular_values,
        left_vectors: svd.u,
        right_vectors: svd.v,
        scores,
        loadings,
        variance_fraction,
        stream_labels: x.base.labels().to_vec(),
        dates: x.base.dates().to_vec(),
        transformed,
    })
}

/// Unweighted PCA, identical to [`weighted_pca`] with identity weights.
pub fn classic_pca(x: &CenteredMatrix, mode: Mode) -> Result<PcaResult, PcaError> {
    weighted_pca(x, &WeightConfig::identity(), mode)
}

/// Flips each component so its largest-magnitude loading is positive.
pub fn align_sign(mut result: PcaResult) -> PcaResult {
    for j in 0..result.n_components() {
        let flip = result.dominant_loading(j).is_some_and(|(_, v)| v < 0.0);
        if flip {
            result.loadings.column_mut(j).neg_mut();
            result.scores.column_mut(j).neg_mut();
            result.left_vectors.column_mut(j).neg_mut();
            result.right_vectors.column_mut(j).neg_mut();
        }
    }
    result
}

/// Rank-`k` approximation of the decomposed matrix.
pub fn reconstruct(result: &PcaResult, k: usize) -> Result<DMatrix<f64>, PcaError> {
    let r = result.n_components();
    if k == 0 || k > r {
        return Err(PcaError::RankOutOfBounds { k, r });
    }
    let mut us = result.left_vectors.columns(0, k).into_owned();
    for (j, mut col) in us.column_iter_mut().enumerate() {
        col *= result.singular_values[j];
    }
    Ok(us * result.right_vectors.columns(0, k).transpose())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiplotArrow {
    pub label: String,
    pub pc1: f64,
    pub pc2: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiplotPoint {
    pub label: String,
    pub pc1: f64,
    pub pc2: f64,
}

/// Loading arrows and score points on the first two components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiplotTable {
    pub arrows: Vec<BiplotArrow>,
    pub points: Vec<BiplotPoint>,
}

impl BiplotTable {
    /// The arrow with the greatest length.
    pub fn dominant_arrow(&self) -> Option<&BiplotArrow> {
        self.arrows
            .iter()
            .fold(None, |best: Option<&BiplotArrow>, a| match best {
                Some(b) if b.length >= a.length => Some(b),
                _ => Some(a),
            })
    }
}

pub fn biplot_data(result: &PcaResult) -> Result<BiplotTable, PcaError> {
    if result.n_components() < 2 {
        return Err(PcaError::TooFewComponents(result.n_components()));
    }
    let arrows = result
        .loading_labels()
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let (pc1, pc2) = (result.loadings[(i, 0)], result.loadings[(i, 1)]);
            BiplotArrow {
                label,
                pc1,
                pc2,
                length: (pc1 * pc1 + pc2 * pc2).sqrt(),
            }
        })
        .collect();
    let points = result
        .score_labels()
        .into_iter()
        .enumerate()
        .map(|(i, label)| BiplotPoint {
            label,
            pc1: result.scores[(i, 0)],
            pc2: result.scores[(i, 1)],
        })
        .collect();
    Ok(BiplotTable { arrows, points })
}
