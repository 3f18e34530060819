//! Temporally weighted S-mode and T-mode principal component analysis for
//! multivariate surveillance time series.
//!
//! The workflow smooths each stream with a penalized spline, takes the median
//! lag-1 residual correlation as a global `rho`, whitens the time axis with
//! the square root of the AR(1) Toeplitz matrix `rho^|i-j|`, and decomposes the
//! weighted matrix by SVD. Scores can then be compared against external
//! indicators and T-mode runs screened for deviant streams.

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod format;
pub mod par;
pub mod pca;
pub mod pipeline;
pub mod plot;
pub mod smoother;
pub mod stats;
pub mod synth;
pub mod weighting;

pub use error::{Error, FailureKind, Result};
pub use par::Exec;
