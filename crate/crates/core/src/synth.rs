//! Seeded synthetic streams: linear mixtures of latent trends plus AR(1) noise.

use std::path::Path;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::data::TimeSeriesMatrix;
use crate::error::{ConfigError, Error, Result};

/// A latent temporal pattern evaluated at `t = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Trend {
    Sine { period: f64 },
    Cosine { period: f64 },
    /// Rises from -1 to 1 across the series.
    Linear,
    /// Gaussian bump at `center` with `width`, both as fractions of the series length.
    Bump { center: f64, width: f64 },
}

impl Trend {
    pub fn eval(&self, t: usize, n: usize) -> f64 {
        let t = t as f64;
        let span = (n.max(2) - 1) as f64;
        match *self {
            Trend::Sine { period } => (std::f64::consts::TAU * t / period).sin(),
            Trend::Cosine { period } => (std::f64::consts::TAU * t / period).cos(),
            Trend::Linear => 2.0 * t / span - 1.0,
            Trend::Bump { center, width } => {
                let z = (t / span - center) / width;
                (-0.5 * z * z).exp()
            }
        }
    }
}

impl FromStr for Trend {
    type Err = ConfigError;

    /// `sine:<period>`, `cosine:<period>`, `linear`, `bump:<center>:<width>`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> std::result::Result<f64, ConfigError> {
            parts
                .get(i)
                .and_then(|p| p.parse::<f64>().ok())
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| ConfigError::InvalidParams(format!("bad trend spec `{s}`")))
        };
        match parts[0] {
            "sine" if parts.len() == 2 => Ok(Trend::Sine { period: num(1)? }),
            "cosine" if parts.len() == 2 => Ok(Trend::Cosine { period: num(1)? }),
            "linear" if parts.len() == 1 => Ok(Trend::Linear),
            "bump" if parts.len() == 3 => Ok(Trend::Bump {
                center: num(1)?,
                width: num(2)?,
            }),
            _ => Err(ConfigError::InvalidParams(format!("bad trend spec `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub trends: Vec<Trend>,
    /// `p x L` mixing weights, one row per stream. Drawn from N(0, 1) when absent.
    pub mixing: Option<Vec<Vec<f64>>>,
    /// AR(1) coefficient of the noise.
    pub rho: f64,
    /// Stationary standard deviation of the noise.
    pub noise_sd: f64,
    pub start: NaiveDate,
}

impl SynthConfig {
    pub fn new(seed: u64, n: usize, p: usize, trends: Vec<Trend>) -> Self {
        Self {
            seed,
            n,
            p,
            trends,
            mixing: None,
            rho: 0.0,
            noise_sd: 0.0,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
        }
    }

    fn check(&self) -> std::result::Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::InvalidParams(m));
        if self.n < 10 {
            return bad(format!("n = {} < 10", self.n));
        }
        if self.p < 2 {
            return bad(format!("p = {} < 2", self.p));
        }
        if !(self.rho.abs() < 1.0) {
            return bad(format!("|rho| must be < 1, got {}", self.rho));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise sd must be >= 0, got {}", self.noise_sd));
        }
        if self.trends.is_empty() {
            return bad("at least one latent trend is required".into());
        }
        if let Some(m) = &self.mixing {
            if m.len() != self.p || m.iter().any(|row| row.len() != self.trends.len()) {
                return bad(format!("mixing must be {} x {}", self.p, self.trends.len()));
            }
        }
        Ok(())
    }
}

/// Generated data plus the ground truth used to build it.
#[derive(Debug, Clone, Serialize)]
pub struct SynthData {
    #[serde(skip)]
    pub matrix: TimeSeriesMatrix,
    pub config: SynthConfig,
    /// `p x L`.
    pub mixing: Vec<Vec<f64>>,
    /// `L` latent series of length `n`.
    pub latent: Vec<Vec<f64>>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let l = cfg.trends.len();
    let mixing = match &cfg.mixing {
        Some(m) => m.clone(),
        None => (0..cfg.p)
            .map(|_| (0..l).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect(),
    };
    let latent: Vec<Vec<f64>> = cfg
        .trends
        .iter()
        .map(|t| (0..cfg.n).map(|i| t.eval(i, cfg.n)).collect())
        .collect();
    let innovation_sd = cfg.noise_sd * (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut values = DMatrix::zeros(cfg.n, cfg.p);
    for j in 0..cfg.p {
        let mut e = 0.0;
        for i in 0..cfg.n {
            let z: f64 = StandardNormal.sample(&mut rng);
            e = if i == 0 { cfg.noise_sd * z } else { cfg.rho * e + innovation_sd * z };
            let signal: f64 = (0..l).map(|k| mixing[j][k] * latent[k][i]).sum();
            values[(i, j)] = signal + e;
        }
    }
    let dates = (0..cfg.n).map(|i| cfg.start + Days::new(i as u64)).collect();
    let labels = (1..=cfg.p).map(|j| format!("stream_{j}")).collect();
    let matrix = TimeSeriesMatrix::new(dates, labels, values, format!("synthetic seed {}", cfg.seed))?;
    Ok(SynthData {
        matrix,
        config: cfg.clone(),
        mixing,
        latent,
    })
}

/// Sidecar path holding mixing weights and latent trends for `csv_path`.
pub fn truth_path(csv_path: &Path) -> std::path::PathBuf {
    let mut name = csv_path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".truth.json");
    csv_path.with_file_name(name)
}

/// Writes the CSV and its ground-truth sidecar.
pub fn write_synthetic(data: &SynthData, csv_path: &Path) -> Result<()> {
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    crate::pipeline::write_matrix_csv(&data.matrix, csv_path)?;
    let sidecar = truth_path(csv_path);
    let text = serde_json::to_string_pretty(data).map_err(|e| Error::io(&sidecar, e))?;
    std::fs::write(&sidecar, text + "\n").map_err(|e| Error::io(&sidecar, e))
}
