//! Run configuration (TOML).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{IngestConfig, WaveWindow};
use crate::diagnostics::Bound;
use crate::error::ConfigError;
use crate::par::Exec;
use crate::pca::Mode;

/// One decomposition to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub name: String,
    /// Stream subset, in output order. Empty means every schema stream.
    #[serde(default)]
    pub streams: Vec<String>,
    #[serde(default)]
    pub window: Option<WaveWindow>,
    pub mode: Mode,
    #[serde(default = "default_true")]
    pub weighting: bool,
    #[serde(default)]
    pub standardize: bool,
    /// Spline basis dimension; defaults to `min(10, n - 1)`.
    #[serde(default)]
    pub basis_size: Option<usize>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub bound: Bound,
    /// One-based component compared against the reference.
    #[serde(default = "default_component")]
    pub component: usize,
}

fn default_component() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub schema: IngestConfig,
    #[serde(default)]
    pub reference: Option<ReferenceConfig>,
    #[serde(default, rename = "analysis")]
    pub analyses: Vec<AnalysisConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Write per-stream fitted values and residuals.
    #[serde(default)]
    pub dump_smooth: bool,
    #[serde(default)]
    pub exec: Exec,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        fix(&mut self.output_dir);
        if let Some(r) = &mut self.reference {
            fix(&mut r.path);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut names = HashSet::new();
        let known: HashSet<&str> = self.schema.stream_columns.iter().map(String::as_str).collect();
        if known.len() != self.schema.stream_columns.len() {
            return Err(ConfigError::Invalid("schema lists a stream twice".into()));
        }
        for a in &self.analyses {
            if a.name.is_empty() || a.name.contains(['/', '\\']) || a.name.starts_with('.') {
                return Err(ConfigError::Invalid(format!("bad analysis name `{}`", a.name)));
            }
            if !names.insert(a.name.as_str()) {
                return Err(ConfigError::DuplicateAnalysis(a.name.clone()));
            }
            if let Some(s) = a.streams.iter().find(|s| !known.contains(s.as_str())) {
                return Err(ConfigError::UnknownStream {
                    analysis: a.name.clone(),
                    stream: s.clone(),
                });
            }
            if let Some(w) = &a.window {
                if w.start > w.end {
                    return Err(ConfigError::Invalid(format!("window `{}` starts after it ends", w.name)));
                }
            }
            if let Some(k) = a.basis_size {
                if k < 4 {
                    return Err(ConfigError::Invalid(format!("basis_size {k} < 4 in `{}`", a.name)));
                }
            }
        }
        if let Some(r) = &self.reference {
            if r.component == 0 {
                return Err(ConfigError::Invalid("reference.component is one-based".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
