//! End-to-end runs: ingest, smooth, estimate `rho`, weight, decompose,
//! diagnose and write outputs for every configured analysis.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{AnalysisConfig, RunConfig};
use crate::data::{center_columns, ingest_csv, select_streams, slice_window, validate, TimeSeriesMatrix, DATE_FORMAT};
use crate::diagnostics::{compare_with_reference, read_reference_csv, tmode_outlier_flags, ComparisonReport, OutlierReport, ReferenceSeries};
use crate::error::{Error, FailureKind, Result};
use crate::format::fmt_g12;
use crate::par::Exec;
use crate::pca::{align_sign, biplot_data, weighted_pca, BiplotTable, Mode, PcaResult, WeightConfig};
use crate::smoother::{default_basis_size, lag1_correlation, smooth_columns, SmoothFit};
use crate::weighting::{median_rho, TemporalWeight};

/// Per-stream smoothing summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamRho {
    pub stream: String,
    /// `None` when the residuals are degenerate; such streams are left out of the median.
    pub rho: Option<f64>,
    pub lambda: f64,
    pub edf: f64,
}

/// Everything computed for one analysis, before serialization.
#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub name: String,
    pub matrix: TimeSeriesMatrix,
    pub stream_rhos: Vec<StreamRho>,
    pub smooth_fits: Vec<Option<SmoothFit>>,
    pub weight: Option<TemporalWeight>,
    pub result: PcaResult,
    pub biplot: Option<BiplotTable>,
    pub outliers: Option<OutlierReport>,
    pub comparison: Option<ComparisonReport>,
    pub validation_findings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominantLoading {
    pub component: usize,
    pub label: String,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    /// One-based.
    pub component: usize,
    pub spearman_rho: f64,
    pub n_matched: usize,
    pub per_stratum_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub name: String,
    pub mode: Mode,
    pub n_rows: usize,
    pub n_streams: usize,
    pub weighting: bool,
    pub standardized: bool,
    pub basis_size: Option<usize>,
    pub rho_per_stream: Vec<StreamRho>,
    pub median_rho: Option<f64>,
    /// Smallest and largest eigenvalue of the temporal weight.
    pub omega_eigen_range: Option<(f64, f64)>,
    pub singular_values: Vec<f64>,
    pub variance_fraction: Vec<f64>,
    /// Components explaining at least 1% of variance.
    pub dominant_loadings: Vec<DominantLoading>,
    pub dominant_biplot_arrow: Option<String>,
    pub outliers: Option<OutlierReport>,
    pub comparison: Option<ComparisonSummary>,
    pub validation_findings: usize,
}

/// Components shown in reports.
pub const REPORT_MIN_FRACTION: f64 = 0.01;

impl AnalysisOutput {
    pub fn report(&self, cfg: &AnalysisConfig) -> AnalysisReport {
        let r = &self.result;
        let labels = r.loading_labels();
        let dominant_loadings = (0..r.n_components())
            .filter(|&j| r.variance_fraction[j] >= REPORT_MIN_FRACTION)
            .filter_map(|j| {
                r.dominant_loading(j).map(|(i, v)| DominantLoading {
                    component: j + 1,
                    label: labels[i].clone(),
                    loading: v,
                })
            })
            .collect();
        AnalysisReport {
            name: self.name.clone(),
            mode: r.mode,
            n_rows: self.matrix.nrows(),
            n_streams: self.matrix.ncols(),
            weighting: cfg.weighting,
            standardized: cfg.standardize,
            basis_size: cfg.weighting.then(|| cfg.basis_size.unwrap_or(default_basis_size(self.matrix.nrows()))),
            rho_per_stream: self.stream_rhos.clone(),
            median_rho: self.weight.as_ref().map(|w| w.rho),
            omega_eigen_range: self.weight.as_ref().map(|w| w.omega_eigen_range()),
            singular_values: r.singular_values.clone(),
            variance_fraction: r.variance_fraction.clone(),
            dominant_loadings,
            dominant_biplot_arrow: self.biplot.as_ref().and_then(|b| b.dominant_arrow()).map(|a| a.label.clone()),
            outliers: self.outliers.clone(),
            comparison: self.comparison.as_ref().map(|c| ComparisonSummary {
                component: c.component + 1,
                spearman_rho: c.spearman_rho,
                n_matched: c.n_matched,
                per_stratum_counts: c.per_stratum_counts.clone(),
            }),
            validation_findings: self.validation_findings,
        }
    }
}

/// Smooths every stream and returns the per-stream summaries, the fits and
/// the global (median) correlation.
pub fn estimate_rho(m: &TimeSeriesMatrix, basis_size: usize, exec: Exec) -> Result<(Vec<StreamRho>, Vec<Option<SmoothFit>>, f64)> {
    let fits = smooth_columns(m.values(), basis_size, exec)?;
    let mut rhos = Vec::with_capacity(fits.len());
    let mut kept = Vec::with_capacity(fits.len());
    for (label, fit) in m.labels().iter().zip(fits) {
        let fit = fit?;
        let rho = lag1_correlation(fit.residuals.as_slice()).ok();
        rhos.push(StreamRho {
            stream: label.clone(),
            rho,
            lambda: fit.lambda,
            edf: fit.edf,
        });
        kept.push(Some(fit));
    }
    let valid: Vec<f64> = rhos.iter().filter_map(|r| r.rho).collect();
    let rho = if valid.is_empty() { 0.0 } else { median_rho(&valid)? };
    Ok((rhos, kept, rho))
}

/// Runs one analysis on an already ingested matrix.
pub fn analyze(data: &TimeSeriesMatrix, cfg: &AnalysisConfig, reference: Option<(&ReferenceSeries, usize)>, exec: Exec) -> Result<AnalysisOutput> {
    let mut m = if cfg.streams.is_empty() {
        data.clone()
    } else {
        select_streams(data, &cfg.streams)?
    };
    if let Some(w) = &cfg.window {
        m = slice_window(&m, w)?;
    }
    let validation_findings = validate(&m).findings.len();
    let centred = center_columns(&m, cfg.standardize)?;

    let (stream_rhos, smooth_fits, weight) = if cfg.weighting {
        let k = cfg.basis_size.unwrap_or(default_basis_size(m.nrows()));
        let (rhos, fits, rho) = estimate_rho(&centred.base, k, exec)?;
        (rhos, fits, Some(TemporalWeight::new(m.nrows(), rho)?))
    } else {
        (Vec::new(), Vec::new(), None)
    };
    let wc = match &weight {
        Some(w) => WeightConfig::temporal(w.omega.clone(), cfg.mode),
        None => WeightConfig::identity(),
    };
    let result = align_sign(weighted_pca(&centred, &wc, cfg.mode)?);
    let biplot = (result.n_components() >= 2).then(|| biplot_data(&result)).transpose()?;
    let outliers = match cfg.mode {
        Mode::T if m.ncols() >= 4 => Some(tmode_outlier_flags(&result, 0)?),
        _ => None,
    };
    let comparison = match (cfg.mode, reference) {
        (Mode::S, Some((r, component))) if component < result.n_components() => Some(compare_with_reference(&result, component, r)?),
        _ => None,
    };
    Ok(AnalysisOutput {
        name: cfg.name.clone(),
        matrix: m,
        stream_rhos,
        smooth_fits,
        weight,
        result,
        biplot,
        outliers,
        comparison,
        validation_findings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisEntry {
    pub name: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<AnalysisReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub software_version: String,
    pub config_hash: String,
    pub analyses: Vec<AnalysisEntry>,
    /// Wall-clock milliseconds per analysis, plus `total`.
    pub timings_ms: BTreeMap<String, f64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Failed analyses with their failure class.
    pub failures: Vec<(String, FailureKind)>,
}

impl RunOutcome {
    /// 0 on success, otherwise the most severe failure's code.
    pub fn exit_code(&self) -> i32 {
        self.failures.iter().map(|(_, k)| k.exit_code()).max().unwrap_or(0)
    }
}

/// Runs every analysis in `config`. Setup failures (unreadable input or
/// reference) abort the run; per-analysis failures are recorded and the
/// remaining analyses still run.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let file = fs::File::open(&config.input).map_err(|e| Error::io(&config.input, e))?;
    let data = ingest_csv(std::io::BufReader::new(file), &config.schema)?;
    let reference = match &config.reference {
        Some(r) => {
            let f = fs::File::open(&r.path).map_err(|e| Error::io(&r.path, e))?;
            Some((read_reference_csv(std::io::BufReader::new(f), r.bound)?, r.component - 1))
        }
        None => None,
    };
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;

    let results: Vec<(Result<AnalysisReport>, f64)> = config.exec.map(&config.analyses, |a| {
        let t = Instant::now();
        let out = analyze(&data, a, reference.as_ref().map(|(r, c)| (r, *c)), config.exec).and_then(|o| {
            let dir = config.output_dir.join(&a.name);
            write_analysis(&o, a, &dir, config.dump_smooth)?;
            Ok(o.report(a))
        });
        (out, t.elapsed().as_secs_f64() * 1e3)
    });

    let mut analyses = Vec::new();
    let mut failures = Vec::new();
    let mut timings_ms = BTreeMap::new();
    for (a, (res, ms)) in config.analyses.iter().zip(results) {
        timings_ms.insert(a.name.clone(), ms);
        match res {
            Ok(report) => analyses.push(AnalysisEntry {
                name: a.name.clone(),
                ok: true,
                error: None,
                report: Some(report),
            }),
            Err(e) => {
                failures.push((a.name.clone(), e.kind()));
                analyses.push(AnalysisEntry {
                    name: a.name.clone(),
                    ok: false,
                    error: Some(e.to_string()),
                    report: None,
                });
            }
        }
    }
    timings_ms.insert("total".into(), started.elapsed().as_secs_f64() * 1e3);
    let report = RunReport {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        analyses,
        timings_ms,
    };
    write_json(&config.output_dir.join("report.json"), &report)?;
    Ok(RunOutcome { report, failures })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| Error::io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn pc_header(first: &str, r: usize) -> Vec<String> {
    std::iter::once(first.to_string()).chain((1..=r).map(|j| format!("PC{j}"))).collect()
}

/// Writes the CSV and JSON outputs of one analysis into `dir`.
pub fn write_analysis(out: &AnalysisOutput, cfg: &AnalysisConfig, dir: &Path, dump_smooth: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let r = &out.result;
    let k = r.n_components();
    let (score_key, loading_key) = match r.mode {
        Mode::S => ("date", "stream"),
        Mode::T => ("stream", "date"),
    };
    let mut written = Vec::new();

    let path = dir.join("scores.csv");
    let rows = r.score_labels().into_iter().enumerate().map(|(i, label)| {
        std::iter::once(label).chain(r.scores.row(i).iter().map(|v| fmt_g12(*v))).collect::<Vec<_>>()
    });
    write_rows(&path, &pc_header(score_key, k), rows)?;
    written.push(path);

    let path = dir.join("loadings.csv");
    let rows = r.loading_labels().into_iter().enumerate().map(|(i, label)| {
        std::iter::once(label).chain(r.loadings.row(i).iter().map(|v| fmt_g12(*v))).collect::<Vec<_>>()
    });
    write_rows(&path, &pc_header(loading_key, k), rows)?;
    written.push(path);

    let path = dir.join("variance.csv");
    let mut cumulative = 0.0;
    let rows: Vec<Vec<String>> = (0..k)
        .map(|j| {
            cumulative += r.variance_fraction[j];
            vec![
                format!("PC{}", j + 1),
                fmt_g12(r.singular_values[j]),
                fmt_g12(r.variance_fraction[j]),
                fmt_g12(cumulative),
            ]
        })
        .collect();
    let header: Vec<String> = ["component", "singular_value", "fraction", "cumulative"].map(String::from).to_vec();
    write_rows(&path, &header, rows)?;
    written.push(path);

    if let Some(b) = &out.biplot {
        let path = dir.join("biplot.csv");
        let arrows = b.arrows.iter().map(|a| vec!["loading".into(), a.label.clone(), fmt_g12(a.pc1), fmt_g12(a.pc2), fmt_g12(a.length)]);
        let points = b.points.iter().map(|p| {
            vec!["score".into(), p.label.clone(), fmt_g12(p.pc1), fmt_g12(p.pc2), String::new()]
        });
        let header: Vec<String> = ["kind", "label", "pc1", "pc2", "length"].map(String::from).to_vec();
        write_rows(&path, &header, arrows.chain(points))?;
        written.push(path);
    }

    if let Some(c) = &out.comparison {
        let path = dir.join("comparison.csv");
        let rows = c.stratified.iter().map(|row| {
            vec![
                row.date.format(DATE_FORMAT).to_string(),
                fmt_g12(row.score),
                row.reference.map(fmt_g12).unwrap_or_default(),
                row.stratum.clone(),
            ]
        });
        let header: Vec<String> = ["date", "score", "reference", "stratum"].map(String::from).to_vec();
        write_rows(&path, &header, rows)?;
        written.push(path);
    }

    if let Some(o) = &out.outliers {
        let path = dir.join("outliers.csv");
        let rows = o.flags.iter().map(|f| vec![f.stream.clone(), fmt_g12(f.score), fmt_g12(f.deviation), f.flagged.to_string()]);
        let header: Vec<String> = ["stream", "score", "deviation", "flagged"].map(String::from).to_vec();
        write_rows(&path, &header, rows)?;
        written.push(path);
    }

    if dump_smooth && !out.smooth_fits.is_empty() {
        let path = dir.join("smooth.csv");
        let labels = out.matrix.labels();
        let mut header = vec!["date".to_string()];
        for l in labels {
            header.push(format!("{l}_fitted"));
            header.push(format!("{l}_residual"));
        }
        let rows = out.matrix.dates().iter().enumerate().map(|(i, d)| {
            let mut row = vec![d.format(DATE_FORMAT).to_string()];
            for fit in &out.smooth_fits {
                match fit {
                    Some(f) => {
                        row.push(fmt_g12(f.fitted[i]));
                        row.push(fmt_g12(f.residuals[i]));
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        });
        write_rows(&path, &header, rows)?;
        written.push(path);
    }

    let path = dir.join("report.json");
    write_json(&path, &out.report(cfg))?;
    written.push(path);
    Ok(written)
}

/// Writes a matrix as CSV, used by the synthetic generator.
pub fn write_matrix_csv(m: &TimeSeriesMatrix, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(f);
    m.write_csv(&mut buf, "date").map_err(|e| Error::io(path, e))?;
    buf.flush().map_err(|e| Error::io(path, e))
}
