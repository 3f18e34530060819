//! Comparison of principal scores with external indicators and robust
//! flagging of deviant streams in T-mode runs.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{Days, NaiveDate};
use serde::Serialize;

use crate::data::DATE_FORMAT;
use crate::error::DiagnosticsError;
use crate::pca::{Mode, PcaResult};
use crate::stats::{average_ranks, mad, median, pearson};

pub const STRATUM_BELOW: &str = "R<1";
pub const STRATUM_AT: &str = "R=1";
pub const STRATUM_ABOVE: &str = "R>1";
pub const STRATUM_MISSING: &str = "missing";
/// Stratum for matched rows of a reference without stratification.
pub const STRATUM_ALL: &str = "all";

/// Deviation threshold, in MADs, for T-mode outlier flags.
pub const OUTLIER_MADS: f64 = 3.5;

/// An external indicator. Entry `i` covers the days from `dates[i]` up to the
/// next entry's date, at most seven days.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSeries {
    pub dates: Vec<NaiveDate>,
    /// `None` for periods without a published estimate.
    pub values: Vec<Option<f64>>,
    pub strata: Option<Vec<String>>,
}

/// Which bound of an interval-valued reference to correlate against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Lower,
    #[default]
    Upper,
    Mid,
}

impl ReferenceSeries {
    pub fn new(
        dates: Vec<NaiveDate>,
        values: Vec<Option<f64>>,
        strata: Option<Vec<String>>,
    ) -> Result<Self, DiagnosticsError> {
        if dates.len() != values.len() {
            return Err(DiagnosticsError::LengthMismatch(dates.len(), values.len()));
        }
        if let Some(s) = &strata {
            if s.len() != dates.len() {
                return Err(DiagnosticsError::LengthMismatch(dates.len(), s.len()));
            }
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DiagnosticsError::InvalidReference("dates must be strictly increasing".into()));
        }
        Ok(Self { dates, values, strata })
    }

    /// A daily (or irregular) reference without strata.
    pub fn unstratified(points: &[(NaiveDate, f64)]) -> Result<Self, DiagnosticsError> {
        Self::new(
            points.iter().map(|p| p.0).collect(),
            points.iter().map(|p| Some(p.1)).collect(),
            None,
        )
    }

    /// Index of the entry whose coverage contains `date`.
    fn entry_for(&self, date: NaiveDate) -> Option<usize> {
        let idx = self.dates.partition_point(|d| *d <= date).checked_sub(1)?;
        let week_end = self.dates[idx] + Days::new(7);
        let end = self.dates.get(idx + 1).map_or(week_end, |next| (*next).min(week_end));
        (date < end).then_some(idx)
    }
}

/// Stratum of an R interval: above one if the lower bound exceeds one, below
/// one if the upper bound is under one, otherwise straddling one.
pub fn r_stratum(lower: f64, upper: f64) -> &'static str {
    if lower > 1.0 {
        STRATUM_ABOVE
    } else if upper < 1.0 {
        STRATUM_BELOW
    } else {
        STRATUM_AT
    }
}

/// Reads `week_start,lower,upper[,label]`. Rows with empty bounds are kept as
/// gaps in the `missing` stratum; a non-empty `label` overrides the derived
/// stratum.
pub fn read_reference_csv<R: Read>(source: R, bound: Bound) -> Result<ReferenceSeries, DiagnosticsError> {
    let bad = |row: usize, msg: String| DiagnosticsError::InvalidReference(format!("row {row}: {msg}"));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(|e| bad(0, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(i_date), Some(i_lo), Some(i_hi)) = (col("week_start"), col("lower"), col("upper")) else {
        return Err(DiagnosticsError::InvalidReference(
            "header must contain week_start, lower, upper".into(),
        ));
    };
    let i_label = col("label");
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| bad(row, e.to_string()))?;
        let date = NaiveDate::parse_from_str(rec.get(i_date).unwrap_or(""), DATE_FORMAT)
            .map_err(|e| bad(row, e.to_string()))?;
        let parse = |idx: usize| -> Result<Option<f64>, DiagnosticsError> {
            let cell = rec.get(idx).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Ok(None);
            }
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| bad(row, format!("non-numeric bound {cell:?}")))
        };
        let (lo, hi) = (parse(i_lo)?, parse(i_hi)?);
        let label = i_label.and_then(|j| rec.get(j)).filter(|s| !s.is_empty());
        let (value, stratum) = match (lo, hi) {
            (Some(lo), Some(hi)) => {
                let v = match bound {
                    Bound::Lower => lo,
                    Bound::Upper => hi,
                    Bound::Mid => 0.5 * (lo + hi),
                };
                (Some(v), label.unwrap_or(r_stratum(lo, hi)).to_string())
            }
            _ => (None, STRATUM_MISSING.to_string()),
        };
        rows.push((date, value, stratum));
    }
    rows.sort_by_key(|r| r.0);
    ReferenceSeries::new(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        Some(rows.into_iter().map(|r| r.2).collect()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinedRow {
    pub date: NaiveDate,
    pub score: f64,
    pub reference: Option<f64>,
    pub stratum: String,
}

/// Matches each dated score to the reference entry covering its date.
pub fn join_by_week(scores: &[(NaiveDate, f64)], reference: &ReferenceSeries) -> Result<Vec<JoinedRow>, DiagnosticsError> {
    let rows: Vec<JoinedRow> = scores
        .iter()
        .map(|&(date, score)| {
            let entry = reference.entry_for(date);
            let value = entry.and_then(|i| reference.values[i]);
            let stratum = match (entry, value) {
                (Some(i), Some(_)) => reference
                    .strata
                    .as_ref()
                    .map_or(STRATUM_ALL.to_string(), |s| s[i].clone()),
                _ => STRATUM_MISSING.to_string(),
            };
            JoinedRow {
                date,
                score,
                reference: value,
                stratum,
            }
        })
        .collect();
    if rows.iter().all(|r| r.reference.is_none()) {
        return Err(DiagnosticsError::NoOverlap);
    }
    Ok(rows)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, DiagnosticsError> {
    if a.len() != b.len() {
        return Err(DiagnosticsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(DiagnosticsError::TooFewObservations(a.len()));
    }
    pearson(&average_ranks(a), &average_ranks(b)).ok_or(DiagnosticsError::DegenerateRanks)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Zero-based component index.
    pub component: usize,
    pub spearman_rho: f64,
    pub n_matched: usize,
    /// Counts per stratum, including `missing`.
    pub per_stratum_counts: BTreeMap<String, usize>,
    /// Matched rows only.
    pub joined_table: Vec<JoinedRow>,
    /// Every score date with its stratum, for stratified plots.
    pub stratified: Vec<JoinedRow>,
}

/// Correlates a dated series with a reference.
pub fn compare_series(scores: &[(NaiveDate, f64)], reference: &ReferenceSeries, component: usize) -> Result<ComparisonReport, DiagnosticsError> {
    let stratified = join_by_week(scores, reference)?;
    let joined_table: Vec<JoinedRow> = stratified.iter().filter(|r| r.reference.is_some()).cloned().collect();
    let a: Vec<f64> = joined_table.iter().map(|r| r.score).collect();
    let b: Vec<f64> = joined_table.iter().filter_map(|r| r.reference).collect();
    let spearman_rho = spearman(&a, &b)?;
    let mut per_stratum_counts = BTreeMap::new();
    for r in &stratified {
        *per_stratum_counts.entry(r.stratum.clone()).or_insert(0) += 1;
    }
    Ok(ComparisonReport {
        component,
        spearman_rho,
        n_matched: joined_table.len(),
        per_stratum_counts,
        joined_table,
        stratified,
    })
}

/// Correlates one S-mode score column with a reference series.
pub fn compare_with_reference(result: &PcaResult, component: usize, reference: &ReferenceSeries) -> Result<ComparisonReport, DiagnosticsError> {
    if result.mode != Mode::S {
        return Err(DiagnosticsError::NotSMode);
    }
    let col = result.score_column(component)?;
    let scores: Vec<(NaiveDate, f64)> = result.dates.iter().copied().zip(col).collect();
    compare_series(&scores, reference, component)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierFlag {
    pub stream: String,
    pub score: f64,
    /// `|score - median|`.
    pub deviation: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub component: usize,
    pub median: f64,
    pub mad: f64,
    pub threshold: f64,
    /// All streams, largest deviation first.
    pub flags: Vec<OutlierFlag>,
}

impl OutlierReport {
    pub fn flagged(&self) -> impl Iterator<Item = &OutlierFlag> {
        self.flags.iter().filter(|f| f.flagged)
    }

    /// Stream with the largest deviation from the median.
    pub fn max_deviation(&self) -> Option<&OutlierFlag> {
        self.flags.first()
    }
}

/// Flags scores further than `OUTLIER_MADS` MADs from their median.
pub fn outlier_flags(labels: &[String], scores: &[f64], component: usize) -> Result<OutlierReport, DiagnosticsError> {
    if labels.len() != scores.len() {
        return Err(DiagnosticsError::LengthMismatch(labels.len(), scores.len()));
    }
    if scores.len() < 4 {
        return Err(DiagnosticsError::TooFewStreams(scores.len()));
    }
    let med = median(scores);
    let spread = mad(scores);
    let threshold = OUTLIER_MADS * spread;
    let mut flags: Vec<OutlierFlag> = labels
        .iter()
        .zip(scores)
        .map(|(label, &score)| {
            let deviation = (score - med).abs();
            OutlierFlag {
                stream: label.clone(),
                score,
                deviation,
                flagged: deviation > threshold,
            }
        })
        .collect();
    // stable sort keeps input order among equal deviations
    flags.sort_by(|a, b| b.deviation.total_cmp(&a.deviation));
    Ok(OutlierReport {
        component,
        median: med,
        mad: spread,
        threshold,
        flags,
    })
}

/// Outlier flags on one component of a T-mode result (one score per stream).
pub fn tmode_outlier_flags(result: &PcaResult, component: usize) -> Result<OutlierReport, DiagnosticsError> {
    if result.mode != Mode::T {
        return Err(DiagnosticsError::NotTMode);
    }
    let col = result.score_column(component)?;
    outlier_flags(&result.stream_labels, &col, component)
}
