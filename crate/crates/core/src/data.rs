//! Date-indexed surveillance matrices: ingest, windowing, stream selection,
//! centring and advisory validation.

use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::stats::{mad, median};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// An `n x p` matrix of named streams, one row per calendar date.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    dates: Vec<NaiveDate>,
    labels: Vec<String>,
    values: DMatrix<f64>,
    meta: String,
}

impl TimeSeriesMatrix {
    /// Builds a matrix after checking date order, label uniqueness, shape and finiteness.
    pub fn new(
        dates: Vec<NaiveDate>,
        labels: Vec<String>,
        values: DMatrix<f64>,
        meta: impl Into<String>,
    ) -> Result<Self, DataError> {
        if dates.len() != values.nrows() {
            return Err(DataError::Shape(format!(
                "{} dates for {} rows",
                dates.len(),
                values.nrows()
            )));
        }
        if labels.len() != values.ncols() {
            return Err(DataError::Shape(format!(
                "{} labels for {} columns",
                labels.len(),
                values.ncols()
            )));
        }
        for pair in dates.windows(2) {
            if pair[1] == pair[0] {
                return Err(DataError::DuplicateDate(pair[1]));
            }
            if pair[1] < pair[0] {
                return Err(DataError::Shape(format!(
                    "dates not increasing at {}",
                    pair[1]
                )));
            }
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(DataError::Shape(format!("duplicate stream label `{label}`")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(DataError::NonNumericCell {
                row,
                column: labels[col].clone(),
                value: values[(row, col)].to_string(),
            });
        }
        Ok(Self {
            dates,
            labels,
            values,
            meta: meta.into(),
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let j = self.labels.iter().position(|l| l == label)?;
        Some(self.values.column(j).iter().copied().collect())
    }

    /// Writes the matrix back out in the ingest layout. Values use Rust's
    /// shortest round-trip representation so re-ingesting is bit-exact.
    pub fn write_csv<W: Write>(&self, out: W, date_column: &str) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![date_column.to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (i, date) in self.dates.iter().enumerate() {
            let mut row = vec![date.format(DATE_FORMAT).to_string()];
            row.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()
    }

    fn with_rows(&self, rows: &[usize]) -> Self {
        let values = DMatrix::from_fn(rows.len(), self.ncols(), |i, j| self.values[(rows[i], j)]);
        Self {
            dates: rows.iter().map(|&i| self.dates[i]).collect(),
            labels: self.labels.clone(),
            values,
            meta: self.meta.clone(),
        }
    }
}

/// Column layout for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    #[serde(default = "default_date_column")]
    pub date_column: String,
    pub stream_columns: Vec<String>,
    #[serde(default)]
    pub date_min: Option<NaiveDate>,
    #[serde(default)]
    pub date_max: Option<NaiveDate>,
}

fn default_date_column() -> String {
    "date".to_string()
}

impl IngestConfig {
    pub fn new<S: Into<String>>(streams: impl IntoIterator<Item = S>) -> Self {
        Self {
            date_column: default_date_column(),
            stream_columns: streams.into_iter().map(Into::into).collect(),
            date_min: None,
            date_max: None,
        }
    }
}

/// Parses a CSV extract into a [`TimeSeriesMatrix`]. Rows are sorted by date
/// and rows outside the optional date range are dropped. Empty cells are an
/// error; nothing is imputed.
pub fn ingest_csv<R: Read>(source: R, schema: &IngestConfig) -> Result<TimeSeriesMatrix, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| DataError::MalformedCsv {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let date_idx = find(&schema.date_column)?;
    let stream_idx = schema
        .stream_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 0
        let row = i + 1;
        let record = record.map_err(|e| DataError::MalformedCsv {
            row,
            message: e.to_string(),
        })?;
        let raw_date = record.get(date_idx).ok_or_else(|| DataError::MalformedCsv {
            row,
            message: "missing date cell".into(),
        })?;
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|e| {
            DataError::MalformedCsv {
                row,
                message: format!("bad date {raw_date:?}: {e}"),
            }
        })?;
        let mut values = Vec::with_capacity(stream_idx.len());
        for (&j, name) in stream_idx.iter().zip(&schema.stream_columns) {
            let cell = record.get(j).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(DataError::NonNumericCell {
                        row,
                        column: name.clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        let keep = schema.date_min.is_none_or(|d| date >= d) && schema.date_max.is_none_or(|d| date <= d);
        if keep {
            rows.push((date, values));
        }
    }
    rows.sort_by_key(|(d, _)| *d);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(DataError::DuplicateDate(pair[0].0));
        }
    }
    let p = schema.stream_columns.len();
    let values = DMatrix::from_fn(rows.len(), p, |i, j| rows[i].1[j]);
    TimeSeriesMatrix::new(
        rows.into_iter().map(|(d, _)| d).collect(),
        schema.stream_columns.clone(),
        values,
        "csv",
    )
}

/// A named, inclusive date range (an epidemic wave, for instance).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveWindow {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl WaveWindow {
    pub fn new(name: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Result<Self, DataError> {
        let name = name.into();
        if start > end {
            return Err(DataError::Shape(format!(
                "window `{name}` starts after it ends"
            )));
        }
        Ok(Self { name, start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Keeps the rows whose date falls inside the window.
pub fn slice_window(m: &TimeSeriesMatrix, w: &WaveWindow) -> Result<TimeSeriesMatrix, DataError> {
    let rows: Vec<usize> = m
        .dates
        .iter()
        .enumerate()
        .filter(|(_, d)| w.contains(**d))
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        return Err(DataError::EmptyWindow(w.name.clone()));
    }
    Ok(m.with_rows(&rows))
}

/// Subsets and reorders columns to `labels`.
pub fn select_streams<S: AsRef<str>>(m: &TimeSeriesMatrix, labels: &[S]) -> Result<TimeSeriesMatrix, DataError> {
    let idx = labels
        .iter()
        .map(|l| {
            m.labels
                .iter()
                .position(|x| x == l.as_ref())
                .ok_or_else(|| DataError::UnknownLabel(l.as_ref().to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let values = DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m.values[(i, idx[j])]);
    TimeSeriesMatrix::new(
        m.dates.clone(),
        labels.iter().map(|l| l.as_ref().to_string()).collect(),
        values,
        m.meta.clone(),
    )
}

/// A column-centred (optionally standardized) matrix plus the statistics
/// needed to undo the transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredMatrix {
    pub base: TimeSeriesMatrix,
    pub column_means: Vec<f64>,
    pub standardized: bool,
    /// Present iff `standardized`.
    pub column_sds: Option<Vec<f64>>,
}

impl CenteredMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.base.values
    }

    /// Maps a centred row back to the original units.
    pub fn uncenter_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| {
                let sd = self.column_sds.as_ref().map_or(1.0, |s| s[j]);
                v * sd + self.column_means[j]
            })
            .collect()
    }
}

/// Subtracts column means and, if `standardize`, divides by the sample
/// standard deviation.
pub fn center_columns(m: &TimeSeriesMatrix, standardize: bool) -> Result<CenteredMatrix, DataError> {
    let n = m.nrows();
    if n < 2 {
        return Err(DataError::TooFewRows(n));
    }
    let mut values = m.values.clone();
    let mut means = Vec::with_capacity(m.ncols());
    let mut sds = Vec::with_capacity(m.ncols());
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        col.iter_mut().for_each(|v| *v -= mean);
        means.push(mean);
        if standardize {
            let ss: f64 = col.iter().map(|v| v * v).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            let scale = mean.abs().max(col.amax());
            if sd <= 1e-14 * scale || sd == 0.0 {
                return Err(DataError::ConstantColumn(m.labels[j].clone()));
            }
            col.iter_mut().for_each(|v| *v /= sd);
            sds.push(sd);
        }
    }
    Ok(CenteredMatrix {
        base: TimeSeriesMatrix {
            dates: m.dates.clone(),
            labels: m.labels.clone(),
            values,
            meta: m.meta.clone(),
        },
        column_means: means,
        standardized: standardize,
        column_sds: standardize.then_some(sds),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    /// A calendar day absent from an otherwise daily sequence.
    Gap { date: NaiveDate },
    Negative {
        stream: String,
        date: NaiveDate,
        value: f64,
    },
    Outlier {
        stream: String,
        date: NaiveDate,
        value: f64,
        median: f64,
        mad: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Values further than this many MADs from the stream median are reported.
pub const OUTLIER_MADS: f64 = 5.0;

/// Advisory checks: daily gaps, negative values and robust outliers.
pub fn validate(m: &TimeSeriesMatrix) -> ValidationReport {
    let mut findings = Vec::new();
    for pair in m.dates.windows(2) {
        let mut d = pair[0].succ_opt();
        while let Some(day) = d {
            if day >= pair[1] {
                break;
            }
            findings.push(Finding::Gap { date: day });
            d = day.succ_opt();
        }
    }
    for (j, label) in m.labels.iter().enumerate() {
        let col: Vec<f64> = m.values.column(j).iter().copied().collect();
        for (i, &v) in col.iter().enumerate() {
            if v < 0.0 {
                findings.push(Finding::Negative {
                    stream: label.clone(),
                    date: m.dates[i],
                    value: v,
                });
            }
        }
        if col.is_empty() {
            continue;
        }
        let med = median(&col);
        let spread = mad(&col);
        for (i, &v) in col.iter().enumerate() {
            if (v - med).abs() > OUTLIER_MADS * spread {
                findings.push(Finding::Outlier {
                    stream: label.clone(),
                    date: m.dates[i],
                    value: v,
                    median: med,
                    mad: spread,
                });
            }
        }
    }
    ValidationReport { findings }
}
