//! Static SVG renderings of run outputs. Reads only the CSV files, so plots
//! can be regenerated without recomputing anything.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diagnostics::{STRATUM_ABOVE, STRATUM_AT, STRATUM_BELOW, STRATUM_MISSING};
use crate::error::{Error, Result};

const WIDTH: f64 = 820.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN: f64 = 50.0;
/// Score panels drawn per analysis.
const MAX_PANELS: usize = 2;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    let header = r.headers().map_err(|e| Error::io(path, e))?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(|e| Error::io(path, e))?;
    Ok(Table { header, rows })
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps `[lo, hi]` onto `[a, b]`; a degenerate range maps to the midpoint.
struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn fit(values: impl Iterator<Item = f64>, a: f64, b: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        Self { lo, hi, a, b }
    }

    fn symmetric(self) -> Self {
        let m = self.lo.abs().max(self.hi.abs()).max(f64::MIN_POSITIVE);
        Self { lo: -m, hi: m, ..self }
    }

    fn map(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            return 0.5 * (self.a + self.b);
        }
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn svg_open(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// One panel per leading component; lines for dated scores, labelled points
/// for per-stream (T-mode) scores.
fn scores_svg(scores: &Table, fractions: &[f64]) -> String {
    let k = scores.header.len().saturating_sub(1).min(MAX_PANELS);
    let by_date = scores.header.first().is_some_and(|h| h == "date");
    let n = scores.rows.len();
    let mut s = svg_open(PANEL_HEIGHT * k as f64);
    for c in 0..k {
        let top = PANEL_HEIGHT * c as f64;
        let name = &scores.header[c + 1];
        let title = match fractions.get(c) {
            Some(f) => format!("{name} ({:.1}% of variance)", 100.0 * f),
            None => name.clone(),
        };
        let values: Vec<f64> = scores.rows.iter().map(|r| num(&r[c + 1])).collect();
        let xs = Scale::fit((0..n).map(|i| i as f64), MARGIN, WIDTH - MARGIN / 2.0);
        let ys = Scale::fit(values.iter().copied(), top + PANEL_HEIGHT - MARGIN, top + MARGIN / 1.5);
        let _ = writeln!(s, "<g class=\"panel\" id=\"panel-{name}\">");
        let _ = writeln!(s, "<text class=\"panel-title\" x=\"{MARGIN}\" y=\"{}\" font-size=\"13\">{}</text>", top + 18.0, escape(&title));
        let zero = ys.map(0.0);
        let _ = writeln!(
            s,
            "<line x1=\"{MARGIN}\" y1=\"{zero:.2}\" x2=\"{:.2}\" y2=\"{zero:.2}\" stroke=\"#bbb\"/>",
            WIDTH - MARGIN / 2.0
        );
        if by_date {
            let pts: Vec<String> = values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, v)| format!("{:.2},{:.2}", xs.map(i as f64), ys.map(*v)))
                .collect();
            let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>", pts.join(" "));
            for i in [0, n.saturating_sub(1)] {
                if let Some(row) = scores.rows.get(i) {
                    let _ = writeln!(
                        s,
                        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                        xs.map(i as f64),
                        top + PANEL_HEIGHT - MARGIN / 3.0,
                        escape(&row[0])
                    );
                }
            }
        } else {
            for (i, v) in values.iter().enumerate() {
                let (x, y) = (xs.map(i as f64), ys.map(*v));
                let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3.5\" fill=\"#1f77b4\"/>");
                let _ = writeln!(
                    s,
                    "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"9\" transform=\"rotate(45 {x:.2} {:.2})\">{}</text>",
                    top + PANEL_HEIGHT - MARGIN + 12.0,
                    top + PANEL_HEIGHT - MARGIN + 12.0,
                    escape(&scores.rows[i][0])
                );
            }
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

fn biplot_svg(table: &Table) -> String {
    let size = WIDTH;
    let rows = |kind: &str| table.rows.iter().filter(move |r| r[0] == kind).collect::<Vec<_>>();
    let (arrows, points) = (rows("loading"), rows("score"));
    let c = size / 2.0;
    let half = size / 2.0 - MARGIN;
    let mut s = svg_open(size);
    s.push_str("<defs><marker id=\"head\" markerWidth=\"8\" markerHeight=\"8\" refX=\"6\" refY=\"3\" orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"#d62728\"/></marker></defs>\n");
    let _ = writeln!(s, "<line x1=\"{MARGIN}\" y1=\"{c}\" x2=\"{}\" y2=\"{c}\" stroke=\"#bbb\"/>", size - MARGIN);
    let _ = writeln!(s, "<line x1=\"{c}\" y1=\"{MARGIN}\" x2=\"{c}\" y2=\"{}\" stroke=\"#bbb\"/>", size - MARGIN);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">PC1</text>", size - MARGIN, c - 6.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">PC2</text>", c + 6.0, MARGIN);
    let point_scale = Scale::fit(points.iter().flat_map(|r| [num(&r[2]), num(&r[3])]), -half, half).symmetric();
    for p in &points {
        let (x, y) = (c + point_scale.map(num(&p[2])) , c - point_scale.map(num(&p[3])));
        let _ = writeln!(s, "<circle class=\"score\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"#7f7f7f\" fill-opacity=\"0.6\"/>");
    }
    let arrow_scale = Scale::fit(arrows.iter().flat_map(|r| [num(&r[2]), num(&r[3])]), -half, half).symmetric();
    for a in &arrows {
        let (x, y) = (c + arrow_scale.map(num(&a[2])), c - arrow_scale.map(num(&a[3])));
        let _ = writeln!(
            s,
            "<line class=\"arrow\" x1=\"{c}\" y1=\"{c}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"#d62728\" stroke-width=\"1.5\" marker-end=\"url(#head)\"/>"
        );
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#d62728\">{}</text>", x + 4.0, y - 4.0, escape(&a[1]));
    }
    s.push_str("</svg>\n");
    s
}

pub fn stratum_colour(stratum: &str) -> &'static str {
    match stratum {
        STRATUM_BELOW => "#d62728",
        STRATUM_AT => "#2ca02c",
        STRATUM_ABOVE => "#17becf",
        STRATUM_MISSING => "#9467bd",
        _ => "#7f7f7f",
    }
}

fn comparison_svg(table: &Table) -> String {
    let n = table.rows.len();
    let height = PANEL_HEIGHT * 1.5;
    let xs = Scale::fit((0..n).map(|i| i as f64), MARGIN, WIDTH - 140.0);
    let ys = Scale::fit(table.rows.iter().map(|r| num(&r[1])), height - MARGIN, MARGIN);
    let mut s = svg_open(height);
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"20\" font-size=\"13\">Score coloured by reference stratum</text>");
    for (i, r) in table.rows.iter().enumerate() {
        let _ = writeln!(
            s,
            "<circle class=\"point\" data-stratum=\"{}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\"/>",
            escape(&r[3]),
            xs.map(i as f64),
            ys.map(num(&r[1])),
            stratum_colour(&r[3])
        );
    }
    let mut present: Vec<&str> = table.rows.iter().map(|r| r[3].as_str()).collect();
    present.sort_unstable();
    present.dedup();
    for (i, label) in present.iter().enumerate() {
        let y = MARGIN + 18.0 * i as f64;
        let _ = writeln!(s, "<circle cx=\"{}\" cy=\"{y}\" r=\"5\" fill=\"{}\"/>", WIDTH - 120.0, stratum_colour(label));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{}</text>", WIDTH - 110.0, y + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn analysis_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join("scores.csv").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("scores.csv").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Renders `scores.svg`, `biplot.svg` and `comparison.svg` next to the CSVs
/// of every analysis under `dir` (or of `dir` itself).
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let dirs = analysis_dirs(dir)?;
    if dirs.is_empty() {
        return Err(Error::MissingOutput(format!("no scores.csv under {}", dir.display())));
    }
    let mut written = Vec::new();
    for d in dirs {
        let scores = read_table(&d.join("scores.csv"))?;
        let variance = d.join("variance.csv");
        let fractions: Vec<f64> = if variance.is_file() {
            read_table(&variance)?.rows.iter().map(|r| num(&r[2])).collect()
        } else {
            Vec::new()
        };
        let mut emit = |name: &str, svg: String| -> Result<()> {
            let path = d.join(name);
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        emit("scores.svg", scores_svg(&scores, &fractions))?;
        let biplot = d.join("biplot.csv");
        if biplot.is_file() {
            emit("biplot.svg", biplot_svg(&read_table(&biplot)?))?;
        }
        let comparison = d.join("comparison.csv");
        if comparison.is_file() {
            emit("comparison.svg", comparison_svg(&read_table(&comparison)?))?;
        }
    }
    Ok(written)
}
