//! Metric CSVs rendered as small SVG line and bar charts.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    Line,
    Bar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> CliResult<Self> {
        crate::pipeline::require_path(path)?;
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().map(|rec| Ok(rec?.iter().map(str::to_string).collect())).collect::<CliResult<_>>()?;
        Ok(CsvTable { headers, rows })
    }

    fn column(&self, name: &str) -> CliResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("no column `{name}`; have {}", self.headers.join(", "))))
    }

    fn numbers(&self, col: usize) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.get(col)?.parse::<f64>().ok().filter(|v| v.is_finite())).collect()
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 400.0;
// Plot-area margins: left, right (legend), top, bottom.
const ML: f64 = 60.0;
const MR: f64 = 140.0;
const MT: f64 = 30.0;
const MB: f64 = 50.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Renders the chosen columns; `x` defaults to the first column and `y`
/// to every other fully numeric column.
pub fn render_svg(t: &CsvTable, x: Option<&str>, y: &[String], kind: PlotKind, title: &str) -> CliResult<String> {
    if t.rows.is_empty() {
        return Err(tableseq::Error::Unusable("CSV has no data rows".into()).into());
    }
    let xi = match x {
        Some(name) => t.column(name)?,
        None => 0,
    };
    let series: Vec<(usize, Vec<f64>)> = if y.is_empty() {
        (0..t.headers.len()).filter(|&c| c != xi).filter_map(|c| t.numbers(c).map(|v| (c, v))).collect()
    } else {
        y.iter()
            .map(|name| {
                let c = t.column(name)?;
                let v = t.numbers(c).ok_or_else(|| CliError::Config(format!("column `{name}` is not numeric")))?;
                Ok((c, v))
            })
            .collect::<CliResult<_>>()?
    };
    if series.is_empty() {
        return Err(CliError::Config("no numeric columns to plot".into()));
    }
    let (pw, ph) = (W - ML - MR, H - MT - MB);
    let (mut y0, y1) = range(series.iter().flat_map(|s| s.1.iter().copied()));
    if kind == PlotKind::Bar {
        y0 = y0.min(0.0);
    }
    let sy = |v: f64| MT + ph - (v - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, ML + pw / 2.0, esc(title));
    let _ = writeln!(svg, r#"<line x1="{ML}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, MT + ph, ML + pw, MT + ph);
    let _ = writeln!(svg, r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" stroke="black"/>"#, MT + ph);
    for k in 0..=4 {
        let v = y0 + (y1 - y0) * f64::from(k) / 4.0;
        let py = sy(v);
        let _ = writeln!(svg, r##"<line x1="{ML}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="#ddd"/>"##, ML + pw);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, ML - 4.0, py + 4.0, fmt_tick(v));
    }
    let n = t.rows.len();
    match kind {
        PlotKind::Line => {
            let xs = t.numbers(xi).unwrap_or_else(|| (0..n).map(|i| i as f64).collect());
            let (x0, x1) = range(xs.iter().copied());
            let sx = |v: f64| ML + (v - x0) / (x1 - x0) * pw;
            for k in 0..=4 {
                let v = x0 + (x1 - x0) * f64::from(k) / 4.0;
                let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(v), MT + ph + 16.0, fmt_tick(v));
            }
            for (s, (_, vals)) in series.iter().enumerate() {
                let pts: Vec<String> = xs.iter().zip(vals).map(|(&a, &b)| format!("{:.1},{:.1}", sx(a), sy(b))).collect();
                let _ = writeln!(svg, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, PALETTE[s % PALETTE.len()], pts.join(" "));
            }
        }
        PlotKind::Bar => {
            let group = pw / n as f64;
            let bw = group * 0.8 / series.len() as f64;
            for (i, row) in t.rows.iter().enumerate() {
                let gx = ML + group * i as f64 + group * 0.1;
                let label = row.get(xi).map(String::as_str).unwrap_or("");
                let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, gx + group * 0.4, MT + ph + 16.0, esc(label));
                for (s, (_, vals)) in series.iter().enumerate() {
                    let (top, base) = (sy(vals[i].max(y0)), sy(y0.max(0.0).min(y1)));
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                        gx + bw * s as f64,
                        top.min(base),
                        bw,
                        (base - top).abs(),
                        PALETTE[s % PALETTE.len()]
                    );
                }
            }
        }
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ML + pw / 2.0, H - 12.0, esc(&t.headers[xi]));
    for (s, (c, _)) in series.iter().enumerate() {
        let ly = MT + 14.0 * s as f64 + 10.0;
        let _ = writeln!(svg, r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#, W - MR + 10.0, ly - 9.0, PALETTE[s % PALETTE.len()]);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}">{}</text>"#, W - MR + 24.0, esc(&t.headers[*c]));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
