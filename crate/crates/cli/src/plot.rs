//! SVG line plots from CSV tables.

use std::fmt::Write as _;
use std::path::Path;

use crate::RunError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Numeric CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, RunError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| RunError::Plot(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| RunError::Plot(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| RunError::Plot(e.to_string()))?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| RunError::Plot(format!("`{s}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize, RunError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RunError::Plot(format!("missing column `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    /// Series to draw; empty means every column except `x`.
    pub ys: Vec<String>,
    pub log_log: bool,
    pub markers: bool,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 0.0 { lo.abs() * 0.05 } else { 0.5 };
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> Option<f64> {
        let v = if self.log { v.log10() } else { v };
        v.is_finite().then(|| from + (v - self.lo) / (self.hi - self.lo) * (to - from))
    }

    fn label(&self, t: f64) -> String {
        let v = self.lo + t * (self.hi - self.lo);
        if self.log {
            format!("1e{v:.1}")
        } else {
            format!("{v:.3}")
        }
    }
}

/// Renders `spec` over `table` as an SVG document.
pub fn render(table: &Table, spec: &PlotSpec) -> Result<String, RunError> {
    if table.rows.is_empty() {
        return Err(RunError::Plot("table has no data rows".into()));
    }
    let xi = table.column(&spec.x)?;
    let ys: Vec<usize> = if spec.ys.is_empty() {
        (0..table.headers.len()).filter(|&i| i != xi).collect()
    } else {
        spec.ys.iter().map(|y| table.column(y)).collect::<Result<_, _>>()?
    };
    if ys.is_empty() {
        return Err(RunError::Plot("no series to plot".into()));
    }
    let ax = Axis::fit(table.rows.iter().map(|r| r[xi]), spec.log_log);
    let ay = Axis::fit(table.rows.iter().flat_map(|r| ys.iter().map(move |&i| r[i])), spec.log_log);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN / 2.0, HEIGHT - MARGIN, MARGIN / 2.0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="16" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let px = x0 + t * (x1 - x0);
        let py = y0 + t * (y1 - y0);
        let _ = writeln!(
            svg,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            y0 + 14.0,
            ax.label(t)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{py:.1}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
            x0 - 4.0,
            ay.label(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(&spec.x)
    );
    for (s, &yi) in ys.iter().enumerate() {
        let color = COLORS[s % COLORS.len()];
        let pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter_map(|r| Some((ax.map(r[xi], x0, x1)?, ay.map(r[yi], y0, y1)?)))
            .collect();
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        if spec.markers {
            for (x, y) in &pts {
                let _ = writeln!(
                    svg,
                    r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="14" fill="{color}">*</text>"#,
                    y + 5.0
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            x1 - 90.0,
            y1 + 14.0 * (s as f64 + 1.0),
            escape(&table.headers[yi])
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads `csv`, renders it, and writes `svg`. Nothing is written on error.
pub fn emit_plot(csv: &Path, svg: &Path, spec: &PlotSpec) -> Result<(), RunError> {
    let table = Table::read(csv)?;
    let doc = render(&table, spec)?;
    std::fs::write(svg, doc).map_err(|source| RunError::Io {
        path: svg.to_path_buf(),
        source,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
