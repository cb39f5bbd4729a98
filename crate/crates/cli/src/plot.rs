//! Learning curves as standalone SVG plus a CSV of the plotted numbers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bilevel_core::{Error, Result};

/// What to plot and how to smooth it.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    /// Weight of the previous smoothed value; 0 plots the raw series.
    pub ema: f64,
    pub title: String,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self { x: "env_steps".into(), y: "eval_return".into(), ema: 0.6, title: "evaluation return".into() }
    }
}

/// One curve: several seeds of the same run mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub runs: Vec<PathBuf>,
}

/// Smoothed curve with its band across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// `s₀ = v₀`, `sₜ = α·sₜ₋₁ + (1 − α)·vₜ`.
pub fn ema(values: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let s = match out.last() {
            Some(&prev) => alpha * prev + (1.0 - alpha) * v,
            None => v,
        };
        out.push(s);
    }
    out
}

/// `(x, y)` pairs of a metrics CSV, skipping rows where `y` is empty.
pub fn read_points(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?.split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Format(format!("{} has no column `{name}`", path.display())))
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let cell = |i: usize| cells.get(i).map(|c| c.trim()).unwrap_or("");
        if cell(yi).is_empty() {
            continue;
        }
        let parse = |i: usize| {
            cell(i).parse::<f64>().map_err(|_| Error::Format(format!("{} row {}: bad number `{}`", path.display(), n + 1, cell(i))))
        };
        points.push((parse(xi)?, parse(yi)?));
    }
    Ok(points)
}

pub fn build_curve(series: &Series, spec: &PlotSpec) -> Result<Curve> {
    if series.runs.is_empty() {
        return Err(Error::Format(format!("series `{}` has no runs", series.label)));
    }
    let runs: Vec<Vec<(f64, f64)>> = series.runs.iter().map(|p| read_points(p, &spec.x, &spec.y)).collect::<Result<_>>()?;
    let n = runs.iter().map(Vec::len).min().unwrap_or(0);
    let smoothed: Vec<Vec<f64>> =
        runs.iter().map(|r| ema(&r[..n].iter().map(|p| p.1).collect::<Vec<_>>(), spec.ema)).collect();
    let at = |i: usize| smoothed.iter().map(move |s| s[i]);
    Ok(Curve {
        label: series.label.clone(),
        x: runs[0][..n].iter().map(|p| p.0).collect(),
        mean: (0..n).map(|i| at(i).sum::<f64>() / smoothed.len() as f64).collect(),
        min: (0..n).map(|i| at(i).fold(f64::INFINITY, f64::min)).collect(),
        max: (0..n).map(|i| at(i).fold(f64::NEG_INFINITY, f64::max)).collect(),
    })
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub fn render_svg(curves: &[Curve], spec: &PlotSpec) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let all_x = curves.iter().flat_map(|c| c.x.iter().copied());
    let (x0, x1) = all_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let all_y = curves.iter().flat_map(|c| c.min.iter().chain(&c.max).copied());
    let (mut y0, mut y1) = all_y.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (x0, x1) = match (x0.is_finite(), x1 > x0) {
        (true, true) => (x0, x1),
        (true, false) => (x0 - 1.0, x0 + 1.0),
        _ => (0.0, 1.0),
    };
    if !(y0.is_finite() && y1 > y0) {
        y0 = if y0.is_finite() { y0 - 1.0 } else { 0.0 };
        y1 = y0 + 2.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (w - right + left) / 2.0, escape(&spec.title)).unwrap();
    let (bx, by) = (h - bottom, w - right);
    writeln!(s, r#"<line x1="{left}" y1="{bx}" x2="{by}" y2="{bx}" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bx}" stroke="black"/>"#).unwrap();
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        writeln!(s, r#"<line x1="{0:.1}" y1="{bx}" x2="{0:.1}" y2="{1}" stroke="black"/><text x="{0:.1}" y="{2}" text-anchor="middle">{3}</text>"#, px(xv), bx + 5.0, bx + 19.0, tick(xv)).unwrap();
        writeln!(s, r##"<line x1="{left}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#dddddd"/><text x="{2}" y="{3:.1}" text-anchor="end">{4}</text>"##, py(yv), by, left - 6.0, py(yv) + 4.0, tick(yv)).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (left + by) / 2.0, h - 10.0, escape(&spec.x)).unwrap();
    writeln!(s, r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#, (top + bx) / 2.0, escape(&spec.y)).unwrap();
    for (k, c) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if c.x.is_empty() {
            continue;
        }
        let upper = c.x.iter().zip(&c.max).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)));
        let lower = c.x.iter().zip(&c.min).rev().map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)));
        let band: Vec<String> = upper.chain(lower).collect();
        writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" ")).unwrap();
        let line: Vec<String> = c.x.iter().zip(&c.mean).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" ")).unwrap();
        let ly = top + 20.0 * k as f64;
        writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{color}" stroke-width="3"/><text x="{3}" y="{4}">{5}</text>"#, by + 15.0, ly, by + 35.0, by + 40.0, ly + 4.0, escape(&c.label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.0}", v)
    } else {
        format!("{:.2}", v)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn sidecar_csv(curves: &[Curve], spec: &PlotSpec) -> String {
    let mut s = format!("label,{},mean,min,max\n", spec.x);
    for c in curves {
        for i in 0..c.x.len() {
            writeln!(s, "{},{},{},{},{}", c.label, c.x[i], c.mean[i], c.min[i], c.max[i]).unwrap();
        }
    }
    s
}

/// Write `<stem>.svg` and `<stem>.csv` into `out_dir`; returns the curves.
pub fn emit_plot(series: &[Series], spec: &PlotSpec, out_dir: &Path, stem: &str) -> Result<Vec<Curve>> {
    if !(0.0..1.0).contains(&spec.ema) {
        return Err(Error::Config(format!("ema factor must lie in [0, 1), got {}", spec.ema)));
    }
    let curves: Vec<Curve> = series.iter().map(|s| build_curve(s, spec)).collect::<Result<_>>()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(format!("{stem}.svg")), render_svg(&curves, spec))?;
    std::fs::write(out_dir.join(format!("{stem}.csv")), sidecar_csv(&curves, spec))?;
    Ok(curves)
}
