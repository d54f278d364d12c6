//! Result files: per-cell and per-trial CSV, a JSON manifest and static SVG plots.
//!
//! Floats are written with Rust's shortest round-trip formatting so reruns
//! produce byte-identical tables.

use super::{BenchConfig, BenchRecord};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{self, Write};

pub const RECORD_HEADER: &str = "q_i,sigma_n,sigma_fr_hz,n_points,span_ratio,grid,ratio,n_trials,n_failed,\
median_rel_err,rel_err_lo,rel_err_hi,median_rel_sigma,rel_sigma_lo,rel_sigma_hi,coverage_2sigma,mean_rel_bias,h_density";

pub const TRIAL_HEADER: &str =
    "q_i,sigma_n,sigma_fr_hz,n_points,span_ratio,grid,trial,seed,converged,fit_q_i,sigma_q_i,chi2,error";

fn cell_prefix(r: &BenchRecord) -> String {
    let c = &r.cell;
    format!(
        "{},{},{},{},{},{}",
        c.q_i,
        c.sigma_n,
        c.sigma_fr_hz,
        c.n_points,
        c.span_ratio,
        c.grid.as_str()
    )
}

pub fn write_records_csv<W: Write>(records: &[BenchRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            cell_prefix(r),
            r.ratio,
            r.n_trials,
            r.n_failed,
            r.median_rel_err,
            r.rel_err_ci.0,
            r.rel_err_ci.1,
            r.median_rel_sigma,
            r.rel_sigma_ci.0,
            r.rel_sigma_ci.1,
            r.coverage_2sigma,
            r.mean_rel_bias,
            r.h_density
        )?;
    }
    Ok(())
}

pub fn write_trials_csv<W: Write>(records: &[BenchRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{TRIAL_HEADER}")?;
    for r in records {
        let prefix = cell_prefix(r);
        for t in &r.trials {
            let err = t.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(
                w,
                "{prefix},{},{},{},{},{},{},{err}",
                t.trial, t.seed, t.converged, t.q_i, t.sigma_q_i, t.chi2
            )?;
        }
    }
    Ok(())
}

/// Run metadata written next to the CSV tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub analysis: String,
    pub config: BenchConfig,
    pub n_cells: usize,
    pub n_trials: usize,
    pub n_failed: usize,
    pub converged_fraction: f64,
    pub threads: usize,
    pub elapsed_s: f64,
    /// Analysis-specific results (slopes, ratios, deviations).
    pub summary: serde_json::Value,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi, log }
    }

    fn unit(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let v = if self.log { v.log10() } else { v };
        Some((v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            (a..=b)
                .map(|k| k as f64)
                .filter(|k| *k >= self.lo - 1e-9 && *k <= self.hi + 1e-9)
                .map(|k| ((k - self.lo) / (self.hi - self.lo), format!("1e{k}")))
                .collect()
        } else {
            (0..=4)
                .map(|k| {
                    let u = k as f64 / 4.0;
                    (u, format!("{:.3}", self.lo + u * (self.hi - self.lo)))
                })
                .collect()
        }
    }
}

fn frame(svg: &mut String, title: &str, x_label: &str, y_label: &str, xs: &Scale, ys: &Scale) {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (u, label) in xs.ticks() {
        let x = LEFT + u * pw;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0
        );
    }
    for (u, label) in ys.ticks() {
        let y = TOP + (1.0 - u) * ph;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
}

/// Line plot with markers; non-finite points break the line.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[PlotSeries], log_x: bool, log_y: bool) -> String {
    let xs = Scale::new(series.iter().flat_map(|s| s.x.iter().copied()), log_x);
    let ys = Scale::new(series.iter().flat_map(|s| s.y.iter().copied()), log_y);
    let mut svg = String::new();
    frame(&mut svg, title, x_label, y_label, &xs, &ys);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut path = String::new();
        let mut pen_down = false;
        for (x, y) in s.x.iter().zip(&s.y) {
            match (xs.unit(*x), ys.unit(*y)) {
                (Some(u), Some(v)) => {
                    let (px, py) = (LEFT + u * pw, TOP + (1.0 - v) * ph);
                    let _ = write!(path, "{}{px:.2},{py:.2} ", if pen_down { "L" } else { "M" });
                    let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}"/>"#);
                    pen_down = true;
                }
                _ => pen_down = false,
            }
        }
        if !path.is_empty() {
            let _ = writeln!(
                svg,
                r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.trim_end()
            );
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT + 10.0,
            W - RIGHT + 30.0,
            W - RIGHT + 35.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heat map of `values[row][col]` over `xs` (columns) and `ys` (rows), both
/// drawn as evenly spaced categories. Missing cells are hatched grey.
pub fn svg_heatmap(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64], values: &[Vec<Option<f64>>]) -> String {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    let flat: Vec<f64> = values.iter().flatten().flatten().copied().filter(|v| v.is_finite()).collect();
    let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (cw, ch) = (pw / xs.len().max(1) as f64, ph / ys.len().max(1) as f64);
    for (j, row) in values.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            let x = LEFT + i as f64 * cw;
            let y = TOP + (ys.len() - 1 - j) as f64 * ch;
            let fill = match v {
                Some(v) if v.is_finite() => {
                    let t = ((v - lo) / span).clamp(0.0, 1.0);
                    let (r, g, b) = (
                        (255.0 * t) as u8,
                        (80.0 + 100.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8,
                        (255.0 * (1.0 - t)) as u8,
                    );
                    format!("rgb({r},{g},{b})")
                }
                _ => "#bbbbbb".to_string(),
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{fill}" stroke="white"/>"#
            );
            if let Some(v) = v {
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{v:.2}</text>"#,
                    x + cw / 2.0,
                    y + ch / 2.0 + 4.0
                );
            }
        }
    }
    for (i, x) in xs.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{x}</text>"#,
            LEFT + (i as f64 + 0.5) * cw,
            TOP + ph + 18.0
        );
    }
    for (j, y) in ys.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{y}</text>"#,
            LEFT - 6.0,
            TOP + (ys.len() - 1 - j) as f64 * ch + ch / 2.0 + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}">range {lo:.3} to {hi:.3}</text>"#,
        W - RIGHT + 10.0,
        TOP + 12.0
    );
    svg.push_str("</svg>\n");
    svg
}
