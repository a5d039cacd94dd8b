//! CSV tables, SVG plots and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Provenance written as `#` comment lines at the top of every CSV.
#[derive(Clone, Debug, Serialize)]
pub struct Stamp {
    pub config_hash: String,
    pub master_seed: u64,
    pub task: String,
}

/// A CSV table kept in memory until written.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, stamp: &Stamp) -> String {
        let mut s = String::new();
        writeln!(s, "# config_hash={}", stamp.config_hash).unwrap();
        writeln!(s, "# master_seed={}", stamp.master_seed).unwrap();
        writeln!(s, "# task={}", stamp.task).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        s.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"));
        s
    }
}

/// Round-trip exact formatting for floats.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Coordinates joined with `;` so they fit in one CSV field.
pub fn coords(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io_at(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_at(&path, e))?;
    Ok(path)
}

fn io_at(p: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
}

/// One polyline of a line plot.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal SVG line plot with axes ranges in the corners.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h, pad) = (640.0, 420.0, 56.0);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(title)).unwrap();
    writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, esc(xlabel)).unwrap();
    writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, esc(ylabel)).unwrap();
    writeln!(s, r#"<text x="{pad}" y="{}">{x0:.3}</text>"#, h - pad + 16.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{x1:.3}</text>"#, w - pad, h - pad + 16.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y0:.3}</text>"#, pad - 4.0, h - pad).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y1:.3}</text>"#, pad - 4.0, pad + 10.0).unwrap();
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
        for &(x, y) in &ser.points {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y)).unwrap();
        }
        writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{}</text>"#, w - pad - 120.0, pad + 16.0 * (i + 1) as f64, esc(&ser.label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub task: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub master_seed: u64,
    pub workers: usize,
    pub wall_time_seconds: f64,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}
