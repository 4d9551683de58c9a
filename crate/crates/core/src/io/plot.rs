//! Line plots as a CSV table plus an SVG rendering of it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::store::OutputDir;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { name: name.into(), x, y }
    }
}

fn check(series: &[Series]) -> Result<()> {
    if series.is_empty() || series.iter().any(|s| s.x.is_empty()) {
        return Err(Error::InvalidParameter("plot needs at least one non-empty series".into()));
    }
    if let Some(s) = series.iter().find(|s| s.x.len() != s.y.len()) {
        return Err(Error::DimensionMismatch { expected: s.x.len(), got: s.y.len() });
    }
    if series.iter().any(|s| s.name.contains([',', '"', '\n'])) {
        return Err(Error::InvalidParameter("series names must not contain commas, quotes or newlines".into()));
    }
    Ok(())
}

/// Long-format table: `series,<x_label>,<y_label>`.
pub fn plot_csv(series: &[Series], x_label: &str, y_label: &str) -> Result<String> {
    check(series)?;
    let mut out = format!("series,{x_label},{y_label}\n");
    for s in series {
        for (x, y) in s.x.iter().zip(&s.y) {
            writeln!(out, "{},{x},{y}", s.name).expect("string write");
        }
    }
    Ok(out)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Deterministic SVG of the same data. Non-finite points are skipped.
pub fn plot_svg(series: &[Series], x_label: &str, y_label: &str) -> Result<String> {
    check(series)?;
    let finite = || {
        series
            .iter()
            .flat_map(|s| s.x.iter().zip(&s.y))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
    };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in finite() {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 == 0.0 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 == 0.0 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(w, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    writeln!(w, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#).unwrap();
    for (v, x) in [(x0, l), (x1, r)] {
        writeln!(w, r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{v:.4}</text>"#, b + 16.0)
            .unwrap();
    }
    for (v, y) in [(y0, b), (y1, t)] {
        writeln!(w, r#"<text x="{:.2}" y="{y:.2}" font-size="11" text-anchor="end">{v:.4}</text>"#, l - 4.0).unwrap();
    }
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#, W / 2.0, H - 8.0, escape(x_label))
        .unwrap();
    writeln!(
        w,
        r#"<text x="14" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        if pts.len() > 1 {
            writeln!(w, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "))
                .unwrap();
        }
        for p in &pts {
            let (cx, cy) = p.split_once(',').expect("formatted pair");
            writeln!(w, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#).unwrap();
        }
        writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">{}</text>"#,
            r - 120.0,
            t + 14.0 * (i as f64 + 1.0),
            escape(&s.name)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes `<stem>.csv` and `<stem>.svg` into `out`.
pub fn emit_plot(out: &mut OutputDir, stem: &str, series: &[Series], x_label: &str, y_label: &str) -> Result<()> {
    let csv = plot_csv(series, x_label, y_label)?;
    let svg = plot_svg(series, x_label, y_label)?;
    out.write_bytes(&format!("{stem}.csv"), csv.as_bytes())?;
    out.write_bytes(&format!("{stem}.svg"), svg.as_bytes())?;
    Ok(())
}
