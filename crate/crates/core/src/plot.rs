//! Minimal SVG line plots for currents and spectra.

use std::fmt::Write as _;
use std::path::Path;

use crate::observables::{CurrentRecord, Spectrum};
use crate::units::{from_internal, Unit};
use crate::{Error, Result};

const PANEL_W: f64 = 720.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 60.0;

struct Series<'a> {
    label: &'a str,
    colour: &'a str,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * lo.abs().max(1e-300) {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

fn panel(svg: &mut String, top: f64, title: &str, x_label: &str, series: &[Series<'_>]) {
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * PANEL_W;
    let py = |y: f64| top + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="14">{title}</text>"#, MARGIN, top - 8.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{x_label}</text>"#,
        MARGIN + 0.5 * PANEL_W,
        top + PANEL_H + 30.0
    );
    for (v, anchor_y) in [(y0, top + PANEL_H), (y1, top + 10.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{anchor_y}" font-size="10" text-anchor="end">{v:.3e}</text>"#,
            MARGIN - 4.0
        );
    }
    for (v, anchor_x) in [(x0, MARGIN), (x1, MARGIN + PANEL_W)] {
        let _ = writeln!(
            svg,
            r#"<text x="{anchor_x}" y="{}" font-size="10" text-anchor="middle">{v:.4}</text>"#,
            top + PANEL_H + 14.0
        );
    }
    for (i, s) in series.iter().enumerate() {
        let mut points = String::new();
        for (x, y) in s.x.iter().zip(&s.y) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", px(*x), py(*y));
            }
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{}"/>"#,
            s.colour,
            points.trim_end()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" fill="{}">{}</text>"#,
            MARGIN + PANEL_W - 120.0,
            top + 16.0 + 14.0 * i as f64,
            s.colour,
            s.label
        );
    }
}

fn document(panels: usize) -> (String, f64) {
    let height = panels as f64 * (PANEL_H + 2.0 * MARGIN) + MARGIN;
    let width = PANEL_W + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    (svg, PANEL_H + 2.0 * MARGIN)
}

/// Three stacked panels: total current with the field, and both intraband
/// currents, against time in fs.
pub fn currents_svg(record: &CurrentRecord) -> String {
    let t: Vec<f64> = record.samples.iter().map(|s| from_internal(s.t, Unit::Femtosecond)).collect();
    let (mut svg, step) = document(3);
    let field_max = record.samples.iter().map(|s| s.field.abs()).fold(0.0, f64::max);
    let j_max = record.samples.iter().map(|s| s.velocity.total.abs()).fold(0.0, f64::max);
    let field_scale = if field_max > 0.0 { j_max / field_max } else { 0.0 };
    panel(
        &mut svg,
        MARGIN,
        "total current, velocity gauge",
        "t (fs)",
        &[
            Series {
                label: "J_v",
                colour: "#1f77b4",
                x: t.clone(),
                y: record.series(|s| s.velocity.total),
            },
            Series {
                label: "F (scaled)",
                colour: "#999999",
                x: t.clone(),
                y: record.series(|s| s.field * field_scale),
            },
        ],
    );
    panel(
        &mut svg,
        MARGIN + step,
        "total current, length gauge",
        "t (fs)",
        &[Series {
            label: "J_l",
            colour: "#d62728",
            x: t.clone(),
            y: record.series(|s| s.length.total),
        }],
    );
    panel(
        &mut svg,
        MARGIN + 2.0 * step,
        "intraband current",
        "t (fs)",
        &[
            Series {
                label: "j_v",
                colour: "#1f77b4",
                x: t.clone(),
                y: record.series(|s| s.velocity.intra),
            },
            Series {
                label: "j_l",
                colour: "#d62728",
                x: t,
                y: record.series(|s| s.length.intra),
            },
        ],
    );
    svg.push_str("</svg>\n");
    svg
}

/// `log10(power)` against harmonic order.
pub fn spectrum_svg(spectrum: &Spectrum) -> String {
    let floor = spectrum.power.iter().copied().fold(0.0, f64::max) * 1e-16;
    let y: Vec<f64> = spectrum.power.iter().map(|p| p.max(floor).max(1e-300).log10()).collect();
    let (mut svg, _) = document(1);
    panel(
        &mut svg,
        MARGIN,
        "HHG spectrum (log10 power)",
        "harmonic order",
        &[Series {
            label: "|J(ω)|²",
            colour: "#1f77b4",
            x: spectrum.harmonic_order.clone(),
            y,
        }],
    );
    svg.push_str("</svg>\n");
    svg
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_currents_svg(path: &Path, record: &CurrentRecord) -> Result<()> {
    write(path, &currents_svg(record))
}

pub fn write_spectrum_svg(path: &Path, spectrum: &Spectrum) -> Result<()> {
    write(path, &spectrum_svg(spectrum))
}
