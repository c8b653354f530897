//! Self-contained SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{AggregateSeries, Overlay};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f3b73", "#2f6fb0", "#3f9fd1", "#63c1c4", "#9fd9a8", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#a6761d",
];

#[derive(Clone, Debug, PartialEq)]
pub struct AxesSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

/// Six significant digits, trailing zeros trimmed.
pub fn fmt6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        let s = format!("{v:.5e}");
        let (m, e) = s.split_once('e').unwrap_or((&s, "0"));
        let m = m.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

struct Frame {
    x_max: f64,
    y_lo: f64,
    y_hi: f64,
    log_y: bool,
}

impl Frame {
    fn tx(&self, t: f64) -> f64 {
        LEFT + (WIDTH - LEFT - RIGHT) * if self.x_max > 0.0 { t / self.x_max } else { 0.0 }
    }

    fn ty(&self, v: f64) -> Option<f64> {
        let y = if self.log_y {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        if !y.is_finite() {
            return None;
        }
        let frac = (y - self.y_lo) / (self.y_hi - self.y_lo);
        Some(HEIGHT - BOTTOM - (HEIGHT - TOP - BOTTOM) * frac)
    }
}

fn y_range(values: impl Iterator<Item = f64>, log_y: bool) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        let y = if log_y {
            if v <= 0.0 {
                continue;
            }
            v.log10()
        } else {
            v
        };
        if y.is_finite() {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + hi.abs()) {
        let pad = if log_y { 0.5 } else { 0.1 * hi.abs().max(1.0) };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Polyline path segments, broken where a point cannot be drawn.
fn segments(frame: &Frame, values: &[f64]) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for (t, &v) in values.iter().enumerate() {
        match frame.ty(v) {
            Some(y) => {
                if !cur.is_empty() {
                    cur.push(' ');
                }
                let _ = write!(cur, "{},{}", fmt6(frame.tx(t as f64)), fmt6(y));
            }
            None => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn series_label(s: &AggregateSeries) -> String {
    let mut label = format!("{}={}", s.sweep_param.as_str(), fmt6(s.sweep_value));
    if s.sweep_value.is_nan() {
        label = s.metric.as_str().to_string();
    }
    if let Some(id) = s.text_id {
        if s.sweep_param != crate::experiments::SweepParam::P {
            let _ = write!(label, " text {id}");
        }
    }
    label
}

/// Renders the plot; `series` must be non-empty.
pub fn svg_plot(series: &[AggregateSeries], overlays: &[Overlay], axes: &AxesSpec) -> Result<String> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let x_max = series
        .iter()
        .map(|s| s.mean.len())
        .chain(overlays.iter().map(|o| o.values.len()))
        .max()
        .unwrap_or(1)
        .saturating_sub(1) as f64;
    let all = series
        .iter()
        .flat_map(|s| s.mean.iter().copied())
        .chain(overlays.iter().flat_map(|o| o.values.iter().copied()));
    let (y_lo, y_hi) = y_range(all, axes.log_y);
    let frame = Frame {
        x_max,
        y_lo,
        y_hi,
        log_y: axes.log_y,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {} {}" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        WIDTH, HEIGHT, WIDTH, HEIGHT
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        fmt6((LEFT + WIDTH - RIGHT) / 2.0),
        escape(&axes.title)
    );

    // axes box and ticks
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        fmt6(x1 - x0),
        fmt6(y0 - y1)
    );
    for i in 0..=5 {
        let t = x_max * i as f64 / 5.0;
        let x = frame.tx(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"#,
            fmt6(x),
            fmt6(y0),
            fmt6(y0 + 5.0),
            fmt6(y0 + 20.0),
            fmt6(t.round())
        );
    }
    let ticks: Vec<f64> = if axes.log_y {
        let (a, b) = (y_lo.ceil() as i32, y_hi.floor() as i32);
        let step = ((b - a) / 8).max(1);
        (a..=b).step_by(step as usize).map(|e| 10f64.powi(e)).collect()
    } else {
        (0..=5).map(|i| y_lo + (y_hi - y_lo) * i as f64 / 5.0).collect()
    };
    for v in ticks {
        if let Some(y) = frame.ty(v) {
            let _ = writeln!(
                svg,
                r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"#,
                fmt6(x0 - 5.0),
                fmt6(y),
                fmt6(x0),
                fmt6(x0 - 8.0),
                fmt6(y + 4.0),
                fmt6(v)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        fmt6((x0 + x1) / 2.0),
        fmt6(HEIGHT - 15.0),
        escape(&axes.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
        fmt6((y0 + y1) / 2.0),
        escape(&axes.y_label)
    );

    let mut legend: Vec<(String, String, bool)> = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for seg in segments(&frame, &s.mean) {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{seg}"/>"#
            );
        }
        legend.push((series_label(s), color.to_string(), false));
    }
    for o in overlays {
        let color = o
            .sweep_value
            .and_then(|v| series.iter().position(|s| s.sweep_value == v))
            .map_or("black", |i| PALETTE[i % PALETTE.len()]);
        for seg in segments(&frame, &o.values) {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1" stroke-dasharray="6,4" points="{seg}"/>"#
            );
        }
        let label = match o.sweep_value {
            Some(v) => format!("{} ({})", o.label(), fmt6(v)),
            None => o.label().to_string(),
        };
        legend.push((label, color.to_string(), true));
    }
    for (i, (label, color, dashed)) in legend.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{color}" stroke-width="2"{dash}/><text x="{3}" y="{4}">{5}</text>"#,
            fmt6(x1 + 10.0),
            fmt6(y),
            fmt6(x1 + 34.0),
            fmt6(x1 + 40.0),
            fmt6(y + 4.0),
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg_plot(series: &[AggregateSeries], overlays: &[Overlay], axes: &AxesSpec, path: &Path) -> Result<()> {
    super::csv::write_text(path, &svg_plot(series, overlays, axes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Metric, OverlayKind, SweepParam, TailSummary};

    fn flat(v: f64, n: usize) -> AggregateSeries {
        AggregateSeries {
            metric: Metric::H,
            text_id: None,
            sweep_param: SweepParam::Sigma2,
            sweep_value: 1.0,
            mean: vec![v; n],
            stderr: vec![0.0; n],
            runs: vec![1; n],
            tail: TailSummary {
                from: 0,
                mean: v,
                stderr: 0.0,
            },
        }
    }

    fn axes(log_y: bool) -> AxesSpec {
        AxesSpec {
            title: "t".into(),
            x_label: "t".into(),
            y_label: "H".into(),
            log_y,
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(123.456789), "123.457");
        assert_eq!(fmt6(0.000123456789), "0.000123457");
        assert_eq!(fmt6(2.0), "2");
        assert_eq!(fmt6(1e-9), "1e-9");
        assert_eq!(fmt6(0.0), "0");
    }

    #[test]
    fn empty_series_rejected() {
        assert!(matches!(svg_plot(&[], &[], &axes(false)), Err(Error::EmptySeries)));
    }

    #[test]
    fn flat_series_is_horizontal() {
        let svg = svg_plot(&[flat(0.5, 4)], &[], &axes(false)).unwrap();
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
        assert!(!svg.contains("stroke-dasharray"));
    }

    #[test]
    fn overlays_are_dashed() {
        let o = Overlay {
            kind: OverlayKind::DiversityFloor,
            sweep_value: None,
            values: (0..10).map(|t| 0.8 * 0.999f64.powi(t)).collect(),
        };
        let svg = svg_plot(&[flat(0.5, 10)], &[o], &axes(true)).unwrap();
        assert!(svg.contains(r#"stroke-dasharray="6,4" points="#));
        assert!(svg.contains("viewBox=\"0 0 800 600\""));
    }
}
