//! Minimal hand-written SVG line plots.

use std::fmt::Write as _;

use crate::error::{LabError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStyle {
    /// FOM best-so-far and other primary curves.
    Solid,
    /// Raw FOM curve drawn underneath the best-so-far curve.
    SolidGrey,
    /// GMRES.
    DashDot,
    /// Bounds.
    Dashed,
}

impl LineStyle {
    fn attrs(self) -> &'static str {
        match self {
            LineStyle::Solid => r##"stroke="#1f3b8c" stroke-width="2""##,
            LineStyle::SolidGrey => r##"stroke="#9a9a9a" stroke-width="1.2""##,
            LineStyle::DashDot => r##"stroke="#c0392b" stroke-width="1.8" stroke-dasharray="9 4 2 4""##,
            LineStyle::Dashed => r##"stroke="#222222" stroke-width="1.5" stroke-dasharray="6 4""##,
        }
    }
}

/// One curve; `None` entries (and nonpositive values on a log axis) leave a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<Option<f64>>,
    pub style: LineStyle,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>, style: LineStyle) -> Self {
        Self {
            name: name.into(),
            values,
            style,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_y: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series against their index (`k = 0, 1, …`).
pub fn render_svg(series: &[Series], spec: &PlotSpec<'_>) -> Result<String> {
    let len = series.first().map_or(0, |s| s.values.len());
    if series.iter().any(|s| s.values.len() != len) {
        return Err(LabError::invalid("all plot series must have the same length"));
    }
    let usable = |v: f64| v.is_finite() && (!spec.log_y || v > 0.0);
    let map_y = |v: f64| if spec.log_y { v.log10() } else { v };

    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|s| s.values.iter().flatten())
        .filter(|v| usable(**v))
        .map(|&v| map_y(v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if spec.log_y {
        lo = lo.floor();
        hi = hi.ceil();
        if hi <= lo {
            hi = lo + 1.0;
        }
    } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = hi.abs().max(1.0) * 0.1;
        lo -= pad;
        hi += pad;
    }
    let x_max = (len.max(2) - 1) as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |k: f64| LEFT + plot_w * k / x_max;
    let py = |y: f64| TOP + plot_h * (hi - y) / (hi - lo);

    let mut out = String::new();
    let w = &mut out;
    // Writing into a String cannot fail.
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(spec.title)
    );
    let _ = writeln!(
        w,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#000"/>"##
    );

    // y ticks
    let y_ticks: Vec<f64> = if spec.log_y {
        let step = ((hi - lo) / 10.0).ceil().max(1.0);
        let mut t = Vec::new();
        let mut y = lo;
        while y <= hi + 1e-9 {
            t.push(y);
            y += step;
        }
        t
    } else {
        (0..=5).map(|i| lo + (hi - lo) * i as f64 / 5.0).collect()
    };
    for y in y_ticks {
        let yy = py(y);
        let label = if spec.log_y {
            format!("1e{}", y.round() as i64)
        } else {
            format!("{y:.3}")
        };
        let _ = writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#e4e4e4"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            yy + 4.0
        );
    }
    // x ticks
    let x_step = nice_step(x_max / 8.0);
    let mut k = 0.0;
    while k <= x_max + 1e-9 {
        let xx = px(k);
        let _ = writeln!(
            w,
            r##"<line x1="{xx:.2}" y1="{:.2}" x2="{xx:.2}" y2="{:.2}" stroke="#000"/><text x="{xx:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 19.0,
            k as i64
        );
        k += x_step;
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 18.0,
        escape(spec.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(spec.y_label)
    );

    for s in series {
        for segment in segments(&s.values, usable) {
            let pts: Vec<String> = segment
                .iter()
                .map(|&(k, v)| format!("{:.2},{:.2}", px(k as f64), py(map_y(v))))
                .collect();
            if pts.len() == 1 {
                let (cx, cy) = pts[0].split_once(',').expect("formatted above");
                let _ = writeln!(w, r#"<circle cx="{cx}" cy="{cy}" r="1.5" fill="none" {}/>"#, s.style.attrs());
            } else {
                let _ = writeln!(
                    w,
                    r#"<polyline fill="none" {} points="{}"/>"#,
                    s.style.attrs(),
                    pts.join(" ")
                );
            }
        }
    }

    // legend
    let lx = LEFT + plot_w + 14.0;
    for (i, s) in series.iter().enumerate() {
        let ly = TOP + 14.0 + 22.0 * i as f64;
        let _ = writeln!(
            w,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" {}/><text x="{}" y="{}">{}</text>"#,
            lx + 30.0,
            s.style.attrs(),
            lx + 36.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(out)
}

fn nice_step(raw: f64) -> f64 {
    if raw <= 1.0 {
        return 1.0;
    }
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

/// Splits a series into runs of consecutive drawable points.
fn segments(values: &[Option<f64>], usable: impl Fn(f64) -> bool) -> Vec<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (k, v) in values.iter().enumerate() {
        match v {
            Some(v) if usable(*v) => cur.push((k, *v)),
            _ => {
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
