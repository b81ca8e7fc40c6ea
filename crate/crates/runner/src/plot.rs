//! Median curves with interquartile bands as a standalone SVG document.

use std::fmt::Write;

use crate::sweep::QuartilePoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Round numbers for axis ticks covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

/// One line per series (its median) over a shaded interquartile band.
/// Axis labels: iterations of training against average undiscounted return.
pub fn emit_svg(series: &[(String, Vec<QuartilePoint>)]) -> String {
    let points = series.iter().flat_map(|(_, c)| c);
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, 0.0f64, 0.0f64);
    for p in points {
        x_max = x_max.max(p.iteration as f64);
        y_min = y_min.min(p.lower);
        y_max = y_max.max(p.upper);
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + x / x_max * plot_w;
    let sy = |y: f64| TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    for t in ticks(0.0, x_max) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"##,
            TOP,
            TOP + plot_h,
            TOP + plot_h + 16.0
        );
    }
    for t in ticks(y_min, y_max) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0,
            (t * 1e6).round() / 1e6
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );

    for (i, (label, curve)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if curve.is_empty() {
            continue;
        }
        let mut band = String::new();
        for p in curve {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.iteration as f64), sy(p.upper));
        }
        for p in curve.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.iteration as f64), sy(p.lower));
        }
        let line: Vec<String> = curve
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.iteration as f64), sy(p.median)))
            .collect();
        let _ = writeln!(
            s,
            r#"<g class="series" data-label="{lbl}"><polygon points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/><polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/></g>"#,
            line.join(" "),
            lbl = escape(label),
            band = band.trim_end()
        );
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iterations of training</text>
<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">average undiscounted return</text>
</svg>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        TOP + plot_h / 2.0
    );
    s
}
