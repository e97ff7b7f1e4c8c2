use std::fmt::Write;

use super::ClusterSummary;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 120.0;
const MARGIN: f64 = 24.0;

fn polyline(values: &[f64], lo: f64, hi: f64, x0: f64, y0: f64) -> String {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = values.len().max(2) - 1;
    let mut pts = String::new();
    for (j, v) in values.iter().enumerate() {
        let x = x0 + PANEL_W * j as f64 / n as f64;
        let y = y0 + PANEL_H * (1.0 - (v - lo) / span);
        let _ = write!(pts, "{x:.2},{y:.2} ");
    }
    pts.trim_end().to_string()
}

/// Small multiples: one panel per channel, grey segment traces and a dashed
/// black mean.
pub fn summary_svg(summary: &ClusterSummary) -> String {
    let cols = 3usize.min(summary.channels.len().max(1));
    let rows = summary.channels.len().div_ceil(cols);
    let width = cols as f64 * (PANEL_W + MARGIN) + MARGIN;
    let height = rows as f64 * (PANEL_H + 2.0 * MARGIN) + MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (c, name) in summary.channels.iter().enumerate() {
        let x0 = MARGIN + (c % cols) as f64 * (PANEL_W + MARGIN);
        let y0 = 2.0 * MARGIN + (c / cols) as f64 * (PANEL_H + 2.0 * MARGIN);
        let all = summary.segments.iter().flat_map(|t| t.values[c].iter()).chain(&summary.mean[c]);
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let _ = writeln!(
            svg,
            r#"<text x="{x0:.2}" y="{:.2}">{}</text>"#,
            y0 - 6.0,
            name.replace('&', "&amp;").replace('<', "&lt;")
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{x0:.2}" y="{y0:.2}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#999"/>"##
        );
        for t in &summary.segments {
            let _ = writeln!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="#bbb" stroke-width="1"/>"##,
                polyline(&t.values[c], lo, hi, x0, y0)
            );
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="5,3"/>"#,
            polyline(&summary.mean[c], lo, hi, x0, y0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
