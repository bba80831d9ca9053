//! Mean test-accuracy curves with ±1 std bands as a standalone SVG.

use std::fmt::Write;
use std::fs;
use std::path::Path;

use crate::error::{ExperimentError, Result};
use crate::summary::SummaryReport;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

fn color(method: &str, index: usize) -> &'static str {
    const CYCLE: [&str; 6] = ["#8c564b", "#e377c2", "#17becf", "#bcbd22", "#ff7f0e", "#7f7f7f"];
    match method {
        "none" => "#555555",
        "constant" => "#1f77b4",
        "curriculum" => "#2ca02c",
        "anti" => "#d62728",
        "switch" => "#9467bd",
        _ => CYCLE[index % CYCLE.len()],
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG text for `report`. Equal reports give identical text.
pub fn render_svg(report: &SummaryReport) -> Result<String> {
    if report.methods.is_empty() || report.methods.iter().any(|m| m.steps.is_empty()) {
        return Err(ExperimentError::Config("cannot plot an empty report".into()));
    }
    let steps = report.methods.iter().flat_map(|m| m.steps.iter().copied());
    let x_min = steps.clone().min().unwrap() as f64;
    let x_max = steps.max().unwrap() as f64;
    let (x_min, x_max) = if x_max > x_min { (x_min, x_max) } else { (x_min - 1.0, x_max + 1.0) };
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for m in &report.methods {
        for (mu, sd) in m.mean.iter().zip(&m.std) {
            y_min = y_min.min(mu - sd);
            y_max = y_max.max(mu + sd);
        }
    }
    let pad = ((y_max - y_min) * 0.05).max(0.05);
    let y_min = (y_min - pad).max(0.0);
    let y_max = (y_max + pad).min(1.0);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();

    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let y = y_min + f * (y_max - y_min);
        let x = x_min + f * (x_max - x_min);
        writeln!(
            svg,
            r##"<line x1="{LEFT:.2}" y1="{yy:.2}" x2="{x2:.2}" y2="{yy:.2}" stroke="#e0e0e0"/><text x="{tx:.2}" y="{ty:.2}" text-anchor="end">{y:.3}</text>"##,
            yy = sy(y),
            x2 = LEFT + plot_w,
            tx = LEFT - 6.0,
            ty = sy(y) + 4.0,
        )
        .unwrap();
        writeln!(
            svg,
            r##"<line x1="{xx:.2}" y1="{b:.2}" x2="{xx:.2}" y2="{b2:.2}" stroke="black"/><text x="{xx:.2}" y="{ty:.2}" text-anchor="middle">{x:.0}</text>"##,
            xx = sx(x),
            b = TOP + plot_h,
            b2 = TOP + plot_h + 5.0,
            ty = TOP + plot_h + 18.0,
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">gradient updates</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 18.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="18" y="{y:.2}" text-anchor="middle" transform="rotate(-90 18 {y:.2})">test accuracy</text>"#,
        y = TOP + plot_h / 2.0
    )
    .unwrap();

    for (i, m) in report.methods.iter().enumerate() {
        let c = color(&m.method, i);
        if m.std.iter().any(|&s| s > 0.0) {
            let upper = m.steps.iter().zip(m.mean.iter().zip(&m.std)).map(|(&t, (mu, sd))| (t, mu + sd));
            let lower = m.steps.iter().zip(m.mean.iter().zip(&m.std)).rev().map(|(&t, (mu, sd))| (t, mu - sd));
            let points: Vec<String> = upper
                .chain(lower)
                .map(|(t, y)| format!("{:.2},{:.2}", sx(t as f64), sy(y.clamp(y_min, y_max))))
                .collect();
            writeln!(svg, r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#, points.join(" ")).unwrap();
        }
        let points: Vec<String> = m
            .steps
            .iter()
            .zip(&m.mean)
            .map(|(&t, &y)| format!("{:.2},{:.2}", sx(t as f64), sy(y)))
            .collect();
        writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, points.join(" ")).unwrap();

        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&m.method)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(report: &SummaryReport, out_path: &Path) -> Result<()> {
    let svg = render_svg(report)?;
    fs::write(out_path, svg).map_err(|e| ExperimentError::io(out_path, e))
}
