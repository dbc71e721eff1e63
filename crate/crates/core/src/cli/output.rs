//! CSV tables and log-log SVG plots of a finished sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::experiment::{ResultRow, SummaryRow};

pub const RESULTS_HEADER: &str = "gamma,lambda,trial,method,mse,outer_iters,runtime_ms,converged";
pub const SUMMARY_HEADER: &str = "gamma,method,best_lambda,mean_mse,stderr_mse";

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.gamma,
            r.lambda,
            r.trial,
            r.method.name(),
            r.mse,
            r.outer_iters,
            r.runtime_ms,
            r.converged
        );
    }
    s
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in summary {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.gamma,
            r.method.name(),
            r.best_lambda,
            r.mean_mse,
            r.stderr_mse
        );
    }
    s
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 70.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Log-log plot of best-lambda mean error against sampling rate, one
/// polyline per method. Returns `None` when there is nothing finite to draw.
pub fn summary_svg(summary: &[SummaryRow], title: &str) -> Option<String> {
    let mut methods = Vec::new();
    for s in summary {
        if !methods.contains(&s.method) {
            methods.push(s.method);
        }
    }
    let finite: Vec<&SummaryRow> = summary
        .iter()
        .filter(|s| s.gamma > 0.0 && s.mean_mse > 0.0 && s.mean_mse.is_finite())
        .collect();
    if finite.is_empty() {
        return None;
    }
    let lx = |g: f64| g.log10();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for s in &finite {
        x0 = x0.min(lx(s.gamma));
        x1 = x1.max(lx(s.gamma));
        y0 = y0.min(s.mean_mse.log10());
        y1 = y1.max(s.mean_mse.log10());
    }
    // whole decades on y, a small pad on x
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let pad = ((x1 - x0) * 0.05).max(0.02);
    let (x0, x1) = (x0 - pad, x1 + pad);
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let mut decade = y0 as i32;
    while decade as f64 <= y1 {
        let y = py(decade as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{decade}</text>"##,
            WIDTH - MARGIN,
            MARGIN - 6.0,
            y + 4.0
        );
        decade += 1;
    }
    let mut gammas: Vec<f64> = finite.iter().map(|s| s.gamma).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    for g in gammas {
        let x = px(lx(g));
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{g}</text>"#,
            HEIGHT - MARGIN + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">sampling rate</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">per-element MSE</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for (mi, method) in methods.iter().enumerate() {
        let style = method.index() as usize;
        let color = COLORS[style % COLORS.len()];
        let pts: Vec<(f64, f64)> = finite
            .iter()
            .filter(|s| s.method == *method)
            .map(|s| (px(lx(s.gamma)), py(s.mean_mse.log10())))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-method="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            method.name(),
            coords.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(svg, "{}", marker(style, *x, *y, color));
        }
        let ly = MARGIN + 16.0 + 16.0 * mi as f64;
        let lx0 = WIDTH - MARGIN - 90.0;
        let _ = writeln!(svg, "{}", marker(style, lx0, ly - 4.0, color));
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx0 + 10.0,
            method.name()
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Square, triangle, circle, cycling.
fn marker(idx: usize, x: f64, y: f64, color: &str) -> String {
    match idx % 3 {
        0 => format!(
            r#"<rect x="{:.2}" y="{:.2}" width="7" height="7" fill="none" stroke="{color}"/>"#,
            x - 3.5,
            y - 3.5
        ),
        1 => format!(
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="{color}"/>"#,
            x - 4.0,
            y - 4.0,
            x - 4.0,
            y + 4.0,
            x + 4.0,
            y
        ),
        _ => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="none" stroke="{color}"/>"#),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `results.csv`, `summary.csv` and, when there is data,
/// `<plot_name>.svg` into `dir`. Returns the written paths.
pub fn emit_outputs(
    rows: &[ResultRow],
    summary: &[SummaryRow],
    dir: &Path,
    plot_name: &str,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write(dir.join("results.csv"), &results_csv(rows))?,
        write(dir.join("summary.csv"), &summary_csv(summary))?,
    ];
    if let Some(svg) = summary_svg(summary, plot_name) {
        written.push(write(dir.join(format!("{plot_name}.svg")), &svg)?);
    }
    Ok(written)
}
