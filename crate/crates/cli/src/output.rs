//! Plot-ready CSV traces and a static SVG chart.

use std::fmt::Write as _;
use std::path::Path;

use dda_core::RunTrace64;

use crate::error::CliError;

pub const TRACE_HEADER: [&str; 9] = [
    "t",
    "rse",
    "obj_gap_ybar",
    "obj_gap_mean_x",
    "consensus_residual_s",
    "consensus_residual_z",
    "lemma5_slack",
    "bound_margin_thm2",
    "bound_margin_cor1",
];

/// Derived per-round columns that are not stored on the records.
pub struct TraceColumns {
    pub rse: Vec<f64>,
    pub thm2: Vec<f64>,
    pub cor1: Vec<f64>,
}

/// Shortest round-tripping decimal; `NaN`, `inf` and `-inf` otherwise.
fn num(v: f64) -> String {
    v.to_string()
}

pub fn write_trace_csv(path: &Path, trace: &RunTrace64, cols: &TraceColumns) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for (k, r) in trace.records.iter().enumerate() {
        w.write_record([
            r.t.to_string(),
            num(cols.rse[k]),
            num(r.obj_gap_ybar),
            num(r.obj_gap_mean_x),
            num(r.consensus_residual_s),
            num(r.consensus_residual_z),
            num(r.deviation_slack),
            num(cols.thm2[k]),
            num(cols.cor1[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line chart of `log₁₀ RSE` against `t`, one polyline per series.
pub fn write_svg(path: &Path, series: &[(String, Vec<f64>)]) -> Result<(), CliError> {
    let (width, height, margin) = (720.0, 440.0, 60.0);
    let logs: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, v)| {
            v.iter()
                .enumerate()
                .filter(|(_, y)| y.is_finite() && **y > 0.0)
                .map(|(t, y)| (t as f64, y.log10()))
                .collect()
        })
        .collect();
    let all = logs.iter().flatten();
    let t_max = all.clone().map(|p| p.0).fold(1.0, f64::max);
    let lo = all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min).floor();
    let hi = all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil();
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (-1.0, 1.0) };
    let x = |t: f64| margin + (width - 2.0 * margin) * t / t_max;
    let y = |v: f64| height - margin - (height - 2.0 * margin) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (x(0.0), x(t_max), y(lo), y(hi));
    let _ = writeln!(s, r#"<path d="M{x0} {y1} V{y0} H{x1}" stroke="black" fill="none"/>"#);
    let mut tick = lo;
    while tick <= hi {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">1e{}</text>"#, x0 - 6.0, y(tick) + 4.0, tick);
        tick += ((hi - lo) / 8.0).ceil().max(1.0);
    }
    let _ = writeln!(s, r#"<text x="{x0}" y="{}">0</text>"#, y0 + 16.0);
    let _ = writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="end">{t_max}</text>"#, y0 + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, (x0 + x1) / 2.0, y0 + 32.0);
    for (k, ((name, _), pts)) in series.iter().zip(&logs).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(t, v)| format!("{:.2},{:.2}", x(t), y(v))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        let ly = margin + 16.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{name}</text>"#, x1 - 80.0);
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)?;
    Ok(())
}
