//! Gantt chart export as a standalone SVG document.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::machine::Machine;
use crate::metrics::MetricsError;
use crate::trace::{Time, TraceRecord};

const LABEL_W: f64 = 120.0;
const PLOT_W: f64 = 900.0;
const LANE_H: f64 = 22.0;
const TOP: f64 = 30.0;
const AXIS_H: f64 = 40.0;
const LEGEND_H: f64 = 24.0;

const PALETTE: [&str; 8] = [
    "#8e7dbe", "#e07a5f", "#81b29a", "#f2cc8f", "#3d405b", "#6d597a", "#b56576", "#457b9d",
];

/// Fill color for a codelet kind. Known kinds have fixed colors; anything
/// else hashes into a fixed palette.
pub fn kind_color(kind: &str) -> &'static str {
    match kind {
        "start" => "#6c757d",
        "end" => "#343a40",
        "conv" => "#f4a259",
        "vmul" => "#5b8e7d",
        "sum" => "#bc4b51",
        "dot" => "#3d5a80",
        other => {
            let h = other
                .bytes()
                .fold(0u32, |h, b| h.wrapping_mul(31).wrapping_add(b as u32));
            PALETTE[h as usize % PALETTE.len()]
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick spacing of 1, 2 or 5 times a power of ten giving about ten ticks.
fn tick_step(span: Time) -> Time {
    let rough = (span / 10).max(1);
    let mut pow = 1;
    while pow * 10 <= rough {
        pow *= 10;
    }
    [1, 2, 5, 10]
        .into_iter()
        .map(|m| m * pow)
        .find(|&s| s >= rough)
        .unwrap_or(10 * pow)
}

/// One lane per compute unit, one rectangle per record spanning
/// `[start, end)`, colored by codelet kind, over a time axis in time units.
pub fn export_gantt(trace: &[TraceRecord], machine: &Machine) -> Result<String, MetricsError> {
    let t_end = trace.iter().map(|r| r.end).max().ok_or(MetricsError::EmptyTrace)?;
    let t0 = trace.iter().map(|r| r.start).min().unwrap_or(0);
    let span = (t_end - t0).max(1);
    let scale = PLOT_W / span as f64;
    let x = |t: Time| LABEL_W + (t - t0) as f64 * scale;

    let lanes = machine.total_cus();
    let plot_h = lanes as f64 * LANE_H;
    let width = LABEL_W + PLOT_W + 20.0;
    let height = TOP + plot_h + AXIS_H + LEGEND_H;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for cu in machine.cus() {
        let y = TOP + cu.id.index() as f64 * LANE_H;
        let _ = writeln!(
            svg,
            r##"<rect class="lane" x="{LABEL_W}" y="{y}" width="{PLOT_W}" height="{LANE_H}" fill="{}"/>"##,
            if cu.id.index() % 2 == 0 { "#f7f7f7" } else { "#ffffff" }
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{} ({})</text>"#,
            LABEL_W - 6.0,
            y + LANE_H * 0.7,
            cu.id,
            escape(cu.class.as_str())
        );
    }

    let mut kinds = BTreeSet::new();
    for r in trace {
        let kind = r.kind_or_label();
        kinds.insert(kind.to_string());
        let y = TOP + r.cu.index() as f64 * LANE_H + 2.0;
        let w = (r.end - r.start) as f64 * scale;
        let _ = writeln!(
            svg,
            r##"<rect class="codelet" data-kind="{k}" x="{:.3}" y="{y}" width="{w:.3}" height="{}" fill="{}" stroke="#222" stroke-width="0.3"><title>{} [{}, {}) on {}</title></rect>"##,
            x(r.start),
            LANE_H - 4.0,
            kind_color(kind),
            escape(&r.label),
            r.start,
            r.end,
            r.cu,
            k = escape(kind),
        );
    }

    let axis_y = TOP + plot_h;
    let _ = writeln!(
        svg,
        r##"<line x1="{LABEL_W}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="#000"/>"##,
        LABEL_W + PLOT_W
    );
    let step = tick_step(span);
    let mut t = t0.div_ceil(step) * step;
    while t <= t_end {
        let tx = x(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{tx:.3}" y1="{axis_y}" x2="{tx:.3}" y2="{}" stroke="#000"/><text x="{tx:.3}" y="{}" text-anchor="middle">{t}</text>"##,
            axis_y + 4.0,
            axis_y + 16.0
        );
        t += step;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">time (time units)</text>"#,
        LABEL_W + PLOT_W / 2.0,
        axis_y + 32.0
    );

    let mut lx = LABEL_W;
    let ly = axis_y + AXIS_H + 4.0;
    for kind in &kinds {
        let _ = writeln!(
            svg,
            r#"<rect x="{lx}" y="{ly}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            kind_color(kind),
            lx + 16.0,
            ly + 10.0,
            escape(kind)
        );
        lx += 24.0 + 7.0 * kind.len() as f64;
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
