//! Static SVG charts and CSV trend tables rendered from an analysis
//! report. The report stays the source of truth; everything here is a
//! derived artifact that can be regenerated without recomputation.

use std::fmt::Write as _;

use crate::report::{format_float, AnalysisReport, DistributionReport};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_bounds(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        // pad degenerate ranges so single-point series still render
        let (x_min, x_max) = pad(x_min, x_max);
        let (y_min, y_max) = pad(y_min, y_max);
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT
            + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT
            - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let span = hi - lo;
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

fn svg_header(title: &str) -> String {
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" "#,
            r#"viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            "\n",
            r#"<rect width="{w}" height="{h}" fill="white"/>"#,
            "\n",
            r#"<text x="{tx}" y="24" font-size="16" text-anchor="middle">{title}</text>"#,
            "\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = title,
    )
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let xp = frame.px(xv);
        let yp = frame.py(yv);
        let _ = writeln!(
            out,
            r#"<text x="{xp}" y="{ty}" text-anchor="middle">{v}</text>"#,
            ty = y0 + 18.0,
            v = tick(xv),
        );
        let _ = writeln!(
            out,
            r#"<text x="{tx}" y="{yp}" text-anchor="end" dominant-baseline="middle">{v}</text>"#,
            tx = x0 - 8.0,
            v = tick(yv),
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{cx}" y="{cy}" text-anchor="middle">{x_label}</text>"#,
        cx = (x0 + x1) / 2.0,
        cy = HEIGHT - 12.0,
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{cy}" text-anchor="middle" transform="rotate(-90 18 {cy})">{y_label}</text>"#,
        cy = (y0 + y1) / 2.0,
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 1e6 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Multi-series line chart; series are `(name, points)` pairs. Marker
/// positions get an `event-marker` circle.
fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, Vec<(f64, f64)>)],
    markers: &[(f64, f64)],
) -> String {
    let all_points = series.iter().flat_map(|(_, pts)| pts.iter());
    let x_min = all_points
        .clone()
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min);
    let x_max = all_points
        .clone()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let y_min = all_points
        .clone()
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min);
    let y_max = all_points.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let frame = if x_min.is_finite() {
        Frame::from_bounds(x_min, x_max, y_min, y_max)
    } else {
        Frame::from_bounds(0.0, 1.0, 0.0, 1.0)
    };

    let mut out = svg_header(title);
    axes(&mut out, &frame, x_label, y_label);
    for (i, (name, points)) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        if points.len() == 1 {
            let (x, y) = points[0];
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                frame.px(x),
                frame.py(y),
            );
        } else if !points.is_empty() {
            let path: Vec<String> = points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" "),
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{y}" fill="{color}">{name}</text>"#,
            x = WIDTH - MARGIN_RIGHT - 80.0,
            y = MARGIN_TOP + 16.0 * (i as f64 + 1.0),
        );
    }
    for &(x, y) in markers {
        let _ = writeln!(
            out,
            r##"<circle class="event-marker" cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="#d62728" stroke-width="2"/>"##,
            frame.px(x),
            frame.py(y),
        );
    }
    out.push_str("</svg>\n");
    out
}

fn histogram(title: &str, dist: &DistributionReport) -> String {
    let y_max = dist
        .bins
        .iter()
        .map(|b| b.probability)
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let frame = Frame::from_bounds(-1.0, 1.0, 0.0, y_max);
    let mut out = svg_header(title);
    axes(&mut out, &frame, "normalized change", "probability");
    for bin in &dist.bins {
        if bin.count == 0 {
            continue;
        }
        let x0 = frame.px(bin.bin_low);
        let x1 = frame.px(bin.bin_high);
        let y0 = frame.py(bin.probability);
        let y1 = frame.py(0.0);
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" stroke="white"/>"##,
            x0,
            y0,
            x1 - x0,
            y1 - y0,
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Window-start seconds relative to the first window, for readable axes.
fn rel_time(report: &AnalysisReport, window_start: i64) -> f64 {
    let t0 = report.windows.first().map(|w| w.window_start).unwrap_or(0);
    (window_start - t0) as f64 / 1000.0
}

/// One rendered artifact: file name and contents.
pub struct Artifact {
    pub name: &'static str,
    pub contents: String,
}

/// Render every chart and CSV table for a report.
pub fn render_all(report: &AnalysisReport) -> Vec<Artifact> {
    vec![
        Artifact {
            name: "k_trend.svg",
            contents: parameter_trend(report, "k"),
        },
        Artifact {
            name: "j_trend.svg",
            contents: parameter_trend(report, "j"),
        },
        Artifact {
            name: "gos.svg",
            contents: gos_chart(report),
        },
        Artifact {
            name: "distribution_k.svg",
            contents: distribution_chart(report, report.distribution_k.as_ref(), "k"),
        },
        Artifact {
            name: "distribution_j.svg",
            contents: distribution_chart(report, report.distribution_j.as_ref(), "j"),
        },
        Artifact {
            name: "trend.csv",
            contents: trend_csv(report),
        },
        Artifact {
            name: "distribution_k.csv",
            contents: distribution_csv(report.distribution_k.as_ref()),
        },
        Artifact {
            name: "distribution_j.csv",
            contents: distribution_csv(report.distribution_j.as_ref()),
        },
        Artifact {
            name: "events.csv",
            contents: events_csv(report),
        },
    ]
}

fn parameter_trend(report: &AnalysisReport, which: &str) -> String {
    let points: Vec<(f64, f64)> = report
        .windows
        .iter()
        .filter_map(|w| {
            let v = if which == "k" { w.k } else { w.j };
            v.map(|v| (rel_time(report, w.window_start), v))
        })
        .collect();
    let value_at = |start: i64| {
        report
            .windows
            .iter()
            .find(|w| w.window_start == start)
            .and_then(|w| if which == "k" { w.k } else { w.j })
    };
    let markers: Vec<(f64, f64)> = report
        .events
        .iter()
        .filter_map(|e| value_at(e.window_start).map(|v| (rel_time(report, e.window_start), v)))
        .collect();
    line_chart(
        &format!("{which} over time"),
        "window start (s)",
        which,
        &[(which, points)],
        &markers,
    )
}

fn gos_chart(report: &AnalysisReport) -> String {
    let series_for = |pick: fn(&crate::report::GosReport) -> f64| -> Vec<(f64, f64)> {
        report
            .windows
            .iter()
            .filter_map(|w| {
                w.gos
                    .as_ref()
                    .map(|g| (rel_time(report, w.window_start), pick(g)))
            })
            .collect()
    };
    let series: Vec<(&str, Vec<(f64, f64)>)> = vec![
        ("p50", series_for(|g| g.p50)),
        ("p80", series_for(|g| g.p80)),
        ("p90", series_for(|g| g.p90)),
        ("p95", series_for(|g| g.p95)),
        ("p98", series_for(|g| g.p98)),
        ("p100", series_for(|g| g.p100)),
    ];
    line_chart(
        "Grade of Service percentiles",
        "window start (s)",
        "response time (ms)",
        &series,
        &[],
    )
}

fn distribution_chart(
    _report: &AnalysisReport,
    dist: Option<&DistributionReport>,
    which: &str,
) -> String {
    match dist {
        Some(d) => histogram(&format!("Distribution of normalized {which} changes"), d),
        None => {
            let mut out = svg_header(&format!("Distribution of normalized {which} changes"));
            out.push_str(r#"<text x="450" y="210" text-anchor="middle">no transitions</text>"#);
            out.push_str("\n</svg>\n");
            out
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn trend_csv(report: &AnalysisReport) -> String {
    let mut out = String::from(
        "window_start,k,j,sse,iterations,converged,n_points,arrival_rate,p50,p80,p90,p95,p98,p100\n",
    );
    for w in &report.windows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            w.window_start,
            opt(w.k),
            opt(w.j),
            opt(w.sse),
            w.iterations.map(|v| v.to_string()).unwrap_or_default(),
            w.converged.map(|v| v.to_string()).unwrap_or_default(),
            w.n_points.map(|v| v.to_string()).unwrap_or_default(),
            w.gos
                .as_ref()
                .map(|g| g.arrival_rate.to_string())
                .unwrap_or_default(),
            opt(w.gos.as_ref().map(|g| g.p50)),
            opt(w.gos.as_ref().map(|g| g.p80)),
            opt(w.gos.as_ref().map(|g| g.p90)),
            opt(w.gos.as_ref().map(|g| g.p95)),
            opt(w.gos.as_ref().map(|g| g.p98)),
            opt(w.gos.as_ref().map(|g| g.p100)),
        );
    }
    out
}

fn distribution_csv(dist: Option<&DistributionReport>) -> String {
    let mut out = String::from("bin_low,bin_high,count,probability\n");
    if let Some(d) = dist {
        for b in &d.bins {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                format_float(b.bin_low),
                format_float(b.bin_high),
                b.count,
                format_float(b.probability),
            );
        }
    }
    out
}

fn events_csv(report: &AnalysisReport) -> String {
    let mut out = String::from(
        "window_start,kind,delta_k_norm,delta_j_norm,bin_probability,significance,alerting\n",
    );
    for e in &report.events {
        let kind = serde_json::to_string(&e.kind).expect("kind serializes");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.window_start,
            kind.trim_matches('"'),
            format_float(e.delta_k_norm),
            format_float(e.delta_j_norm),
            format_float(e.bin_probability),
            format_float(e.significance),
            e.alerting,
        );
    }
    out
}
