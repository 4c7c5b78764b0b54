//! Analysis report: the single machine-readable output of `analyze`.
//!
//! Serialization is deterministic: struct field order fixes key order and
//! every float is written with at most 10 significant digits, so the same
//! input and flags produce a byte-identical report.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use perfsig_core::detect::{EventKind, Parameter};
use perfsig_core::profile::WorkloadProfile;

/// Echo of the run configuration, embedded in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: String,
    pub format: String,
    pub window_length_s: u64,
    pub min_samples: usize,
    pub max_points: usize,
    pub max_iterations: usize,
    pub tol: f64,
    pub significance: f64,
    pub bin_width: f64,
    pub stable_band: f64,
    pub norm_mode: String,
    pub alert_tail: bool,
    pub gate: bool,
}

/// Grade-of-Service block of a window entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GosReport {
    pub arrival_rate: u64,
    pub p50: f64,
    pub p80: f64,
    pub p90: f64,
    pub p95: f64,
    pub p98: f64,
    pub p100: f64,
}

/// One window's signature export. Fit fields are null for windows that
/// were not fittable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_start: i64,
    pub k: Option<f64>,
    pub j: Option<f64>,
    pub sse: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub n_points: Option<usize>,
    pub gos: Option<GosReport>,
}

/// One window-to-window transition with raw and normalized deltas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionReport {
    pub window_index: usize,
    pub window_start: i64,
    pub delta_k_raw: f64,
    pub delta_k_norm: f64,
    pub delta_j_raw: f64,
    pub delta_j_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinReport {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionReport {
    pub parameter: Parameter,
    pub bin_width: f64,
    pub total: usize,
    pub bins: Vec<BinReport>,
}

/// One flagged transition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventReport {
    pub window_start: i64,
    pub kind: EventKind,
    pub delta_k_norm: f64,
    pub delta_j_norm: f64,
    pub bin_probability: f64,
    pub significance: f64,
    pub alerting: bool,
    pub window_index: usize,
}

/// Full analysis output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: RunConfig,
    pub windows: Vec<WindowReport>,
    pub transitions: Vec<TransitionReport>,
    pub distribution_k: Option<DistributionReport>,
    pub distribution_j: Option<DistributionReport>,
    pub events: Vec<EventReport>,
    pub workload: Option<WorkloadProfile>,
    pub reject_count: u64,
}

impl AnalysisReport {
    /// Serialize with deterministic float formatting, newline-terminated.
    pub fn to_json(&self) -> String {
        let mut text = to_deterministic_json(self);
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Compact JSON with struct-order keys and floats at 10 significant
/// digits; identical values always serialize to identical bytes.
pub fn to_deterministic_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter);
    value.serialize(&mut ser).expect("value serializes to JSON");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Compact JSON with floats rendered by [`format_float`].
struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        writer.write_all(format_float(value).as_bytes())
    }
}

/// Render a float with 10 significant digits in scientific notation,
/// trailing zeros trimmed: `142.0 -> "1.42e2"`, `0.05 -> "5e-2"`.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        // JSON never reaches this branch (serde emits null first); kept
        // for the CSV writers
        return if v.is_nan() {
            "NaN".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    if v == 0.0 {
        return "0.0".to_string();
    }
    let s = format!("{v:.9e}");
    let (mantissa, exponent) = s.split_once('e').expect("scientific notation");
    let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
    format!("{mantissa}e{exponent}")
}
