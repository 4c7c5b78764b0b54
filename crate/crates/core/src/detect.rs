//! Slow-down detection over a fitted signature series.
//!
//! Consecutive converged windows yield raw parameter deltas which are
//! normalized sign-wise into `[-1, +1]`: negative deltas divide by the
//! largest negative magnitude in scope, positive deltas by the largest
//! positive delta in scope. The normalized changes are quantized into
//! fixed-width bins and a transition is anomalous when it lands in a bin
//! whose probability is at or below the significance level.
//!
//! Only negative-`k` events alert by default; speed-ups and tail-only
//! changes are classified and reported as informational.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signature::Signature;

/// Default quantization increment.
pub const DEFAULT_BIN_WIDTH: f64 = 0.1;
/// Default significance level: a bin at or below this probability is
/// anomalous.
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
/// Default half-width of the "stable" band on normalized deltas.
pub const DEFAULT_STABLE_BAND: f64 = 0.1;

/// Normalization scope for the change profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Side maxima taken over the whole analysis period.
    FullPeriod,
    /// Side maxima taken over a trailing window of this many transitions
    /// (the current transition included).
    Rolling(usize),
}

/// One window-to-window parameter change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Index of the newer window in the signature series.
    pub window_index: usize,
    pub delta_k_raw: f64,
    pub delta_j_raw: f64,
    /// Sign-wise normalized delta in `[-1, 1]`.
    pub delta_k_norm: f64,
    pub delta_j_norm: f64,
}

/// Normalized change sequence over consecutive converged windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeProfile {
    pub transitions: Vec<Transition>,
    pub mode: NormalizationMode,
}

/// Which fitted parameter a distribution is built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    K,
    J,
}

/// One quantization bucket of normalized changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub probability: f64,
}

/// Quantized probability distribution of normalized changes over `[-1, 1]`.
///
/// Bins are half-open `[low, high)` except the last, which is closed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeDistribution {
    pub parameter: Parameter,
    pub bin_width: f64,
    pub bins: Vec<Bin>,
    pub total: usize,
}

impl ChangeDistribution {
    /// Index of the bin containing a normalized value.
    pub fn bin_index(&self, value: f64) -> usize {
        bin_index(value, self.bin_width, self.bins.len())
    }

    /// Probability of the bin containing a normalized value.
    pub fn probability_of(&self, value: f64) -> f64 {
        self.bins[self.bin_index(value)].probability
    }
}

/// Event classification per observed change pattern: `k` decides when it
/// moves beyond the stable band, otherwise `j` decides a tail-only event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SlowDown,
    SpeedUp,
    TailSlowDown,
    TailSpeedUp,
}

/// A transition flagged by the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    pub window_index: usize,
    pub kind: EventKind,
    pub delta_k_norm: f64,
    pub delta_j_norm: f64,
    /// Probability of the quantization bin that triggered the flag
    /// (the `k` bin for body events, the `j` bin for tail events).
    pub bin_probability: f64,
    /// True for alert-worthy events; speed-ups and (by default) tail
    /// events are informational.
    pub alerting: bool,
}

/// Detector knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Maximum bin probability for a grouping to be anomalous, in (0, 0.5).
    pub significance: f64,
    /// Normalized-delta band inside which a parameter counts as stable.
    pub stable_band: f64,
    /// Promote tail slow-downs to alerting events.
    pub alert_tail: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            significance: DEFAULT_SIGNIFICANCE,
            stable_band: DEFAULT_STABLE_BAND,
            alert_tail: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("change profile requires at least 2 converged signatures, found {found}")]
    TooFewConverged { found: usize },
    #[error("change profile has no transitions")]
    EmptyProfile,
    #[error("bin width must be in (0, 1], got {0}")]
    BadBinWidth(f64),
    #[error("significance must be in (0, 0.5), got {0}")]
    BadSignificance(f64),
    #[error("rolling scope must cover at least 1 transition")]
    BadRollingWindow,
}

/// Compute raw and normalized parameter deltas over consecutive converged
/// windows.
///
/// The series is positional: one entry per window, `None` for windows that
/// were not fitted. A transition exists only between adjacent windows that
/// both carry converged signatures, so unfitted or unconverged windows
/// break the chain rather than creating phantom long-span deltas.
pub fn compute_changes(
    signatures: &[Option<Signature>],
    mode: NormalizationMode,
) -> Result<ChangeProfile, DetectError> {
    let converged_count = signatures
        .iter()
        .filter(|s| s.map(|s| s.converged).unwrap_or(false))
        .count();
    if converged_count < 2 {
        return Err(DetectError::TooFewConverged {
            found: converged_count,
        });
    }
    if let NormalizationMode::Rolling(n) = mode {
        if n == 0 {
            return Err(DetectError::BadRollingWindow);
        }
    }

    let mut raw: Vec<(usize, f64, f64)> = Vec::new();
    for i in 1..signatures.len() {
        let (old, new) = (&signatures[i - 1], &signatures[i]);
        if let (Some(old), Some(new)) = (old, new) {
            if old.converged && new.converged {
                raw.push((i, new.k - old.k, new.j - old.j));
            }
        }
    }

    let transitions = match mode {
        NormalizationMode::FullPeriod => {
            let k_deltas: Vec<f64> = raw.iter().map(|&(_, dk, _)| dk).collect();
            let j_deltas: Vec<f64> = raw.iter().map(|&(_, _, dj)| dj).collect();
            let k_norms = normalize_side_wise(&k_deltas);
            let j_norms = normalize_side_wise(&j_deltas);
            raw.iter()
                .zip(k_norms.iter().zip(j_norms.iter()))
                .map(|(&(idx, dk, dj), (&kn, &jn))| Transition {
                    window_index: idx,
                    delta_k_raw: dk,
                    delta_j_raw: dj,
                    delta_k_norm: kn,
                    delta_j_norm: jn,
                })
                .collect()
        }
        NormalizationMode::Rolling(n) => raw
            .iter()
            .enumerate()
            .map(|(t, &(idx, dk, dj))| {
                let scope_start = (t + 1).saturating_sub(n);
                let k_scope: Vec<f64> = raw[scope_start..=t].iter().map(|&(_, d, _)| d).collect();
                let j_scope: Vec<f64> = raw[scope_start..=t].iter().map(|&(_, _, d)| d).collect();
                Transition {
                    window_index: idx,
                    delta_k_raw: dk,
                    delta_j_raw: dj,
                    delta_k_norm: normalize_one(dk, &k_scope),
                    delta_j_norm: normalize_one(dj, &j_scope),
                }
            })
            .collect(),
    };

    Ok(ChangeProfile { transitions, mode })
}

/// Sign-wise normalization of a full delta sequence: each side divides by
/// its own maximum magnitude, zeros stay zero.
fn normalize_side_wise(deltas: &[f64]) -> Vec<f64> {
    deltas.iter().map(|&d| normalize_one(d, deltas)).collect()
}

fn normalize_one(delta: f64, scope: &[f64]) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    if delta < 0.0 {
        let max_neg = scope
            .iter()
            .filter(|&&d| d < 0.0)
            .fold(0.0f64, |acc, &d| acc.max(-d));
        delta / max_neg
    } else {
        let max_pos = scope
            .iter()
            .filter(|&&d| d > 0.0)
            .fold(0.0f64, |acc, &d| acc.max(d));
        delta / max_pos
    }
}

fn bin_count(bin_width: f64) -> usize {
    // number of bin_width increments covering [-1, 1]
    (2.0 / bin_width - 1e-9).ceil() as usize
}

fn bin_index(value: f64, bin_width: f64, n_bins: usize) -> usize {
    let t = (value + 1.0) / bin_width;
    // values landing on a bin edge belong to the upper bin; compensate for
    // float rounding just below the edge
    let idx = if (t - t.round()).abs() < 1e-9 {
        t.round()
    } else {
        t.floor()
    };
    (idx.max(0.0) as usize).min(n_bins - 1)
}

/// Quantize one parameter's normalized changes into `bin_width` buckets
/// covering `[-1, 1]`.
pub fn quantize_distribution(
    profile: &ChangeProfile,
    parameter: Parameter,
    bin_width: f64,
) -> Result<ChangeDistribution, DetectError> {
    if profile.transitions.is_empty() {
        return Err(DetectError::EmptyProfile);
    }
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(DetectError::BadBinWidth(bin_width));
    }
    let n_bins = bin_count(bin_width);
    let mut counts = vec![0usize; n_bins];
    for t in &profile.transitions {
        let value = match parameter {
            Parameter::K => t.delta_k_norm,
            Parameter::J => t.delta_j_norm,
        };
        counts[bin_index(value, bin_width, n_bins)] += 1;
    }
    let total = profile.transitions.len();
    let bins = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| Bin {
            low: -1.0 + i as f64 * bin_width,
            high: if i + 1 == n_bins {
                1.0
            } else {
                -1.0 + (i + 1) as f64 * bin_width
            },
            count,
            probability: count as f64 / total as f64,
        })
        .collect();
    Ok(ChangeDistribution {
        parameter,
        bin_width,
        bins,
        total,
    })
}

/// Classify one transition; `None` when both parameters sit inside the
/// stable band.
///
/// A `k` move beyond the band decides the event outright and overrides any
/// `j` trend; with `k` stable, a `j` move beyond the band indicates a
/// tail-only event.
pub fn classify_event(delta_k_norm: f64, delta_j_norm: f64, stable_band: f64) -> Option<EventKind> {
    if delta_k_norm.abs() > stable_band {
        if delta_k_norm < 0.0 {
            Some(EventKind::SlowDown)
        } else {
            Some(EventKind::SpeedUp)
        }
    } else if delta_j_norm.abs() > stable_band {
        if delta_j_norm < 0.0 {
            Some(EventKind::TailSlowDown)
        } else {
            Some(EventKind::TailSpeedUp)
        }
    } else {
        None
    }
}

/// Flag anomalous transitions.
///
/// A slow-down alert fires when the normalized `k` delta falls in a
/// negative-side bin whose probability is at or below the significance
/// level and lies beyond the stable band. Speed-ups satisfying the
/// mirrored rule and rare tail-only changes (gated on the `j`
/// distribution) are reported as informational events.
pub fn detect_anomalies(
    profile: &ChangeProfile,
    dist_k: &ChangeDistribution,
    dist_j: &ChangeDistribution,
    config: &DetectorConfig,
) -> Result<Vec<AnomalyEvent>, DetectError> {
    if !(config.significance > 0.0 && config.significance < 0.5) {
        return Err(DetectError::BadSignificance(config.significance));
    }
    let mut events = Vec::new();
    for t in &profile.transitions {
        let kind = match classify_event(t.delta_k_norm, t.delta_j_norm, config.stable_band) {
            Some(kind) => kind,
            None => continue,
        };
        let bin_probability = match kind {
            EventKind::SlowDown | EventKind::SpeedUp => dist_k.probability_of(t.delta_k_norm),
            EventKind::TailSlowDown | EventKind::TailSpeedUp => {
                dist_j.probability_of(t.delta_j_norm)
            }
        };
        if bin_probability > config.significance {
            continue;
        }
        let alerting = match kind {
            EventKind::SlowDown => true,
            EventKind::TailSlowDown => config.alert_tail,
            EventKind::SpeedUp | EventKind::TailSpeedUp => false,
        };
        events.push(AnomalyEvent {
            window_index: t.window_index,
            kind,
            delta_k_norm: t.delta_k_norm,
            delta_j_norm: t.delta_j_norm,
            bin_probability,
            alerting,
        });
    }
    Ok(events)
}
