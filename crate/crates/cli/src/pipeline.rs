//! Composition of the analysis pipeline: parsed records in, report out.

use anyhow::{Context, Result};

use perfsig_core::detect::{
    self, ChangeDistribution, DetectorConfig, NormalizationMode, Parameter,
};
use perfsig_core::ingest::{self, ParsedLog, SampleWindow};
use perfsig_core::profile::workload_profile;
use perfsig_core::signature::{self, Signature};

use crate::report::{
    AnalysisReport, BinReport, DistributionReport, EventReport, GosReport, RunConfig,
    TransitionReport, WindowReport,
};

/// Tuning knobs the pipeline needs beyond the raw records.
pub struct PipelineParams {
    pub window_length_ms: i64,
    pub min_samples: usize,
    pub max_points: usize,
    pub max_iterations: usize,
    pub tol: f64,
    pub bin_width: f64,
    pub norm_mode: NormalizationMode,
    pub detector: DetectorConfig,
}

/// Run windowing, per-window fitting, change detection and workload
/// profiling over a parsed log.
pub fn analyze(
    parsed: ParsedLog,
    params: &PipelineParams,
    config: RunConfig,
) -> Result<AnalysisReport> {
    let records = parsed.records;
    let reject_count = parsed.rejects.len() as u64;

    let workload = if records.is_empty() {
        None
    } else {
        Some(workload_profile(&records).context("workload profile")?)
    };

    let windows = ingest::window_records(records, params.window_length_ms, params.min_samples);
    let signatures = fit_series(&windows, params);

    let mut window_reports = Vec::with_capacity(windows.len());
    for (w, sig) in windows.iter().zip(signatures.iter()) {
        let gos = if w.records.is_empty() {
            None
        } else {
            let g = signature::gos_summary(w).context("GoS summary")?;
            Some(GosReport {
                arrival_rate: g.arrival_rate,
                p50: g.p50,
                p80: g.p80,
                p90: g.p90,
                p95: g.p95,
                p98: g.p98,
                p100: g.p100,
            })
        };
        window_reports.push(WindowReport {
            window_start: w.window_start,
            k: sig.map(|s| s.k),
            j: sig.map(|s| s.j),
            sse: sig.map(|s| s.sse),
            iterations: sig.map(|s| s.iterations),
            converged: sig.map(|s| s.converged),
            n_points: sig.map(|s| s.n_points),
            gos,
        });
    }

    // fewer than two converged fits, or converged fits with no adjacent
    // pair, means no change sequence; normal for short or gappy logs
    // rather than an error
    let converged = signatures
        .iter()
        .filter(|s| s.map(|s| s.converged).unwrap_or(false))
        .count();
    let profile = if converged >= 2 {
        Some(detect::compute_changes(&signatures, params.norm_mode)?)
    } else {
        None
    };
    let (transitions, distribution_k, distribution_j, events) =
        if let Some(profile) = profile.filter(|p| !p.transitions.is_empty()) {
            let dist_k = detect::quantize_distribution(&profile, Parameter::K, params.bin_width)?;
            let dist_j = detect::quantize_distribution(&profile, Parameter::J, params.bin_width)?;
            let events = detect::detect_anomalies(&profile, &dist_k, &dist_j, &params.detector)?;

            let transitions = profile
                .transitions
                .iter()
                .map(|t| TransitionReport {
                    window_index: t.window_index,
                    window_start: windows[t.window_index].window_start,
                    delta_k_raw: t.delta_k_raw,
                    delta_k_norm: t.delta_k_norm,
                    delta_j_raw: t.delta_j_raw,
                    delta_j_norm: t.delta_j_norm,
                })
                .collect();
            let events = events
                .iter()
                .map(|e| EventReport {
                    window_start: windows[e.window_index].window_start,
                    kind: e.kind,
                    delta_k_norm: e.delta_k_norm,
                    delta_j_norm: e.delta_j_norm,
                    bin_probability: e.bin_probability,
                    significance: params.detector.significance,
                    alerting: e.alerting,
                    window_index: e.window_index,
                })
                .collect();
            (
                transitions,
                Some(to_distribution_report(&dist_k)),
                Some(to_distribution_report(&dist_j)),
                events,
            )
        } else {
            (Vec::new(), None, None, Vec::new())
        };

    Ok(AnalysisReport {
        config,
        windows: window_reports,
        transitions,
        distribution_k,
        distribution_j,
        events,
        workload,
        reject_count,
    })
}

fn fit_series(windows: &[SampleWindow], params: &PipelineParams) -> Vec<Option<Signature>> {
    windows
        .iter()
        .map(|w| {
            if !w.fittable {
                return None;
            }
            let ecdf = signature::build_ecdf(w, params.max_points).expect("fittable window");
            let init = signature::initial_estimate(&ecdf);
            Some(signature::fit_signature(
                &ecdf,
                init,
                params.max_iterations,
                params.tol,
            ))
        })
        .collect()
}

fn to_distribution_report(dist: &ChangeDistribution) -> DistributionReport {
    DistributionReport {
        parameter: dist.parameter,
        bin_width: dist.bin_width,
        total: dist.total,
        bins: dist
            .bins
            .iter()
            .map(|b| BinReport {
                bin_low: b.low,
                bin_high: b.high,
                count: b.count,
                probability: b.probability,
            })
            .collect(),
    }
}
