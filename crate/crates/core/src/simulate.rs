//! Seeded M/M/1 simulation with scheduled service-rate anomalies.
//!
//! The simulator is the ground-truth oracle for the fitter and detector:
//! a single-server FIFO queue with Poisson arrivals at rate `lambda` and
//! exponential service at rate `mu` has the closed-form sojourn-time CDF
//!
//! ```text
//! F(r) = 1 - exp(-r * mu * (1 - rho)),   rho = lambda / mu
//! ```
//!
//! so a fitted signature on steady-state output should recover
//! `k = mu - lambda` with `j` near zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TransactionRecord;

/// Simulation parameters. Rates are jobs per millisecond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Arrival rate, jobs per ms.
    pub lambda: f64,
    /// Service rate, jobs per ms.
    pub mu: f64,
    /// Simulation horizon in ms.
    pub duration_ms: f64,
    pub seed: u64,
    /// Optional transaction-type mix as (label, probability) pairs summing
    /// to 1. Labels are drawn independently of service times.
    pub tx_type_mix: Option<Vec<(String, f64)>>,
    /// Permit schedule intervals where `lambda >= mu * mu_factor`
    /// (transient overload).
    pub allow_transient_overload: bool,
}

impl SimConfig {
    pub fn new(lambda: f64, mu: f64, duration_ms: f64, seed: u64) -> Self {
        Self {
            lambda,
            mu,
            duration_ms,
            seed,
            tx_type_mix: None,
            allow_transient_overload: false,
        }
    }

    /// Traffic intensity `lambda / mu`.
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(SimError::BadRate("lambda must be positive".into()));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(SimError::BadRate("mu must be positive".into()));
        }
        if self.rho() >= 1.0 {
            return Err(SimError::Unstable { rho: self.rho() });
        }
        if !(self.duration_ms > 0.0 && self.duration_ms.is_finite()) {
            return Err(SimError::BadRate("duration must be positive".into()));
        }
        if let Some(mix) = &self.tx_type_mix {
            let total: f64 = mix.iter().map(|(_, p)| p).sum();
            if mix.is_empty() || (total - 1.0).abs() > 1e-9 || mix.iter().any(|(_, p)| *p < 0.0) {
                return Err(SimError::BadMix);
            }
        }
        Ok(())
    }
}

/// One scheduled service-rate change: during `[start_ms, end_ms)` the
/// effective service rate is `mu * mu_factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub start_ms: f64,
    pub end_ms: f64,
    pub mu_factor: f64,
}

/// Non-overlapping service-rate changes within the simulation horizon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnomalySchedule {
    pub entries: Vec<ScheduleEntry>,
}

impl AnomalySchedule {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Effective `mu` multiplier at time `t`.
    fn factor_at(&self, t: f64) -> f64 {
        for e in &self.entries {
            if t >= e.start_ms && t < e.end_ms {
                return e.mu_factor;
            }
        }
        1.0
    }

    fn validate(&self, config: &SimConfig) -> Result<(), SimError> {
        for e in &self.entries {
            if !(e.start_ms >= 0.0 && e.end_ms > e.start_ms && e.end_ms <= config.duration_ms) {
                return Err(SimError::BadScheduleInterval {
                    start_ms: e.start_ms,
                    end_ms: e.end_ms,
                });
            }
            if e.mu_factor <= 0.0 || !e.mu_factor.is_finite() || e.mu_factor == 1.0 {
                return Err(SimError::BadMuFactor {
                    factor: e.mu_factor,
                });
            }
            if !config.allow_transient_overload && config.lambda >= config.mu * e.mu_factor {
                return Err(SimError::TransientOverload {
                    effective_rho: config.lambda / (config.mu * e.mu_factor),
                });
            }
        }
        let mut sorted: Vec<&ScheduleEntry> = self.entries.iter().collect();
        sorted.sort_by(|a, b| a.start_ms.partial_cmp(&b.start_ms).expect("finite"));
        for pair in sorted.windows(2) {
            if pair[1].start_ms < pair[0].end_ms {
                return Err(SimError::OverlappingSchedule);
            }
        }
        Ok(())
    }
}

/// Per-window ground-truth label for injection runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowLabel {
    Normal,
    /// Covered by a schedule entry with `mu_factor < 1`.
    Degraded,
    /// Covered by a schedule entry with `mu_factor > 1`.
    Improved,
}

/// A labeled window produced by [`inject_and_label`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub window_start: i64,
    pub label: WindowLabel,
}

/// Simulation output: records for every job that departed within the
/// horizon, plus conservation counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// One record per departed job, ordered by arrival. The record
    /// timestamp is the arrival time; `response_ms` is the sojourn time
    /// (wait plus service).
    pub records: Vec<TransactionRecord>,
    /// Jobs that arrived within the horizon.
    pub arrivals: usize,
    /// Jobs still in the system at the horizon, dropped from the output.
    pub dropped_in_flight: usize,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid rate: {0}")]
    BadRate(String),
    #[error("queue is unstable: rho = {rho} >= 1")]
    Unstable { rho: f64 },
    #[error("tx_type_mix probabilities must be nonnegative and sum to 1")]
    BadMix,
    #[error("schedule interval [{start_ms}, {end_ms}) is outside the simulation horizon or empty")]
    BadScheduleInterval { start_ms: f64, end_ms: f64 },
    #[error("schedule mu_factor must be positive and differ from 1, got {factor}")]
    BadMuFactor { factor: f64 },
    #[error("schedule intervals overlap")]
    OverlappingSchedule,
    #[error("schedule causes transient overload (effective rho = {effective_rho}); pass the overload override to allow")]
    TransientOverload { effective_rho: f64 },
    #[error("schedule interval [{start_ms}, {end_ms}) is not aligned to the {window_length_ms} ms window grid")]
    MisalignedSchedule {
        start_ms: f64,
        end_ms: f64,
        window_length_ms: i64,
    },
}

/// Exponential draw by inverse transform; `1 - u` keeps the argument of
/// `ln` strictly positive.
fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Run the single-server FIFO simulation.
///
/// Inter-arrival times are Exp(lambda); each job's service demand is drawn
/// from Exp(mu * factor) with the factor taken at service start. Output is
/// deterministic for a given `(config, schedule, seed)`.
pub fn simulate_mm1(config: &SimConfig, schedule: &AnomalySchedule) -> Result<SimOutput, SimError> {
    config.validate()?;
    schedule.validate(config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::new();
    let mut arrivals = 0usize;
    let mut dropped = 0usize;
    let mut clock = 0.0f64;
    let mut server_free_at = 0.0f64;

    loop {
        clock += exp_draw(&mut rng, config.lambda);
        if clock >= config.duration_ms {
            break;
        }
        arrivals += 1;
        let service_start = clock.max(server_free_at);
        let mu_eff = config.mu * schedule.factor_at(service_start);
        let service = exp_draw(&mut rng, mu_eff);
        let departure = service_start + service;
        server_free_at = departure;

        let tx_type = draw_label(&mut rng, config);
        if departure <= config.duration_ms {
            records.push(TransactionRecord {
                timestamp_ms: clock.floor() as i64,
                tx_type,
                response_ms: departure - clock,
            });
        } else {
            dropped += 1;
        }
    }

    Ok(SimOutput {
        records,
        arrivals,
        dropped_in_flight: dropped,
    })
}

fn draw_label(rng: &mut ChaCha8Rng, config: &SimConfig) -> String {
    match &config.tx_type_mix {
        None => "tx".to_string(),
        Some(mix) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (label, p) in mix {
                acc += p;
                if u < acc {
                    return label.clone();
                }
            }
            mix.last().expect("mix is non-empty").0.clone()
        }
    }
}

/// The `k` a signature fit should recover on steady-state output:
/// `mu * (1 - rho) = mu - lambda`.
pub fn theoretical_k(config: &SimConfig) -> Result<f64, SimError> {
    if !(config.mu > 0.0 && config.mu.is_finite()) {
        return Err(SimError::BadRate("mu must be positive".into()));
    }
    if config.lambda < 0.0 {
        return Err(SimError::BadRate("lambda must be nonnegative".into()));
    }
    let rho = config.lambda / config.mu;
    if rho >= 1.0 {
        return Err(SimError::Unstable { rho });
    }
    Ok(config.mu - config.lambda)
}

/// Closed-form sojourn-time CDF `F(r) = 1 - exp(-r mu (1 - rho))`.
pub fn sojourn_cdf(config: &SimConfig, r: f64) -> f64 {
    1.0 - (-r * config.mu * (1.0 - config.rho())).exp()
}

/// Simulate with a schedule aligned to the window grid and emit
/// per-window ground-truth labels.
pub fn inject_and_label(
    config: &SimConfig,
    schedule: &AnomalySchedule,
    window_length_ms: i64,
) -> Result<(SimOutput, Vec<LabeledWindow>), SimError> {
    assert!(window_length_ms > 0, "window length must be positive");
    let len = window_length_ms as f64;
    for e in &schedule.entries {
        if e.start_ms % len != 0.0 || e.end_ms % len != 0.0 {
            return Err(SimError::MisalignedSchedule {
                start_ms: e.start_ms,
                end_ms: e.end_ms,
                window_length_ms,
            });
        }
    }
    let output = simulate_mm1(config, schedule)?;

    let n_windows = (config.duration_ms / len).ceil() as i64;
    let labels = (0..n_windows)
        .map(|w| {
            let start = w as f64 * len;
            let factor = schedule
                .entries
                .iter()
                .find(|e| start >= e.start_ms && start < e.end_ms)
                .map(|e| e.mu_factor);
            LabeledWindow {
                window_start: w * window_length_ms,
                label: match factor {
                    None => WindowLabel::Normal,
                    Some(f) if f < 1.0 => WindowLabel::Degraded,
                    Some(_) => WindowLabel::Improved,
                },
            }
        })
        .collect();
    Ok((output, labels))
}

/// Drop the transient head of a run: everything before both 1000 jobs have
/// departed and `10 / (mu - lambda)` ms have elapsed.
pub fn discard_warmup<'a>(
    records: &'a [TransactionRecord],
    config: &SimConfig,
) -> &'a [TransactionRecord] {
    let t_min = 10.0 / (config.mu - config.lambda);
    let mut start = 1000.min(records.len());
    while start < records.len() && (records[start].timestamp_ms as f64) < t_min {
        start += 1;
    }
    &records[start..]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base_config(seed: u64) -> SimConfig {
        SimConfig::new(0.0005, 0.001, 3.0e7, seed)
    }

    #[test]
    fn identical_seeds_give_identical_streams() {
        let config = base_config(7);
        let a = simulate_mm1(&config, &AnomalySchedule::empty()).unwrap();
        let b = simulate_mm1(&config, &AnomalySchedule::empty()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = simulate_mm1(&base_config(1), &AnomalySchedule::empty()).unwrap();
        let b = simulate_mm1(&base_config(2), &AnomalySchedule::empty()).unwrap();
        assert_ne!(a.records, b.records);
    }

    #[test]
    fn arrivals_are_conserved() {
        let out = simulate_mm1(&base_config(11), &AnomalySchedule::empty()).unwrap();
        assert_eq!(out.arrivals, out.records.len() + out.dropped_in_flight);
        assert!(out.arrivals > 0);
    }

    #[test]
    fn departures_follow_arrival_order() {
        let config = SimConfig::new(0.0009, 0.001, 5.0e6, 3); // rho 0.9, real queueing
        let out = simulate_mm1(&config, &AnomalySchedule::empty()).unwrap();
        let mut last_departure = f64::NEG_INFINITY;
        for r in &out.records {
            let departure = r.timestamp_ms as f64 + r.response_ms;
            assert!(departure >= last_departure - 1.0); // 1 ms timestamp floor slack
            last_departure = departure;
        }
    }

    #[test]
    fn zero_load_limit_mean_response_approaches_service_time() {
        // arrivals spaced ~1e6 ms apart vs 1e3 ms services: no queueing
        let mut total = 0.0;
        let mut count = 0usize;
        for seed in 0..40 {
            let config = SimConfig::new(1e-6, 0.001, 1.0e7, seed);
            let out = simulate_mm1(&config, &AnomalySchedule::empty()).unwrap();
            total += out.records.iter().map(|r| r.response_ms).sum::<f64>();
            count += out.records.len();
        }
        assert!(count > 200, "expected a few hundred jobs, got {count}");
        let mean = total / count as f64;
        assert_relative_eq!(mean, 1000.0, max_relative = 0.15);
    }

    #[test]
    fn sojourn_ecdf_matches_closed_form() {
        let config = base_config(42);
        let out = simulate_mm1(&config, &AnomalySchedule::empty()).unwrap();
        let steady = discard_warmup(&out.records, &config);
        assert!(steady.len() >= 10_000, "n = {}", steady.len());

        let mut times: Vec<f64> = steady.iter().map(|r| r.response_ms).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = times.len() as f64;
        let mut ks = 0.0f64;
        for (i, &t) in times.iter().enumerate() {
            let theoretical = sojourn_cdf(&config, t);
            let hi = (i as f64 + 1.0) / n;
            let lo = i as f64 / n;
            ks = ks
                .max((hi - theoretical).abs())
                .max((theoretical - lo).abs());
        }
        assert!(ks < 0.02, "KS distance = {ks}");
    }

    #[test]
    fn theoretical_k_examples() {
        let mut config = SimConfig::new(1.0, 0.01, 1.0, 0);
        config.lambda = 0.0;
        assert_eq!(theoretical_k(&config).unwrap(), 0.01);
        assert_eq!(
            theoretical_k(&SimConfig::new(0.0005, 0.001, 1.0, 0)).unwrap(),
            0.0005
        );
        assert_relative_eq!(
            theoretical_k(&SimConfig::new(0.0009, 0.001, 1.0, 0)).unwrap(),
            0.0001
        );
        assert!(matches!(
            theoretical_k(&SimConfig::new(0.002, 0.001, 1.0, 0)),
            Err(SimError::Unstable { .. })
        ));
    }

    #[test]
    fn unstable_config_is_rejected() {
        let config = SimConfig::new(0.002, 0.001, 1e6, 0);
        assert!(matches!(
            simulate_mm1(&config, &AnomalySchedule::empty()),
            Err(SimError::Unstable { .. })
        ));
    }

    #[test]
    fn overlapping_schedule_is_rejected() {
        let config = SimConfig::new(0.0002, 0.001, 1e6, 0);
        let schedule = AnomalySchedule {
            entries: vec![
                ScheduleEntry {
                    start_ms: 0.0,
                    end_ms: 500_000.0,
                    mu_factor: 0.5,
                },
                ScheduleEntry {
                    start_ms: 400_000.0,
                    end_ms: 600_000.0,
                    mu_factor: 2.0,
                },
            ],
        };
        assert!(matches!(
            simulate_mm1(&config, &schedule),
            Err(SimError::OverlappingSchedule)
        ));
    }

    #[test]
    fn overload_requires_override() {
        let config = SimConfig::new(0.0008, 0.001, 1e6, 0);
        let schedule = AnomalySchedule {
            entries: vec![ScheduleEntry {
                start_ms: 0.0,
                end_ms: 300_000.0,
                mu_factor: 0.5,
            }],
        };
        assert!(matches!(
            simulate_mm1(&config, &schedule),
            Err(SimError::TransientOverload { .. })
        ));
        let mut permissive = config;
        permissive.allow_transient_overload = true;
        assert!(simulate_mm1(&permissive, &schedule).is_ok());
    }

    #[test]
    fn unit_mu_factor_is_rejected() {
        let config = SimConfig::new(0.0002, 0.001, 1e6, 0);
        let schedule = AnomalySchedule {
            entries: vec![ScheduleEntry {
                start_ms: 0.0,
                end_ms: 300_000.0,
                mu_factor: 1.0,
            }],
        };
        assert!(matches!(
            simulate_mm1(&config, &schedule),
            Err(SimError::BadMuFactor { .. })
        ));
    }

    #[test]
    fn labels_track_the_schedule() {
        let window = 300_000i64;
        let config = SimConfig::new(0.0005, 0.002, 100.0 * window as f64, 5);
        let schedule = AnomalySchedule {
            entries: vec![ScheduleEntry {
                start_ms: 40.0 * window as f64,
                end_ms: 43.0 * window as f64,
                mu_factor: 0.5,
            }],
        };
        let (_, labels) = inject_and_label(&config, &schedule, window).unwrap();
        assert_eq!(labels.len(), 100);
        let degraded: Vec<_> = labels
            .iter()
            .filter(|l| l.label == WindowLabel::Degraded)
            .collect();
        assert_eq!(degraded.len(), 3);
        assert_eq!(degraded[0].window_start, 40 * window);
        assert_eq!(
            labels
                .iter()
                .filter(|l| l.label == WindowLabel::Normal)
                .count(),
            97
        );
    }

    #[test]
    fn empty_schedule_labels_all_normal() {
        let config = SimConfig::new(0.0005, 0.002, 3e6, 5);
        let (_, labels) = inject_and_label(&config, &AnomalySchedule::empty(), 300_000).unwrap();
        assert_eq!(labels.len(), 10);
        assert!(labels.iter().all(|l| l.label == WindowLabel::Normal));
    }

    #[test]
    fn misaligned_schedule_is_rejected() {
        let config = SimConfig::new(0.0005, 0.002, 3e6, 5);
        let schedule = AnomalySchedule {
            entries: vec![ScheduleEntry {
                start_ms: 150_000.0,
                end_ms: 600_000.0,
                mu_factor: 0.5,
            }],
        };
        assert!(matches!(
            inject_and_label(&config, &schedule, 300_000),
            Err(SimError::MisalignedSchedule { .. })
        ));
    }

    #[test]
    fn degraded_window_slows_down() {
        let window = 300_000i64;
        let config = SimConfig::new(0.0005, 0.002, 10.0 * window as f64, 17);
        let schedule = AnomalySchedule {
            entries: vec![ScheduleEntry {
                start_ms: 5.0 * window as f64,
                end_ms: 6.0 * window as f64,
                mu_factor: 0.5,
            }],
        };
        let (out, _) = inject_and_label(&config, &schedule, window).unwrap();
        let in_window = |r: &&TransactionRecord, w: i64| {
            r.timestamp_ms >= w * window && r.timestamp_ms < (w + 1) * window
        };
        let mean = |w: i64| {
            let xs: Vec<f64> = out
                .records
                .iter()
                .filter(|r| in_window(r, w))
                .map(|r| r.response_ms)
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        let baseline: f64 = (0..5).map(mean).sum::<f64>() / 5.0;
        assert!(
            mean(5) > baseline,
            "degraded mean {} vs baseline {}",
            mean(5),
            baseline
        );
    }

    #[test]
    fn tx_mix_draws_all_labels() {
        let mut config = SimConfig::new(0.001, 0.004, 1e6, 9);
        config.tx_type_mix = Some(vec![
            ("login".into(), 0.3),
            ("search".into(), 0.5),
            ("checkout".into(), 0.2),
        ]);
        let out = simulate_mm1(&config, &AnomalySchedule::empty()).unwrap();
        for label in ["login", "search", "checkout"] {
            assert!(out.records.iter().any(|r| r.tx_type == label));
        }
    }

    #[test]
    fn bad_mix_is_rejected() {
        let mut config = SimConfig::new(0.001, 0.004, 1e6, 9);
        config.tx_type_mix = Some(vec![("a".into(), 0.5), ("b".into(), 0.2)]);
        assert!(matches!(
            simulate_mm1(&config, &AnomalySchedule::empty()),
            Err(SimError::BadMix)
        ));
    }
}
