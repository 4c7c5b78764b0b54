//! Shared helpers for integration tests: independent oracles and
//! pipeline shorthands. Nothing here calls into the fitter's own
//! optimization path.

use perfsig_core::ingest::SampleWindow;
use perfsig_core::signature::{self, CdfPoint, EmpiricalCDF, GoSSummary, Signature};

/// Brute-force SSE oracle: minimum SSE over a 200 x 200 grid spanning
/// `[k0/4, 4*k0] x [j0 - 1, j0 + 1]`. Evaluates the model directly, so it
/// is independent of the iterative fitter it checks.
pub fn grid_min_sse(ecdf: &EmpiricalCDF, k0: f64, j0: f64) -> f64 {
    const STEPS: usize = 200;
    let (k_lo, k_hi) = (k0 / 4.0, 4.0 * k0);
    let (j_lo, j_hi) = (j0 - 1.0, j0 + 1.0);
    let mut best = f64::INFINITY;
    for ik in 0..STEPS {
        let k = k_lo + (k_hi - k_lo) * ik as f64 / (STEPS - 1) as f64;
        for ij in 0..STEPS {
            let j = j_lo + (j_hi - j_lo) * ij as f64 / (STEPS - 1) as f64;
            let mut sse = 0.0;
            for p in &ecdf.points {
                let r = p.y - (1.0 - (-(k * p.x + j)).exp());
                sse += r * r;
            }
            if sse < best {
                best = sse;
            }
        }
    }
    best
}

/// Noiseless curve samples: `n` points with `k*x` spanning `(0, 3]`.
pub fn noiseless_ecdf(k: f64, j: f64, n: usize) -> EmpiricalCDF {
    let points = (1..=n)
        .map(|i| {
            let x = 3.0 * i as f64 / (n as f64 * k);
            CdfPoint {
                x,
                y: 1.0 - (-(k * x + j)).exp(),
            }
        })
        .collect();
    EmpiricalCDF {
        points,
        degenerate: false,
    }
}

/// Fit every fittable window with default budgets, keeping the series
/// positional (None for unfittable windows).
pub fn fit_window_series(windows: &[SampleWindow], max_points: usize) -> Vec<Option<Signature>> {
    windows
        .iter()
        .map(|w| {
            if !w.fittable {
                return None;
            }
            let ecdf = signature::build_ecdf(w, max_points).expect("fittable window");
            Some(signature::fit_ecdf(&ecdf))
        })
        .collect()
}

/// GoS for every non-empty window.
#[allow(dead_code)]
pub fn gos_series(windows: &[SampleWindow]) -> Vec<Option<GoSSummary>> {
    windows
        .iter()
        .map(|w| {
            if w.records.is_empty() {
                None
            } else {
                Some(signature::gos_summary(w).expect("non-empty window"))
            }
        })
        .collect()
}
