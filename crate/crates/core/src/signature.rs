//! Performance signatures: empirical service-time CDFs, Grade-of-Service
//! percentiles, and the nonlinear least-squares fit of
//!
//! ```text
//! Y = 1 - exp(-(k*X + j))
//! ```
//!
//! to each window's CDF. `k` is the coarse-grain main-body parameter, `j`
//! the fine-grain tail parameter; the fitted pair is the window's signature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::SampleWindow;

/// Default decimation budget for large windows.
pub const DEFAULT_MAX_POINTS: usize = 512;
/// Default iteration budget for the fitter.
pub const DEFAULT_MAX_ITERATIONS: usize = 50;
/// Default convergence tolerance (relative SSE decrease or step norm).
pub const DEFAULT_TOL: f64 = 1e-10;

/// Y-values this close to 1 are excluded from the log-linearized
/// initial estimate.
const LINEARIZE_EPS: f64 = 1e-9;
/// Damping ceiling; past this the fitter gives up and reports best-so-far.
const LAMBDA_CEILING: f64 = 1e12;

/// One point of an empirical CDF: response time and cumulative probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub x: f64,
    pub y: f64,
}

/// Empirical CDF built from a window's response times using Hazen plotting
/// positions `(i - 0.5) / n`. Duplicate response times collapse to a single
/// point carrying the largest plotting position, so `y` is strictly
/// increasing over distinct `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCDF {
    pub points: Vec<CdfPoint>,
    /// Set when the curve collapsed to a single distinct response time.
    pub degenerate: bool,
}

/// Per-window Grade-of-Service summary: arrival rate plus the percentile
/// chain reported for every sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoSSummary {
    /// Transactions in the window.
    pub arrival_rate: u64,
    pub p50: f64,
    pub p80: f64,
    pub p90: f64,
    pub p95: f64,
    pub p98: f64,
    pub p100: f64,
}

/// Fitted signature parameters plus fit diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    /// Main-body rate parameter, per millisecond.
    pub k: f64,
    /// Dimensionless tail offset parameter.
    pub j: f64,
    /// Sum of squared residuals at the returned parameters.
    pub sse: f64,
    /// Iterations consumed.
    pub iterations: usize,
    /// True when the relative SSE decrease or the step norm fell below
    /// tolerance within the iteration budget.
    pub converged: bool,
    /// Number of CDF points the fit ran on.
    pub n_points: usize,
    /// Set when a converged fit produced `k <= 0`, which cannot describe
    /// a service-time CDF.
    pub nonphysical_k: bool,
}

impl Signature {
    /// Model CDF value at `x`, clamped to `[0, 1]` for reporting.
    pub fn predict_cdf(&self, x: f64) -> f64 {
        predict_cdf(self.k, self.j, x)
    }

    /// Unclamped model value at `x`, for residual computation.
    pub fn predict_cdf_raw(&self, x: f64) -> f64 {
        predict_cdf_raw(self.k, self.j, x)
    }
}

/// Initial `(k, j)` estimate with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialEstimate {
    pub k0: f64,
    pub j0: f64,
    /// True when too few usable points forced the median-based fallback.
    pub fallback: bool,
}

/// Two-sided mean comparison of converged signatures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignatureComparison {
    pub avg_k_a: f64,
    pub avg_j_a: f64,
    pub avg_k_b: f64,
    pub avg_j_b: f64,
    /// `avg_k_a / avg_k_b`.
    pub k_ratio: f64,
    pub higher_k: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
    Equal,
}

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("window at {window_start} is not fittable ({count} records)")]
    UnfittableWindow { window_start: i64, count: usize },
    #[error("window is empty")]
    EmptyWindow,
    #[error("comparison side {side:?} has no converged signatures")]
    NoConvergedSignatures { side: Side },
}

/// Build the empirical CDF for a fittable window.
///
/// Response times are sorted and assigned Hazen plotting positions. When
/// the window holds more than `max_points` samples the curve is decimated
/// to `max_points` evenly spaced quantile ranks, always retaining the
/// largest observation.
pub fn build_ecdf(
    window: &SampleWindow,
    max_points: usize,
) -> Result<EmpiricalCDF, SignatureError> {
    if !window.fittable {
        return Err(SignatureError::UnfittableWindow {
            window_start: window.window_start,
            count: window.records.len(),
        });
    }
    let times: Vec<f64> = window.records.iter().map(|r| r.response_ms).collect();
    Ok(ecdf_from_times(&times, max_points))
}

/// Core ECDF construction over raw response times; `build_ecdf` is the
/// windowed wrapper.
pub fn ecdf_from_times(times: &[f64], max_points: usize) -> EmpiricalCDF {
    assert!(!times.is_empty(), "ECDF requires at least one sample");
    assert!(max_points >= 2, "max_points must be at least 2");
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("response times are finite"));
    let n = sorted.len();

    // (1-based rank, value) pairs after optional decimation to evenly
    // spaced quantile ranks. Ceiling division keeps ranks strictly
    // increasing and pins the last rank to n.
    let picked: Vec<(usize, f64)> = if n > max_points {
        (1..=max_points)
            .map(|m| {
                let rank = (m * n).div_ceil(max_points);
                (rank, sorted[rank - 1])
            })
            .collect()
    } else {
        sorted
            .iter()
            .enumerate()
            .map(|(i, &v)| (i + 1, v))
            .collect()
    };

    let mut points: Vec<CdfPoint> = Vec::with_capacity(picked.len());
    for (rank, x) in picked {
        let y = (rank as f64 - 0.5) / n as f64;
        match points.last_mut() {
            // ties in x keep the largest plotting position
            Some(last) if last.x == x => last.y = y,
            _ => points.push(CdfPoint { x, y }),
        }
    }
    let degenerate = points.len() == 1;
    EmpiricalCDF { points, degenerate }
}

/// Grade-of-Service summary of a non-empty window.
///
/// Percentiles use the nearest-rank method: the `ceil(p * n / 100)`-th
/// order statistic, with the 100th percentile pinned to the maximum.
pub fn gos_summary(window: &SampleWindow) -> Result<GoSSummary, SignatureError> {
    if window.records.is_empty() {
        return Err(SignatureError::EmptyWindow);
    }
    let mut sorted: Vec<f64> = window.records.iter().map(|r| r.response_ms).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("response times are finite"));
    let pct = |p: usize| nearest_rank(&sorted, p);
    Ok(GoSSummary {
        arrival_rate: window.records.len() as u64,
        p50: pct(50),
        p80: pct(80),
        p90: pct(90),
        p95: pct(95),
        p98: pct(98),
        p100: pct(100),
    })
}

/// Nearest-rank percentile over a sorted slice; `p` in integer percent.
/// Integer arithmetic avoids float rounding at exact rank boundaries.
fn nearest_rank(sorted: &[f64], p: usize) -> f64 {
    let n = sorted.len();
    let rank = ((p * n).div_ceil(100)).max(1);
    sorted[rank - 1]
}

/// Initial `(k0, j0)` from ordinary least squares on the linearization
/// `-ln(1 - y) = k*x + j`, over points with `y < 1 - 1e-9`.
///
/// With fewer than two usable distinct response times the estimate falls
/// back to `k0 = ln(2) / median(x)`, `j0 = 0` and sets the fallback flag.
pub fn initial_estimate(ecdf: &EmpiricalCDF) -> InitialEstimate {
    let usable: Vec<(f64, f64)> = ecdf
        .points
        .iter()
        .filter(|p| p.y < 1.0 - LINEARIZE_EPS)
        .map(|p| (p.x, -(1.0 - p.y).ln()))
        .collect();

    let distinct_x = {
        let mut xs: Vec<f64> = usable.iter().map(|&(x, _)| x).collect();
        xs.dedup();
        xs.len()
    };

    if distinct_x < 2 {
        let mut xs: Vec<f64> = ecdf.points.iter().map(|p| p.x).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let median = xs[xs.len() / 2];
        let k0 = if median > 0.0 {
            std::f64::consts::LN_2 / median
        } else {
            1.0
        };
        return InitialEstimate {
            k0,
            j0: 0.0,
            fallback: true,
        };
    }

    let n = usable.len() as f64;
    let sum_x: f64 = usable.iter().map(|&(x, _)| x).sum();
    let sum_z: f64 = usable.iter().map(|&(_, z)| z).sum();
    let mean_x = sum_x / n;
    let mean_z = sum_z / n;
    let sxx: f64 = usable
        .iter()
        .map(|&(x, _)| (x - mean_x) * (x - mean_x))
        .sum();
    let sxz: f64 = usable
        .iter()
        .map(|&(x, z)| (x - mean_x) * (z - mean_z))
        .sum();
    let k0 = sxz / sxx;
    let j0 = mean_z - k0 * mean_x;
    InitialEstimate {
        k0,
        j0,
        fallback: false,
    }
}

/// Model CDF value, clamped to `[0, 1]`.
pub fn predict_cdf(k: f64, j: f64, x: f64) -> f64 {
    predict_cdf_raw(k, j, x).clamp(0.0, 1.0)
}

/// Unclamped model value `1 - exp(-(k*x + j))`.
pub fn predict_cdf_raw(k: f64, j: f64, x: f64) -> f64 {
    1.0 - (-(k * x + j)).exp()
}

fn sse_at(points: &[CdfPoint], k: f64, j: f64) -> f64 {
    let mut sse = 0.0;
    for p in points {
        let r = p.y - predict_cdf_raw(k, j, p.x);
        sse += r * r;
    }
    if sse.is_finite() {
        sse
    } else {
        f64::INFINITY
    }
}

/// Fit the signature by damped Gauss-Newton (Levenberg-Marquardt) with the
/// analytic Jacobian of `1 - exp(-(k*x + j))`.
///
/// Converges when the relative SSE decrease or the parameter step norm
/// falls below `tol`. Non-finite trial points raise the damping factor;
/// past the damping ceiling the best parameters found so far are returned
/// with `converged = false`.
pub fn fit_signature(
    ecdf: &EmpiricalCDF,
    init: InitialEstimate,
    max_iterations: usize,
    tol: f64,
) -> Signature {
    assert!(max_iterations >= 1, "max_iterations must be at least 1");
    let points = &ecdf.points;
    let n_points = points.len();

    let mut k = init.k0;
    let mut j = init.j0;
    let mut sse = sse_at(points, k, j);
    let mut best = (k, j, sse);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    'outer: for iter in 1..=max_iterations {
        iterations = iter;

        // Normal equations J^T J and gradient J^T r with
        // d(yhat)/dk = x * e, d(yhat)/dj = e, e = exp(-(k*x + j)).
        let mut a = 0.0; // sum (x e)^2
        let mut b = 0.0; // sum x e^2
        let mut c = 0.0; // sum e^2
        let mut g_k = 0.0; // sum x e r
        let mut g_j = 0.0; // sum e r
        for p in points {
            let e = (-(k * p.x + j)).exp();
            let r = p.y - (1.0 - e);
            a += p.x * e * p.x * e;
            b += p.x * e * e;
            c += e * e;
            g_k += p.x * e * r;
            g_j += e * r;
        }
        if !(a.is_finite() && b.is_finite() && c.is_finite() && g_k.is_finite() && g_j.is_finite())
        {
            // current point overflows the model; cannot form a step
            break 'outer;
        }

        loop {
            // Marquardt scaling of the diagonal
            let a_d = a * (1.0 + lambda);
            let c_d = c * (1.0 + lambda);
            let det = a_d * c_d - b * b;
            if !det.is_finite() || det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                if lambda > LAMBDA_CEILING {
                    break 'outer;
                }
                continue;
            }
            let dk = (c_d * g_k - b * g_j) / det;
            let dj = (a_d * g_j - b * g_k) / det;
            let (k_try, j_try) = (k + dk, j + dj);
            let sse_try = sse_at(points, k_try, j_try);

            if sse_try <= sse {
                let step_norm = (dk * dk + dj * dj).sqrt();
                let rel_decrease = if sse > 0.0 {
                    (sse - sse_try) / sse
                } else {
                    0.0
                };
                k = k_try;
                j = j_try;
                sse = sse_try;
                if sse < best.2 {
                    best = (k, j, sse);
                }
                lambda = (lambda / 10.0).max(1e-12);
                if rel_decrease < tol || step_norm < tol || sse == 0.0 {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > LAMBDA_CEILING {
                break 'outer;
            }
        }
    }

    let (k_best, j_best, sse_best) = best;
    Signature {
        k: k_best,
        j: j_best,
        sse: sse_best,
        iterations,
        converged,
        n_points,
        nonphysical_k: converged && k_best <= 0.0,
    }
}

/// Convenience: initial estimate plus fit with default budgets.
pub fn fit_ecdf(ecdf: &EmpiricalCDF) -> Signature {
    fit_signature(
        ecdf,
        initial_estimate(ecdf),
        DEFAULT_MAX_ITERATIONS,
        DEFAULT_TOL,
    )
}

/// Compare two signature collections by the means of their converged
/// members.
pub fn compare_signatures(
    a: &[Signature],
    b: &[Signature],
) -> Result<SignatureComparison, SignatureError> {
    let mean_of = |sigs: &[Signature], side: Side| -> Result<(f64, f64), SignatureError> {
        let converged: Vec<&Signature> = sigs.iter().filter(|s| s.converged).collect();
        if converged.is_empty() {
            return Err(SignatureError::NoConvergedSignatures { side });
        }
        let n = converged.len() as f64;
        Ok((
            converged.iter().map(|s| s.k).sum::<f64>() / n,
            converged.iter().map(|s| s.j).sum::<f64>() / n,
        ))
    };
    let (avg_k_a, avg_j_a) = mean_of(a, Side::A)?;
    let (avg_k_b, avg_j_b) = mean_of(b, Side::B)?;
    let higher_k = if avg_k_a > avg_k_b {
        Side::A
    } else if avg_k_b > avg_k_a {
        Side::B
    } else {
        Side::Equal
    };
    Ok(SignatureComparison {
        avg_k_a,
        avg_j_a,
        avg_k_b,
        avg_j_b,
        k_ratio: avg_k_a / avg_k_b,
        higher_k,
    })
}
