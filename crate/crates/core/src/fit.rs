//! Stretched-exponential decay fits of coherence traces.
//!
//! The decay profile is
//!
//! ```text
//! ξ(t) = (1 - c) exp(-(t / t_d)^C) + c
//! ```
//!
//! with the fluctuation floor `c` estimated first as a time average and held
//! fixed. `(t_d, C)` come from a log-log linearisation refined by a damped
//! Gauss–Newton (Levenberg–Marquardt) iteration on the unweighted sum of
//! squared residuals.

use crate::error::{Error, Result};
use crate::spin::CoherenceTrace;

/// `(1 - c) exp(-(t / t_d)^C) + c`.
pub fn decay_profile(t: f64, t_d: f64, exponent: f64, floor: f64) -> f64 {
    (1.0 - floor) * (-(t / t_d).powf(exponent)).exp() + floor
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Linearisation band: only rescaled values in `(δ, 1 - δ)` are used.
    pub delta: f64,
    pub max_iterations: usize,
    /// Stop once `|Δp| / |p|` falls below this.
    pub relative_step_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            max_iterations: 200,
            relative_step_tol: 1e-10,
        }
    }
}

/// One trace's decay characterisation.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FitResult {
    pub t_d: f64,
    /// Stretching exponent `C`.
    pub c_exponent: f64,
    /// Fluctuation floor `c`.
    pub c_floor: f64,
    /// Sum of squared residuals.
    pub chi_sq: f64,
    /// `1 / chi_sq`; infinite for a perfect fit.
    pub weight: f64,
    /// False when the refinement did not converge and the linearised estimate
    /// was returned instead.
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn model(&self, t: f64) -> f64 {
        decay_profile(t, self.t_d, self.c_exponent, self.c_floor)
    }
}

/// Window over which the floor is averaged, in multiples of the crude decay
/// scale.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FloorWindow {
    pub start_factor: f64,
    pub end_factor: f64,
}

impl Default for FloorWindow {
    fn default() -> Self {
        Self {
            start_factor: 50.0,
            end_factor: 150.0,
        }
    }
}

impl FloorWindow {
    pub fn bounds(&self, decay_scale: f64) -> (f64, f64) {
        (self.start_factor * decay_scale, self.end_factor * decay_scale)
    }
}

/// First grid time where the trace drops below `1/e`, or the last time if it
/// never does.
pub fn crude_decay_scale(trace: &CoherenceTrace) -> f64 {
    let threshold = (-1.0f64).exp();
    trace
        .times()
        .iter()
        .zip(trace.values())
        .find(|(_, v)| **v < threshold)
        .map(|(t, _)| *t)
        .unwrap_or_else(|| *trace.times().last().unwrap())
}

fn interpolate(trace: &CoherenceTrace, t: f64) -> f64 {
    let ts = trace.times();
    let vs = trace.values();
    let i = ts.partition_point(|&x| x <= t);
    if i == 0 {
        return vs[0];
    }
    if i == ts.len() {
        return vs[ts.len() - 1];
    }
    let (t0, t1) = (ts[i - 1], ts[i]);
    let w = (t - t0) / (t1 - t0);
    vs[i - 1] * (1.0 - w) + vs[i] * w
}

/// Trapezoidal time average of the trace over `[t1, t2]`.
pub fn estimate_floor(trace: &CoherenceTrace, t1: f64, t2: f64) -> Result<f64> {
    let ts = trace.times();
    let (start, end) = (ts[0], ts[ts.len() - 1]);
    if t1 >= t2 || t1.is_nan() || t2.is_nan() || t1 < start || t2 > end {
        return Err(Error::arg(format!(
            "floor window [{t1}, {t2}] not inside trace span [{start}, {end}]"
        )));
    }
    let mut knots = vec![(t1, interpolate(trace, t1))];
    knots.extend(
        ts.iter()
            .zip(trace.values())
            .filter(|(t, _)| **t > t1 && **t < t2)
            .map(|(t, v)| (*t, *v)),
    );
    knots.push((t2, interpolate(trace, t2)));
    let area: f64 = knots
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(area / (t2 - t1))
}

/// Fit `(t_d, C)` with the floor `c` held fixed.
pub fn fit_decay(trace: &CoherenceTrace, floor: f64) -> Result<FitResult> {
    fit_decay_with(trace, floor, &FitOptions::default())
}

pub fn fit_decay_with(trace: &CoherenceTrace, floor: f64, opts: &FitOptions) -> Result<FitResult> {
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::arg(format!("floor {floor} outside [0, 1)")));
    }
    let (log_td, exponent) = linearised_estimate(trace, floor, opts.delta)?;
    let problem = Problem {
        times: trace.times(),
        values: trace.values(),
        floor,
    };
    let start = [log_td, exponent];
    let (params, iterations, converged) = problem.refine(start, opts);
    let params = if converged { params } else { start };
    let chi_sq = problem.chi_sq(params);
    Ok(FitResult {
        t_d: params[0].exp(),
        c_exponent: params[1],
        c_floor: floor,
        chi_sq,
        weight: 1.0 / chi_sq,
        converged,
        iterations,
    })
}

// Regress ln(-ln y) on ln t, y = (Ξ - c) / (1 - c). Returns (ln t_d, C).
fn linearised_estimate(trace: &CoherenceTrace, floor: f64, delta: f64) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = trace
        .times()
        .iter()
        .zip(trace.values())
        .filter(|(t, _)| **t > 0.0)
        .filter_map(|(t, v)| {
            let y = (v - floor) / (1.0 - floor);
            (y > delta && y < 1.0 - delta).then(|| (t.ln(), (-y.ln()).ln()))
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            usable: pts.len(),
            required: 3,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData {
            usable: 1,
            required: 3,
        });
    }
    // A non-positive slope means the trace is not decaying over the band;
    // start the refinement from a plain exponential instead.
    let slope = sxy / sxx;
    let exponent = if slope.is_finite() && slope > 0.0 { slope } else { 1.0 };
    let intercept = my - slope.max(0.0) * mx;
    let log_td = if slope > 0.0 { -intercept / exponent } else { mx };
    Ok((log_td, exponent))
}

struct Problem<'a> {
    times: &'a [f64],
    values: &'a [f64],
    floor: f64,
}

impl Problem<'_> {
    fn chi_sq(&self, p: [f64; 2]) -> f64 {
        let td = p[0].exp();
        self.times
            .iter()
            .zip(self.values)
            .map(|(t, v)| (v - decay_profile(*t, td, p[1], self.floor)).powi(2))
            .sum()
    }

    // Normal equations (JᵀJ, Jᵀr) for p = (ln t_d, C).
    fn normal_equations(&self, p: [f64; 2]) -> ([[f64; 2]; 2], [f64; 2]) {
        let (u, exponent) = (p[0], p[1]);
        let amp = 1.0 - self.floor;
        let mut a = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for (t, v) in self.times.iter().zip(self.values) {
            if *t <= 0.0 {
                continue;
            }
            let x = t.ln() - u;
            let s = (exponent * x).exp();
            let e = amp * (-s).exp();
            let r = v - (e + self.floor);
            let j = [e * s * exponent, -e * s * x];
            for row in 0..2 {
                g[row] += j[row] * r;
                for col in 0..2 {
                    a[row][col] += j[row] * j[col];
                }
            }
        }
        (a, g)
    }

    fn refine(&self, start: [f64; 2], opts: &FitOptions) -> ([f64; 2], usize, bool) {
        let mut p = start;
        let mut chi = self.chi_sq(p);
        let mut lambda = 1e-3;
        for iter in 1..=opts.max_iterations {
            if chi == 0.0 {
                return (p, iter - 1, true);
            }
            let (a, g) = self.normal_equations(p);
            let m = [
                [a[0][0] * (1.0 + lambda), a[0][1]],
                [a[1][0], a[1][1] * (1.0 + lambda)],
            ];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if !(det.is_finite() && det != 0.0) {
                lambda *= 10.0;
                if lambda > 1e20 {
                    return (p, iter, false);
                }
                continue;
            }
            let step = [
                (g[0] * m[1][1] - g[1] * m[0][1]) / det,
                (m[0][0] * g[1] - m[1][0] * g[0]) / det,
            ];
            let rel = step[0].hypot(step[1]) / (p[0].hypot(p[1]) + 1e-300);
            let trial = [p[0] + step[0], p[1] + step[1]];
            let trial_chi = if trial[1] > 0.0 { self.chi_sq(trial) } else { f64::INFINITY };
            if trial_chi <= chi {
                p = trial;
                chi = trial_chi;
                lambda = (lambda / 10.0).max(1e-12);
                if rel < opts.relative_step_tol {
                    return (p, iter, true);
                }
            } else {
                if rel < opts.relative_step_tol {
                    return (p, iter, true);
                }
                lambda *= 10.0;
                if lambda > 1e20 {
                    return (p, iter, false);
                }
            }
        }
        (p, opts.max_iterations, false)
    }
}
