//! Monte Carlo runs over `(N, D, ε)` cells and the empirical decay laws.
//!
//! Each run samples a fresh ensemble, builds its coherence trace, estimates
//! the fluctuation floor, fits the decay profile and bounds the recurrence
//! time. Runs inside a cell are aggregated with weights `w = 1 / χ²`.

use rayon::prelude::*;

use crate::error::Result;
use crate::fit::{crude_decay_scale, estimate_floor, fit_decay_with, FitOptions, FitResult, FloorWindow};
use crate::recurrence::{ensemble_log_bound, DEFAULT_MAX_DENOMINATOR};
use crate::spin::{linear_grid, sample_ensemble_with, CoherenceTrace, Geometry, ModelParams, SpinEnsemble, TimeGrid};
use crate::units::UnitConvention;

/// One point of the parameter sweep.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub n_particles: usize,
    pub dimension: usize,
    pub epsilon: f64,
    pub runs: usize,
    pub base_seed: u64,
}

impl SweepCell {
    pub fn new(n_particles: usize, dimension: usize, epsilon: f64) -> Self {
        Self {
            n_particles,
            dimension,
            epsilon,
            runs: 100,
            base_seed: 0,
        }
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn with_base_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    /// Seed of run `run` in this cell.
    pub fn run_seed(&self, run: usize) -> u64 {
        derive_seed(self.base_seed, self.n_particles, self.dimension, self.epsilon, run)
    }

    /// Whether the cell lies in the densely simulated region
    /// (`N ∈ [20, 100]`, `D ∈ [1, 4]`, `ε ∈ [1, 2]`) or on the `N = 200`,
    /// `D, ε ≤ 10` slice.
    pub fn in_validated_domain(&self) -> bool {
        let dense = (20..=100).contains(&self.n_particles)
            && (1..=4).contains(&self.dimension)
            && (1.0..=2.0).contains(&self.epsilon);
        let slice = self.n_particles == 200 && self.dimension <= 10 && (1.0..=10.0).contains(&self.epsilon);
        dense || slice
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stable per-run seed from the cell coordinates and run index.
pub fn derive_seed(base_seed: u64, n_particles: usize, dimension: usize, epsilon: f64, run: usize) -> u64 {
    [n_particles as u64, dimension as u64, epsilon.to_bits(), run as u64]
        .iter()
        .fold(splitmix64(base_seed), |h, &v| splitmix64(h ^ v))
}

/// Settings shared by every run of a sweep.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub grid: TimeGrid,
    pub floor_window: FloorWindow,
    /// Samples in the separate floor-averaging trace.
    pub floor_points: usize,
    pub fit: FitOptions,
    pub max_denominator: u64,
    pub unit_convention: UnitConvention,
    pub geometry: Geometry,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid: TimeGrid::default(),
            floor_window: FloorWindow::default(),
            floor_points: 2048,
            fit: FitOptions::default(),
            max_denominator: DEFAULT_MAX_DENOMINATOR,
            unit_convention: UnitConvention::Text,
            geometry: Geometry::default(),
        }
    }
}

impl PipelineConfig {
    /// Simulation-unit parameters (`η = n_ρ = 1`) for a cell, with the density
    /// adjusted for the unit convention.
    pub fn model_params(&self, n_particles: usize, dimension: usize, epsilon: f64) -> ModelParams {
        ModelParams::full_superposition(n_particles, dimension, epsilon)
            .with_density(self.unit_convention.effective_density(1.0))
    }
}

/// Result of one successful run.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub fit: FitResult,
    pub log10_tp: f64,
    pub decay_scale: f64,
}

/// One run's record; failures keep their error message.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub outcome: std::result::Result<RunOutcome, String>,
}

/// Floor estimate for an ensemble given its main trace.
pub fn ensemble_floor(ensemble: &SpinEnsemble, trace: &CoherenceTrace, config: &PipelineConfig) -> Result<f64> {
    let scale = crude_decay_scale(trace);
    let (t1, t2) = config.floor_window.bounds(scale);
    let tail = ensemble.xi_re_trace(&linear_grid(t1, t2, config.floor_points))?;
    estimate_floor(&tail, t1, t2)
}

/// Full protocol for one ensemble.
pub fn analyse_ensemble(ensemble: &SpinEnsemble, config: &PipelineConfig) -> Result<RunOutcome> {
    let trace = ensemble.xi_re_trace(&config.grid.build())?;
    let decay_scale = crude_decay_scale(&trace);
    let floor = ensemble_floor(ensemble, &trace, config)?;
    let fit = fit_decay_with(&trace, floor, &config.fit)?;
    let log10_tp = ensemble_log_bound(ensemble, config.max_denominator)?.log10_tp;
    Ok(RunOutcome {
        fit,
        log10_tp,
        decay_scale,
    })
}

/// Sample and analyse a single run.
pub fn run_single(params: &ModelParams, seed: u64, config: &PipelineConfig) -> Result<RunOutcome> {
    let ensemble = sample_ensemble_with(params, seed, &config.geometry)?;
    analyse_ensemble(&ensemble, config)
}

/// Weighted mean and standard deviation of one fitted quantity.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct WeightedStat {
    pub mean: f64,
    pub std: f64,
    /// `std · √Σŵ²` with normalised weights `ŵ`.
    pub stderr: f64,
}

/// Aggregated statistics of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    pub cell: SweepCell,
    pub records: Vec<RunRecord>,
    pub succeeded: usize,
    pub failed: usize,
    pub t_d: WeightedStat,
    pub c_exponent: WeightedStat,
    pub c_floor: WeightedStat,
    pub mean_log10_tp: f64,
}

/// Run every repetition of `cell` and aggregate.
pub fn run_cell(cell: &SweepCell, config: &PipelineConfig) -> CellStats {
    let params = config.model_params(cell.n_particles, cell.dimension, cell.epsilon);
    let records: Vec<RunRecord> = (0..cell.runs)
        .into_par_iter()
        .map(|run| {
            let seed = cell.run_seed(run);
            RunRecord {
                run,
                seed,
                outcome: run_single(&params, seed, config).map_err(|e| e.to_string()),
            }
        })
        .collect();
    aggregate(*cell, records)
}

/// Fixed-order weighted aggregation over run records.
pub fn aggregate(cell: SweepCell, records: Vec<RunRecord>) -> CellStats {
    let ok: Vec<&RunOutcome> = records.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let weights = normalised_weights(&ok);
    let stat = |f: &dyn Fn(&RunOutcome) -> f64| weighted_stat(&weights, &ok.iter().map(|o| f(o)).collect::<Vec<_>>());
    let t_d = stat(&|o| o.fit.t_d);
    let c_exponent = stat(&|o| o.fit.c_exponent);
    let c_floor = stat(&|o| o.fit.c_floor);
    let mean_log10_tp = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().map(|o| o.log10_tp).sum::<f64>() / ok.len() as f64
    };
    let succeeded = ok.len();
    CellStats {
        cell,
        failed: records.len() - succeeded,
        succeeded,
        records,
        t_d,
        c_exponent,
        c_floor,
        mean_log10_tp,
    }
}

// w = 1/χ² normalised to sum 1. Perfect fits (infinite weight) share the
// total weight equally.
fn normalised_weights(ok: &[&RunOutcome]) -> Vec<f64> {
    let raw: Vec<f64> = ok.iter().map(|o| o.fit.weight).collect();
    if raw.iter().any(|w| w.is_infinite()) {
        let k = raw.iter().filter(|w| w.is_infinite()).count() as f64;
        return raw.iter().map(|w| if w.is_infinite() { 1.0 / k } else { 0.0 }).collect();
    }
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn weighted_stat(weights: &[f64], xs: &[f64]) -> WeightedStat {
    if xs.is_empty() {
        return WeightedStat {
            mean: f64::NAN,
            std: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean: f64 = weights.iter().zip(xs).map(|(w, x)| w * x).sum();
    let var: f64 = weights.iter().zip(xs).map(|(w, x)| w * (x - mean).powi(2)).sum();
    let std = var.sqrt();
    let stderr = std * weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    WeightedStat { mean, std, stderr }
}

/// Fitted stretching exponent `f(D, ε) = 1.97 (1 - 0.93 e^{-0.65 D^{1.35} ε^{-1.68}})`.
pub fn f_exponent(dimension: f64, epsilon: f64) -> f64 {
    1.97 * (1.0 - 0.93 * (-0.65 * dimension.powf(1.35) * epsilon.powf(-1.68)).exp())
}

/// Fitted decoherence time
///
/// ```text
/// τ_d = η⁻¹ n_ρ^{-ε/D} (N/200)^{-0.085(D-1)/ε}
///       · [0.29 e^{-0.79(D-1)ε^{1/4} - 0.13(ε-3.4)²}
///          + 0.17 (ε-1)/2^ε ((D-2)²)^{0.19(ε-1)} + 0.03 ε^{-1/2} + 0.07]
/// ```
///
/// in seconds, or in simulation units when `η = n_ρ = 1`. For `ε < 1` the
/// middle term is singular at `D = 2`.
pub fn tau_d_law(n_particles: usize, density: f64, eta: f64, epsilon: f64, dimension: f64) -> f64 {
    let n = n_particles as f64;
    let (d, e) = (dimension, epsilon);
    let scale = 1.0 / eta * density.powf(-e / d) * (n / 200.0).powf(-0.085 * (d - 1.0) / e);
    let gauss = 0.29 * (-0.79 * (d - 1.0) * e.powf(0.25) - 0.13 * (e - 3.4).powi(2)).exp();
    let runaway = if e == 1.0 {
        0.0
    } else {
        0.17 * (e - 1.0) / 2f64.powf(e) * ((d - 2.0).powi(2)).powf(0.19 * (e - 1.0))
    };
    scale * (gauss + runaway + 0.03 / e.sqrt() + 0.07)
}

/// `√(N/200) e^{ε/2}`, the right-hand side of the regime condition.
pub fn fluctuation_threshold(n_particles: usize, epsilon: f64) -> f64 {
    (n_particles as f64 / 200.0).sqrt() * (epsilon / 2.0).exp()
}

/// True in the low-fluctuation regime `D + 1 > √(N/200) e^{ε/2}`.
pub fn fluctuation_regime(n_particles: usize, dimension: f64, epsilon: f64) -> bool {
    dimension + 1.0 > fluctuation_threshold(n_particles, epsilon)
}
