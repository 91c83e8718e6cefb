//! Closed-system coherence decay.
//!
//! Coherence and entropy of finite density matrices, an exactly solvable
//! ensemble of spins with power-law `σz ⊗ σz` couplings, stretched-exponential
//! fits of the decay profile, Poincaré recurrence bounds and parameter sweeps
//! over ensembles.

pub mod density;
pub mod error;
pub mod fit;
pub mod io;
pub mod recurrence;
pub mod spin;
pub mod sweep;
pub mod units;

pub use num_complex::Complex64 as C64;

pub use density::{coherence, metrics_report, partial_trace, tensor_product, von_neumann_entropy, DensityMatrix, MetricsReport};
pub use error::{Error, Result};
pub use fit::{fit_decay, FitOptions, FitResult};
pub use recurrence::{poincare_log_bound, rational_approx, recurrence_law, RecurrenceEstimate};
pub use spin::{sample_ensemble, CoherenceTrace, ModelParams, SpinEnsemble, TimeGrid};
pub use sweep::{run_cell, CellStats, PipelineConfig, SweepCell};
pub use units::UnitConvention;
