//! Simulation-time conventions and physical constants for SI conversions.
//!
//! Simulations run with `η = n_ρ = 1`. Under the [`UnitConvention::Text`]
//! convention the simulation time is `T = η n_ρ^{ε/D} t`. Under
//! [`UnitConvention::Figure`] the ensemble is built at the doubled density
//! `2 n_ρ` and `T = η (2 n_ρ)^{ε/D} t`, which shortens every simulated
//! timescale by `2^{ε/D}`.

use std::fmt;
use std::str::FromStr;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Electromagnetic coupling strength `8.22e43 · e²`, Hz·m.
pub const ETA_ELECTROMAGNETIC: f64 = 8.22e43 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;

/// Spin-spin coupling strength for ⁶Li, m³·Hz.
pub const ETA_SPIN_LI6: f64 = 3.27e-26;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash)]
pub enum UnitConvention {
    #[default]
    Text,
    Figure,
}

impl UnitConvention {
    /// Multiplier applied to the particle density when building an ensemble.
    pub fn density_factor(self) -> f64 {
        match self {
            UnitConvention::Text => 1.0,
            UnitConvention::Figure => 2.0,
        }
    }

    pub fn effective_density(self, density: f64) -> f64 {
        density * self.density_factor()
    }

    /// Seconds per unit of simulation time.
    pub fn seconds_per_unit(self, eta: f64, density: f64, epsilon: f64, dimension: f64) -> f64 {
        1.0 / (eta * self.effective_density(density).powf(epsilon / dimension))
    }

    /// Factor by which a text-convention time exceeds the same quantity in
    /// this convention: `2^{ε/D}` for `Figure`, 1 for `Text`.
    pub fn time_scale_from_text(self, epsilon: f64, dimension: f64) -> f64 {
        self.density_factor().powf(epsilon / dimension)
    }
}

impl fmt::Display for UnitConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitConvention::Text => f.write_str("text"),
            UnitConvention::Figure => f.write_str("figure"),
        }
    }
}

impl FromStr for UnitConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(UnitConvention::Text),
            "figure" => Ok(UnitConvention::Figure),
            other => Err(format!("unknown unit convention {other:?} (expected text|figure)")),
        }
    }
}
