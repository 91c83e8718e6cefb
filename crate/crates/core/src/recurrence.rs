//! Upper estimates of the Poincaré recurrence time.
//!
//! Each coupled pair contributes a factor `cos(2 g t)` with period
//! `T_i = π / g`. Writing `T_unit / T_i = n_i / d_i` in lowest terms, every
//! factor returns to its initial value after `T_unit · ∏ d_i`. The product
//! overflows any float for more than a handful of particles, so the bound is
//! carried as `log10`.
//!
//! Pairs can share periods, so the product may count the same factor more
//! than once; the result is still an upper bound.

use crate::error::{Error, Result};
use crate::spin::SpinEnsemble;

pub const DEFAULT_MAX_DENOMINATOR: u64 = 10_000;

/// Periods `π / g_lk` for every pair `l < k`, in row-major pair order.
pub fn pair_periods(ensemble: &SpinEnsemble) -> Vec<f64> {
    pair_list(ensemble).into_iter().map(|(_, _, p)| p).collect()
}

/// `(l, k, π / g_lk)` for every pair `l < k`.
pub fn pair_list(ensemble: &SpinEnsemble) -> Vec<(usize, usize, f64)> {
    let n = ensemble.n();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for l in 0..n {
        for k in l + 1..n {
            out.push((l, k, std::f64::consts::PI / ensemble.coupling(l, k)));
        }
    }
    out
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Last continued-fraction convergent `n/d` of `x` with `d <= max_denominator`.
pub fn rational_approx(x: f64, max_denominator: u64) -> Result<(u64, u64)> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::arg(format!("cannot approximate non-positive value {x}")));
    }
    if max_denominator == 0 {
        return Err(Error::arg("max_denominator must be >= 1"));
    }
    // h/k convergents; (h_{-1}, k_{-1}) = (1, 0), (h_{-2}, k_{-2}) = (0, 1)
    let (mut h_prev, mut h) = (0u128, 1u128);
    let (mut k_prev, mut k) = (1u128, 0u128);
    let mut rem = x;
    let mut best: Option<(u128, u128)> = None;
    for _ in 0..64 {
        // snap quotients that roundoff has pushed just below an integer
        let a = if (rem - rem.round()).abs() <= 1e-9 * rem.max(1.0) {
            rem.round()
        } else {
            rem.floor()
        };
        if a > u64::MAX as f64 {
            break;
        }
        let a = a as u128;
        let h_next = a * h + h_prev;
        let k_next = a * k + k_prev;
        if k_next > max_denominator as u128 || h_next > u64::MAX as u128 {
            break;
        }
        (h_prev, h, k_prev, k) = (h, h_next, k, k_next);
        best = Some((h, k));
        let frac = rem - a as f64;
        // stop once the expansion has reproduced x to working precision
        if frac <= 1e-12 * rem.max(1.0) || ((h as f64 / k as f64) - x).abs() <= f64::EPSILON * x {
            break;
        }
        rem = 1.0 / frac;
    }
    // x < 1 with a first partial quotient of 0 yields 0/1; the smallest
    // positive candidate is then 1/max_denominator.
    let (n, d) = match best {
        Some((0, _)) | None => (1, max_denominator as u128),
        Some(nd) => nd,
    };
    let (n, d) = (n as u64, d as u64);
    let g = gcd(n, d);
    Ok((n / g, d / g))
}

/// Procedural recurrence bound for one ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrenceEstimate {
    pub t_unit: f64,
    /// `(n_i, d_i)` per pair, in the order of the input periods.
    pub rationals: Vec<(u64, u64)>,
    /// `log10(T_unit · ∏ d_i)`.
    pub log10_tp: f64,
}

/// `log10(T_unit ∏ d_i)` with `d_i` from `T_unit / T_i ≈ n_i / d_i`.
pub fn poincare_log_bound(periods: &[f64], t_unit: f64, max_denominator: u64) -> Result<RecurrenceEstimate> {
    if periods.is_empty() {
        return Err(Error::arg("no periods"));
    }
    if !(t_unit.is_finite() && t_unit > 0.0) {
        return Err(Error::arg(format!("t_unit must be positive, got {t_unit}")));
    }
    let rationals = periods
        .iter()
        .map(|&p| rational_approx(t_unit / p, max_denominator))
        .collect::<Result<Vec<_>>>()?;
    let log10_tp = t_unit.log10() + rationals.iter().map(|&(_, d)| (d as f64).log10()).sum::<f64>();
    Ok(RecurrenceEstimate {
        t_unit,
        rationals,
        log10_tp,
    })
}

/// `T_unit = π η⁻¹ n_ρ^{-ε/D}` for the ensemble's parameters.
pub fn default_t_unit(ensemble: &SpinEnsemble) -> f64 {
    let p = ensemble.params();
    std::f64::consts::PI / (p.eta * p.density.powf(p.epsilon / p.dimension as f64))
}

/// Procedural bound for an ensemble with the default time unit.
pub fn ensemble_log_bound(ensemble: &SpinEnsemble, max_denominator: u64) -> Result<RecurrenceEstimate> {
    poincare_log_bound(&pair_periods(ensemble), default_t_unit(ensemble), max_denominator)
}

/// Fitted law `T_P = π η⁻¹ n_ρ^{-ε/D} e^{3.07 (N² - N)}`, as `log10`.
pub fn recurrence_law(n_particles: usize, density: f64, eta: f64, epsilon: f64, dimension: f64) -> f64 {
    let n = n_particles as f64;
    let prefactor = std::f64::consts::PI / eta * density.powf(-epsilon / dimension);
    prefactor.log10() + 3.07 * (n * n - n) / std::f64::consts::LN_10
}

/// `log10(N!)`, the factorial-scaling comparator.
pub fn log10_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).log10()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{sample_ensemble, ModelParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_rationals() {
        assert_eq!(rational_approx(2.0 / 3.0, 10_000).unwrap(), (2, 3));
        assert_eq!(rational_approx(1.0, 10).unwrap(), (1, 1));
        assert_eq!(rational_approx(1.5, 10).unwrap(), (3, 2));
        assert_eq!(rational_approx(7.0, 1).unwrap(), (7, 1));
    }

    #[test]
    fn pi_convergent() {
        assert_eq!(rational_approx(std::f64::consts::PI, 120).unwrap(), (355, 113));
        assert_eq!(rational_approx(std::f64::consts::PI, 100).unwrap(), (22, 7));
    }

    #[test]
    fn tiny_value_uses_smallest_positive_fraction() {
        assert_eq!(rational_approx(1e-9, 100).unwrap(), (1, 100));
    }

    #[test]
    fn rejects_non_positive() {
        assert!(rational_approx(0.0, 10).is_err());
        assert!(rational_approx(-1.0, 10).is_err());
        assert!(rational_approx(f64::NAN, 10).is_err());
        assert!(rational_approx(1.0, 0).is_err());
    }

    #[test]
    fn pair_counts() {
        for n in [2usize, 3, 20] {
            let ens = sample_ensemble(&ModelParams::full_superposition(n, 2, 1.0), 1).unwrap();
            let p = pair_periods(&ens);
            assert_eq!(p.len(), n * (n - 1) / 2);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn commensurate_bounds() {
        let e = poincare_log_bound(&[2.0], 2.0, 10_000).unwrap();
        assert_eq!(e.rationals, vec![(1, 1)]);
        assert_abs_diff_eq!(e.log10_tp, 2f64.log10(), epsilon = 1e-15);
        let e = poincare_log_bound(&[3.0], 2.0, 10_000).unwrap();
        assert_eq!(e.rationals, vec![(2, 3)]);
        assert_abs_diff_eq!(e.log10_tp, 6f64.log10(), epsilon = 1e-15);
        assert!(poincare_log_bound(&[], 1.0, 10).is_err());
    }

    #[test]
    fn law_direct_substitution() {
        let base = (std::f64::consts::PI / 2.5 * 3f64.powf(-1.5 / 2.0)).log10();
        let got = recurrence_law(2, 3.0, 2.5, 1.5, 2.0);
        assert_abs_diff_eq!(got, base + 6.14 / std::f64::consts::LN_10, epsilon = 1e-12);
        let doubled = recurrence_law(2, 3.0, 5.0, 1.5, 2.0);
        assert_abs_diff_eq!(doubled - got, -2f64.log10(), epsilon = 1e-12);
    }

    #[test]
    fn factorial_comparator() {
        assert_abs_diff_eq!(log10_factorial(5), 120f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(log10_factorial(100), 157.97, epsilon = 0.01);
    }
}
