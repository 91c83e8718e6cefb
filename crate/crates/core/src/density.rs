//! Density matrices and the basis-independent coherence and entropy metrics.
//!
//! The coherence of an `N`-dimensional state is
//!
//! ```text
//! Ξ(ρ) = N/(N-1) · (λ_max - 1/N)
//! ```
//!
//! where `λ_max` is the largest eigenvalue of `ρ`. It is zero for the
//! maximally mixed state, one for any pure state, and invariant under unitary
//! conjugation. Entropies are von Neumann entropies in nats.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Numerical tolerances used when validating and analysing states.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Tolerances {
    /// Hermiticity, trace and positivity checks.
    pub structural: f64,
    /// Accuracy expected from the dense eigen-solve.
    pub spectral: f64,
    /// Negative eigenvalues above `-negative_clamp` are treated as zero in
    /// entropy evaluation; anything lower is an invalid state.
    pub negative_clamp: f64,
    /// Maximum number of matrix entries a tensor product may allocate.
    pub max_entries: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            structural: 1e-12,
            spectral: 1e-10,
            negative_clamp: 1e-9,
            max_entries: 1 << 20,
        }
    }
}

/// A Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validate `m` against the default [`Tolerances`].
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        Self::with_tolerances(m, &Tolerances::default())
    }

    pub fn with_tolerances(m: DMatrix<C64>, tol: &Tolerances) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::arg("density matrix must have dimension >= 1"));
        }
        if m.nrows() != m.ncols() {
            return Err(Error::arg(format!(
                "matrix is not square: {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let dev = hermitian_deviation(&m);
        if dev > tol.structural {
            return Err(Error::state(format!(
                "not Hermitian (max deviation {dev:.3e})"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > tol.structural || tr.im.abs() > tol.structural {
            return Err(Error::state(format!("trace is not 1 (got {tr})")));
        }
        let rho = Self { m };
        let min = rho
            .sorted_eigenvalues()
            .last()
            .copied()
            .unwrap_or(0.0);
        if min < -tol.structural {
            return Err(Error::state(format!(
                "not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(rho)
    }

    /// Wrap a matrix without validation. Callers are responsible for the
    /// density-matrix invariants; analysis routines still re-check what they
    /// depend on.
    pub fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        Self { m }
    }

    /// Projector `|ψ⟩⟨ψ|`; `psi` must be normalised.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        if psi.is_empty() {
            return Err(Error::arg("empty state vector"));
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::state(format!("state vector norm^2 is {norm}")));
        }
        let n = psi.len();
        Ok(Self {
            m: DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj()),
        })
    }

    /// `I/N`.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dimension must be >= 1"));
        }
        let v = C64::new(1.0 / dim as f64, 0.0);
        Ok(Self {
            m: DMatrix::from_diagonal_element(dim, dim, v),
        })
    }

    /// Build from a real symmetric matrix given row-major.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::arg("rows must form a square matrix"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// `U ρ U†`. `u` must be unitary for the result to remain a state.
    pub fn conjugate_by(&self, u: &DMatrix<C64>) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::arg(format!(
                "unitary is {}x{}, state is {}x{}",
                u.nrows(),
                u.ncols(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(Self {
            m: u * &self.m * u.adjoint(),
        })
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn sorted_eigenvalues(&self) -> Vec<f64> {
        let h = (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Eigenvalues of a density matrix, sorted descending.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Full real spectrum of `rho`, descending.
pub fn eigen_spectrum(rho: &DensityMatrix) -> Result<SpectralDecomposition> {
    eigen_spectrum_with(rho, &Tolerances::default())
}

pub fn eigen_spectrum_with(rho: &DensityMatrix, tol: &Tolerances) -> Result<SpectralDecomposition> {
    if rho.dim() == 0 {
        return Err(Error::arg("dimension 0"));
    }
    let dev = hermitian_deviation(&rho.m);
    if dev > tol.structural {
        return Err(Error::state(format!(
            "not Hermitian (max deviation {dev:.3e})"
        )));
    }
    let eigenvalues = rho.sorted_eigenvalues();
    let sum: f64 = eigenvalues.iter().sum();
    if (sum - 1.0).abs() > tol.spectral {
        return Err(Error::state(format!("spectrum sums to {sum}")));
    }
    Ok(SpectralDecomposition { eigenvalues })
}

/// `N/(N-1) · (λ_max - 1/N)` for a state of dimension `dim`.
pub fn coherence_from_lambda_max(lambda_max: f64, dim: usize) -> Result<f64> {
    coherence_from_lambda_max_with(lambda_max, dim, &Tolerances::default())
}

pub fn coherence_from_lambda_max_with(lambda_max: f64, dim: usize, tol: &Tolerances) -> Result<f64> {
    if dim < 2 {
        return Err(Error::arg(format!(
            "coherence needs dimension >= 2, got {dim}"
        )));
    }
    let n = dim as f64;
    let xi = n / (n - 1.0) * (lambda_max - 1.0 / n);
    if xi < 0.0 {
        if xi < -tol.structural {
            return Err(Error::state(format!("coherence {xi} below 0")));
        }
        return Ok(0.0);
    }
    if xi > 1.0 {
        if xi > 1.0 + tol.structural {
            return Err(Error::state(format!("coherence {xi} above 1")));
        }
        return Ok(1.0);
    }
    Ok(xi)
}

/// Basis-independent coherence `Ξ(ρ)`.
pub fn coherence(rho: &DensityMatrix) -> Result<f64> {
    coherence_with(rho, &Tolerances::default())
}

pub fn coherence_with(rho: &DensityMatrix, tol: &Tolerances) -> Result<f64> {
    if rho.dim() < 2 {
        return Err(Error::arg(format!(
            "coherence needs dimension >= 2, got {}",
            rho.dim()
        )));
    }
    let spec = eigen_spectrum_with(rho, tol)?;
    coherence_from_lambda_max_with(spec.lambda_max(), rho.dim(), tol)
}

/// `-Σ λ ln λ` over a spectrum, with `0 ln 0 = 0`.
pub fn entropy_from_spectrum(eigenvalues: &[f64], tol: &Tolerances) -> Result<f64> {
    let mut s = 0.0;
    for &l in eigenvalues {
        if l < -tol.negative_clamp {
            return Err(Error::state(format!("negative eigenvalue {l:.3e}")));
        }
        if l > 0.0 {
            s -= l * l.ln();
        }
    }
    Ok(s.max(0.0))
}

/// Von Neumann entropy `-Tr ρ ln ρ` in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    von_neumann_entropy_with(rho, &Tolerances::default())
}

pub fn von_neumann_entropy_with(rho: &DensityMatrix, tol: &Tolerances) -> Result<f64> {
    let spec = eigen_spectrum_with(rho, tol)?;
    entropy_from_spectrum(spec.eigenvalues(), tol)
}

/// `a ⊗ b` with `a` as the more significant factor.
pub fn tensor_product(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix> {
    tensor_product_with(a, b, &Tolerances::default())
}

pub fn tensor_product_with(a: &DensityMatrix, b: &DensityMatrix, tol: &Tolerances) -> Result<DensityMatrix> {
    let dim = a
        .dim()
        .checked_mul(b.dim())
        .ok_or_else(|| Error::Capacity("dimension overflow".into()))?;
    let entries = dim
        .checked_mul(dim)
        .ok_or_else(|| Error::Capacity("entry count overflow".into()))?;
    if entries > tol.max_entries {
        return Err(Error::Capacity(format!(
            "product has {entries} entries, limit is {}",
            tol.max_entries
        )));
    }
    Ok(DensityMatrix {
        m: a.m.kronecker(&b.m),
    })
}

/// Trace out every subsystem except `keep`.
///
/// Subsystems are ordered most significant first, matching
/// [`tensor_product`].
pub fn partial_trace(rho: &DensityMatrix, subsystem_dims: &[usize], keep: usize) -> Result<DensityMatrix> {
    if subsystem_dims.is_empty() || subsystem_dims.contains(&0) {
        return Err(Error::arg("subsystem dimensions must be positive"));
    }
    let total: usize = subsystem_dims.iter().product();
    if total != rho.dim() {
        return Err(Error::arg(format!(
            "subsystem dimensions multiply to {total}, state has dimension {}",
            rho.dim()
        )));
    }
    if keep >= subsystem_dims.len() {
        return Err(Error::arg(format!(
            "subsystem index {keep} out of range for {} subsystems",
            subsystem_dims.len()
        )));
    }
    let dk = subsystem_dims[keep];
    let inner: usize = subsystem_dims[keep + 1..].iter().product();
    let outer: usize = subsystem_dims[..keep].iter().product();
    let block = dk * inner;

    let mut out = DMatrix::<C64>::zeros(dk, dk);
    for hi in 0..outer {
        for lo in 0..inner {
            let base = hi * block + lo;
            for i in 0..dk {
                let r = base + i * inner;
                for j in 0..dk {
                    out[(i, j)] += rho.m[(r, base + j * inner)];
                }
            }
        }
    }
    Ok(DensityMatrix { m: out })
}

/// Idealistic and realistic coherence and entropy of a partitioned state.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub xi_id: f64,
    pub xi_re: f64,
    pub s_id: f64,
    pub s_re: f64,
    /// `S_re - S_id`.
    pub mutual_information: f64,
    /// `Ξ_id - Ξ_re`.
    pub mutual_entanglement: f64,
}

impl MetricsReport {
    fn assemble(xi_id: f64, s_id: f64, xi_re: f64, s_re: f64) -> Self {
        Self {
            xi_id,
            xi_re,
            s_id,
            s_re,
            mutual_information: s_re - s_id,
            mutual_entanglement: xi_id - xi_re,
        }
    }
}

/// Compare the full state against its per-subsystem reductions.
///
/// `Ξ_re` is the mean of subsystem coherences, `S_re` the sum of subsystem
/// entropies.
pub fn metrics_report(full: &DensityMatrix, partition: &[usize]) -> Result<MetricsReport> {
    let tol = Tolerances::default();
    let spec = eigen_spectrum_with(full, &tol)?;
    let xi_id = coherence_from_lambda_max_with(spec.lambda_max(), full.dim(), &tol)?;
    let s_id = entropy_from_spectrum(spec.eigenvalues(), &tol)?;

    let mut xi_sum = 0.0;
    let mut s_re = 0.0;
    for k in 0..partition.len() {
        let sub = partial_trace(full, partition, k)?;
        xi_sum += coherence_with(&sub, &tol)?;
        s_re += von_neumann_entropy_with(&sub, &tol)?;
    }
    let xi_re = xi_sum / partition.len() as f64;
    Ok(MetricsReport::assemble(xi_id, s_id, xi_re, s_re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rho_half() -> DensityMatrix {
        DensityMatrix::from_real_rows(&[&[0.5, 0.25], &[0.25, 0.5]]).unwrap()
    }

    #[test]
    fn spectrum_of_maximally_mixed_qubit() {
        let spec = eigen_spectrum(&DensityMatrix::maximally_mixed(2).unwrap()).unwrap();
        assert_abs_diff_eq!(spec.eigenvalues()[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.eigenvalues()[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn worked_example_qubit() {
        let rho = rho_half();
        let spec = eigen_spectrum(&rho).unwrap();
        assert_abs_diff_eq!(spec.eigenvalues()[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.eigenvalues()[1], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(coherence(&rho).unwrap(), 0.5, epsilon = 1e-12);
        let exact = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert_abs_diff_eq!(von_neumann_entropy(&rho).unwrap(), exact, epsilon = 1e-12);
        assert_abs_diff_eq!(exact, 0.5623, epsilon = 1e-3);
    }

    #[test]
    fn worked_example_joint() {
        let joint = tensor_product(&rho_half(), &rho_half()).unwrap();
        assert_eq!(joint.dim(), 4);
        let spec = eigen_spectrum(&joint).unwrap();
        let want = [9.0 / 16.0, 3.0 / 16.0, 3.0 / 16.0, 1.0 / 16.0];
        for (got, want) in spec.eigenvalues().iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(coherence(&joint).unwrap(), 5.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(von_neumann_entropy(&joint).unwrap(), 1.1246, epsilon = 1e-3);
    }

    #[test]
    fn maximally_mixed_has_zero_coherence() {
        for d in 2..9 {
            let rho = DensityMatrix::maximally_mixed(d).unwrap();
            assert_eq!(coherence(&rho).unwrap(), 0.0);
        }
    }

    #[test]
    fn pure_state_has_unit_coherence_and_zero_entropy() {
        let s = 1.0 / 3f64.sqrt();
        let psi = [C64::new(s, 0.0), C64::new(0.0, s), C64::new(-s, 0.0)];
        let rho = DensityMatrix::pure(&psi).unwrap();
        assert_abs_diff_eq!(coherence(&rho).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(von_neumann_entropy(&rho).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn coherence_rejects_scalar_state() {
        let rho = DensityMatrix::maximally_mixed(1).unwrap();
        assert!(matches!(coherence(&rho), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn constructor_rejects_bad_matrices() {
        let nh = DMatrix::from_row_slice(2, 2, &[
            C64::new(0.5, 0.0), C64::new(0.25, 0.0),
            C64::new(0.20, 0.0), C64::new(0.5, 0.0),
        ]);
        assert!(matches!(DensityMatrix::new(nh), Err(Error::InvalidState(_))));
        let tr = DMatrix::from_diagonal_element(2, 2, C64::new(0.6, 0.0));
        assert!(matches!(DensityMatrix::new(tr), Err(Error::InvalidState(_))));
        let neg = DMatrix::from_row_slice(2, 2, &[
            C64::new(1.2, 0.0), C64::new(0.0, 0.0),
            C64::new(0.0, 0.0), C64::new(-0.2, 0.0),
        ]);
        assert!(matches!(DensityMatrix::new(neg), Err(Error::InvalidState(_))));
        assert!(matches!(
            DensityMatrix::new(DMatrix::zeros(0, 0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn eigen_spectrum_rejects_non_hermitian_unchecked() {
        let m = DMatrix::from_row_slice(2, 2, &[
            C64::new(0.5, 0.0), C64::new(0.0, 0.3),
            C64::new(0.0, 0.3), C64::new(0.5, 0.0),
        ]);
        let rho = DensityMatrix::from_matrix_unchecked(m);
        assert!(matches!(eigen_spectrum(&rho), Err(Error::InvalidState(_))));
    }

    #[test]
    fn entropy_clamps_small_negatives_and_rejects_large() {
        let tol = Tolerances::default();
        let s = entropy_from_spectrum(&[1.0 + 5e-10, -5e-10], &tol).unwrap();
        assert!((0.0..1e-8).contains(&s));
        assert!(entropy_from_spectrum(&[1.1, -0.1], &tol).is_err());
        assert_eq!(entropy_from_spectrum(&[1.0, 0.0, 0.0], &tol).unwrap(), 0.0);
    }

    #[test]
    fn tensor_with_scalar_identity() {
        let one = DensityMatrix::maximally_mixed(1).unwrap();
        let p = tensor_product(&rho_half(), &one).unwrap();
        assert_eq!(p, rho_half());
    }

    #[test]
    fn tensor_product_capacity() {
        let tol = Tolerances { max_entries: 15, ..Tolerances::default() };
        let r = tensor_product_with(&rho_half(), &rho_half(), &tol);
        assert!(matches!(r, Err(Error::Capacity(_))));
    }

    #[test]
    fn partial_trace_of_product() {
        let a = rho_half();
        let b = DensityMatrix::from_real_rows(&[
            &[0.5, 0.1, 0.0],
            &[0.1, 0.3, 0.05],
            &[0.0, 0.05, 0.2],
        ])
        .unwrap();
        let ab = tensor_product(&a, &b).unwrap();
        let ra = partial_trace(&ab, &[2, 3], 0).unwrap();
        let rb = partial_trace(&ab, &[2, 3], 1).unwrap();
        assert!(ra.max_abs_diff(&a) < 1e-12);
        assert!(rb.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn bell_state_reduces_to_maximally_mixed() {
        let s = 1.0 / 2f64.sqrt();
        let z = C64::new(0.0, 0.0);
        let bell = DensityMatrix::pure(&[C64::new(s, 0.0), z, z, C64::new(s, 0.0)]).unwrap();
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        for keep in 0..2 {
            let r = partial_trace(&bell, &[2, 2], keep).unwrap();
            assert!(r.max_abs_diff(&mixed) < 1e-12);
        }
        let rep = metrics_report(&bell, &[2, 2]).unwrap();
        assert_abs_diff_eq!(rep.xi_id, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.xi_re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.mutual_information, 2.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(rep.mutual_entanglement, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let rho = DensityMatrix::maximally_mixed(4).unwrap();
        assert!(partial_trace(&rho, &[2, 3], 0).is_err());
        assert!(partial_trace(&rho, &[2, 2], 2).is_err());
        assert!(metrics_report(&rho, &[3]).is_err());
    }

    #[test]
    fn product_state_has_no_mutual_information() {
        let joint = tensor_product(&rho_half(), &rho_half()).unwrap();
        let rep = metrics_report(&joint, &[2, 2]).unwrap();
        assert_abs_diff_eq!(rep.mutual_information, 0.0, epsilon = 1e-10);
        assert_eq!(rep.mutual_information, rep.s_re - rep.s_id);
        assert_eq!(rep.mutual_entanglement, rep.xi_id - rep.xi_re);
    }

    #[test]
    fn product_coherence_law() {
        // K uncorrelated qubits with λ_max = p each.
        let p: f64 = 0.75;
        let mut joint = rho_half();
        for k in 2..=4u32 {
            joint = tensor_product(&joint, &rho_half()).unwrap();
            let n = 2f64.powi(k as i32);
            let want = n / (n - 1.0) * (p.powi(k as i32) - 1.0 / n);
            assert_abs_diff_eq!(coherence(&joint).unwrap(), want, epsilon = 1e-10);
        }
    }
}
