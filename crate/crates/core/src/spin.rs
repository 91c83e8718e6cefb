//! Closed system of fixed spin-1/2 particles with pairwise `σ_z ⊗ σ_z`
//! couplings `g_ij = η / r_ij^ε`.
//!
//! The Hamiltonian is diagonal in the product `σ_z` basis, so starting from a
//! product of single-particle superpositions the reduced state of particle
//! `l` has constant populations `|a_l|²`, `|b_l|²` and a coherence
//!
//! ```text
//! z_l(t) = a_l b_l* ∏_{k≠l} (|a_k|² e^{-2i g_lk t} + |b_k|² e^{2i g_lk t})
//! ```
//!
//! Basis state index convention: particle 0 is the most significant bit and
//! bit value 0 is spin up (`|+⟩`, `s = +1`).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};

/// Default largest particle count the brute-force oracle accepts.
pub const ORACLE_CAP: usize = 14;

/// Physical parameters of one closed spin system.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub n_particles: usize,
    pub dimension: usize,
    /// Potential exponent ε.
    pub epsilon: f64,
    /// Interaction strength η.
    pub eta: f64,
    /// Particle density n_ρ.
    pub density: f64,
    /// Per-particle `(a_k, b_k)` amplitudes on `|+⟩`, `|−⟩`.
    pub amplitudes: Vec<(C64, C64)>,
}

impl ModelParams {
    /// All particles in `(|+⟩ + |−⟩)/√2`, with `η = n_ρ = 1`.
    pub fn full_superposition(n_particles: usize, dimension: usize, epsilon: f64) -> Self {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            n_particles,
            dimension,
            epsilon,
            eta: 1.0,
            density: 1.0,
            amplitudes: vec![(s, s); n_particles],
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn with_amplitudes(mut self, amplitudes: Vec<(C64, C64)>) -> Self {
        self.amplitudes = amplitudes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::arg(format!(
                "need at least 2 particles, got {}",
                self.n_particles
            )));
        }
        if self.dimension == 0 {
            return Err(Error::arg("dimension must be >= 1"));
        }
        for (name, v) in [("epsilon", self.epsilon), ("eta", self.eta), ("density", self.density)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::arg(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.amplitudes.len() != self.n_particles {
            return Err(Error::arg(format!(
                "{} amplitude pairs for {} particles",
                self.amplitudes.len(),
                self.n_particles
            )));
        }
        for (k, (a, b)) in self.amplitudes.iter().enumerate() {
            let norm = a.norm_sqr() + b.norm_sqr();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::arg(format!(
                    "amplitudes of particle {k} have |a|²+|b|² = {norm}"
                )));
            }
        }
        Ok(())
    }

    /// Box side `l = (N / n_ρ)^{1/D}`.
    pub fn box_side(&self) -> f64 {
        (self.n_particles as f64 / self.density).powf(1.0 / self.dimension as f64)
    }

    pub fn is_full_superposition(&self) -> bool {
        self.amplitudes
            .iter()
            .all(|(a, b)| (a.norm_sqr() - 0.5).abs() < 1e-15 && (b.norm_sqr() - 0.5).abs() < 1e-15)
    }
}

/// Rejection parameters for random particle placement.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Geometry {
    /// Minimum pair distance as a fraction of the box side.
    pub r_min_fraction: f64,
    /// Redraws allowed per particle before giving up.
    pub max_retries: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            r_min_fraction: 1e-6,
            max_retries: 100,
        }
    }
}

/// Fixed particle positions and their coupling matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinEnsemble {
    params: ModelParams,
    positions: Vec<Vec<f64>>,
    /// Row-major `N × N`, symmetric, zero diagonal.
    couplings: Vec<f64>,
    seed: u64,
    // |a_k|², |b_k|² cached for the hot loops
    pops: Vec<(f64, f64)>,
    full_superposition: bool,
}

/// Place `N` particles uniformly in the `D`-box and compute couplings.
pub fn sample_ensemble(params: &ModelParams, seed: u64) -> Result<SpinEnsemble> {
    sample_ensemble_with(params, seed, &Geometry::default())
}

pub fn sample_ensemble_with(params: &ModelParams, seed: u64, geometry: &Geometry) -> Result<SpinEnsemble> {
    params.validate()?;
    let n = params.n_particles;
    let d = params.dimension;
    let side = params.box_side();
    let r_min = geometry.r_min_fraction * side;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut placed = false;
        for _ in 0..=geometry.max_retries {
            let p: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * side).collect();
            if positions.iter().all(|q| distance(&p, q) >= r_min) {
                positions.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::DegenerateGeometry {
                particle: i,
                retries: geometry.max_retries,
            });
        }
    }
    SpinEnsemble::from_positions(params.clone(), positions, seed)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl SpinEnsemble {
    /// Build from explicit positions; couplings follow `η / r^ε`.
    pub fn from_positions(params: ModelParams, positions: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = params.n_particles;
        if positions.len() != n || positions.iter().any(|p| p.len() != params.dimension) {
            return Err(Error::arg("positions do not match particle count and dimension"));
        }
        let mut couplings = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let r = distance(&positions[i], &positions[j]);
                if r <= 0.0 {
                    return Err(Error::arg(format!("particles {i} and {j} coincide")));
                }
                let g = params.eta / r.powf(params.epsilon);
                couplings[i * n + j] = g;
                couplings[j * n + i] = g;
            }
        }
        Ok(Self::assemble(params, positions, couplings, seed))
    }

    /// Replace the coupling matrix, e.g. with commensurate test couplings.
    /// The result no longer satisfies `g = η / r^ε`.
    pub fn with_couplings(self, couplings: Vec<f64>) -> Result<Self> {
        let n = self.n();
        if couplings.len() != n * n {
            return Err(Error::arg(format!(
                "coupling matrix has {} entries, expected {}",
                couplings.len(),
                n * n
            )));
        }
        for i in 0..n {
            if couplings[i * n + i] != 0.0 {
                return Err(Error::arg("coupling matrix diagonal must be zero"));
            }
            for j in i + 1..n {
                if couplings[i * n + j] != couplings[j * n + i] || !couplings[i * n + j].is_finite() {
                    return Err(Error::arg("coupling matrix must be finite and symmetric"));
                }
            }
        }
        Ok(Self::assemble(self.params, self.positions, couplings, self.seed))
    }

    /// Round every coupling to the nearest nonzero integer multiple of `g0`.
    pub fn with_commensurate_couplings(self, g0: f64) -> Result<Self> {
        if !(g0.is_finite() && g0 > 0.0) {
            return Err(Error::arg("base rate must be positive"));
        }
        let rounded = self
            .couplings
            .iter()
            .map(|&g| if g == 0.0 { 0.0 } else { (g / g0).round().max(1.0) * g0 })
            .collect();
        self.with_couplings(rounded)
    }

    fn assemble(params: ModelParams, positions: Vec<Vec<f64>>, couplings: Vec<f64>, seed: u64) -> Self {
        let pops = params
            .amplitudes
            .iter()
            .map(|(a, b)| (a.norm_sqr(), b.norm_sqr()))
            .collect();
        let full_superposition = params.is_full_superposition();
        Self {
            params,
            positions,
            couplings,
            seed,
            pops,
            full_superposition,
        }
    }

    pub fn n(&self) -> usize {
        self.params.n_particles
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn box_side(&self) -> f64 {
        self.params.box_side()
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i * self.n() + j]
    }

    /// Row-major coupling matrix.
    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    fn check_index(&self, l: usize) -> Result<()> {
        if l >= self.n() {
            return Err(Error::arg(format!(
                "particle index {l} out of range for {} particles",
                self.n()
            )));
        }
        Ok(())
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::arg(format!("time must be finite and >= 0, got {t}")));
        }
        Ok(())
    }

    /// Off-diagonal element `z_l(t)` of the reduced state of particle `l`.
    pub fn offdiag_z(&self, l: usize, t: f64) -> Result<C64> {
        self.check_index(l)?;
        Self::check_time(t)?;
        Ok(self.z_unchecked(l, t))
    }

    fn z_unchecked(&self, l: usize, t: f64) -> C64 {
        let (a, b) = self.params.amplitudes[l];
        let n = self.n();
        let mut z = a * b.conj();
        for k in (0..n).filter(|&k| k != l) {
            let phase = 2.0 * self.couplings[l * n + k] * t;
            let (pa, pb) = self.pops[k];
            let (s, c) = phase.sin_cos();
            // pa e^{-iφ} + pb e^{iφ}
            z *= C64::new((pa + pb) * c, (pb - pa) * s);
        }
        z
    }

    /// Closed-form reduced density matrix of particle `l` at time `t`.
    pub fn reduced_density(&self, l: usize, t: f64) -> Result<SingleParticleState> {
        let z = self.offdiag_z(l, t)?;
        let (pa, pb) = self.pops[l];
        let m = DMatrix::from_row_slice(2, 2, &[
            C64::new(pa, 0.0), z,
            z.conj(), C64::new(pb, 0.0),
        ]);
        let root = stretch_root(pa, pb, z);
        Ok(SingleParticleState {
            z,
            rho: DensityMatrix::from_matrix_unchecked(m),
            eigenvalues: (0.5 + 0.5 * root, 0.5 - 0.5 * root),
        })
    }

    /// Reduced density matrix of particle `l` expressed in the spin basis
    /// reached by [`spin_basis_unitary`]`(θ, φ)`, i.e. `U ρ_l U†`.
    ///
    /// With equal real amplitudes (real `z`) this reduces to
    /// `[[½ + sc(e^{-iφ}z + e^{iφ}z*), e^{-2iφ}s²z - c²z*], …]`.
    pub fn reduced_density_rotated(&self, l: usize, t: f64, theta: f64, phi: f64) -> Result<DensityMatrix> {
        let z = self.offdiag_z(l, t)?;
        let (p, q) = self.pops[l];
        let (s, c) = theta.sin_cos();
        let e1 = C64::from_polar(1.0, phi);
        let e2m = C64::from_polar(1.0, -2.0 * phi);
        let sc = s * c;
        let cross = (e1 * z + e1.conj() * z.conj()).re;
        let d0 = c * c * p + s * s * q + sc * cross;
        let d1 = s * s * p + c * c * q - sc * cross;
        let off = e1.conj() * (sc * (p - q)) - z * (c * c) + e2m * z.conj() * (s * s);
        let m = DMatrix::from_row_slice(2, 2, &[
            C64::new(d0, 0.0), off,
            off.conj(), C64::new(d1, 0.0),
        ]);
        Ok(DensityMatrix::from_matrix_unchecked(m))
    }

    /// Realistic coherence `Ξ_re(t) = (1/N) Σ_l √(1 - 4(|a_l|²|b_l|² - |z_l|²))`.
    pub fn xi_re(&self, t: f64) -> f64 {
        let per_particle = if self.full_superposition {
            self.cosine_products(t)
        } else {
            (0..self.n())
                .map(|l| {
                    let (pa, pb) = self.pops[l];
                    let z = self.z_unchecked(l, t);
                    stretch_root(pa, pb, z)
                })
                .collect()
        };
        pairwise_sum(&per_particle) / self.n() as f64
    }

    // |∏_{k≠l} cos(2 g_lk t)| for each l, sharing each pair's cosine.
    fn cosine_products(&self, t: f64) -> Vec<f64> {
        let n = self.n();
        let mut prods = vec![1.0; n];
        for i in 0..n {
            for k in i + 1..n {
                let c = (2.0 * self.couplings[i * n + k] * t).cos();
                prods[i] *= c;
                prods[k] *= c;
            }
        }
        prods.iter_mut().for_each(|p| *p = p.abs().min(1.0));
        prods
    }

    /// Sample `Ξ_re` on a time grid.
    pub fn xi_re_trace(&self, times: &[f64]) -> Result<CoherenceTrace> {
        if times.is_empty() {
            return Err(Error::arg("empty time grid"));
        }
        if times[0] < 0.0 {
            return Err(Error::arg("time grid must be nonnegative"));
        }
        let values: Vec<f64> = times.par_iter().map(|&t| self.xi_re(t)).collect();
        CoherenceTrace::new(times.to_vec(), values)
    }

    /// Full `2^N` state vector at time `t` by direct phase evolution.
    pub fn brute_force_state(&self, t: f64, cap: usize) -> Result<Vec<C64>> {
        let n = self.n();
        if n > cap {
            return Err(Error::Capacity(format!(
                "brute-force oracle limited to {cap} particles, got {n}"
            )));
        }
        Self::check_time(t)?;
        let amps = &self.params.amplitudes;
        let dim = 1usize << n;
        let psi = (0..dim)
            .map(|idx| {
                let spin = |k: usize| if (idx >> (n - 1 - k)) & 1 == 0 { 1.0 } else { -1.0 };
                let mut amp = C64::new(1.0, 0.0);
                for (k, (a, b)) in amps.iter().enumerate() {
                    amp *= if spin(k) > 0.0 { *a } else { *b };
                }
                let mut energy = 0.0;
                for j in 0..n {
                    for i in j + 1..n {
                        energy += self.couplings[i * n + j] * spin(j) * spin(i);
                    }
                }
                amp * C64::from_polar(1.0, -energy * t)
            })
            .collect();
        Ok(psi)
    }

    /// Reduced state of particle `l` from the full state vector; independent
    /// of the closed form.
    pub fn brute_force_reduced_density(&self, l: usize, t: f64) -> Result<DensityMatrix> {
        self.brute_force_reduced_density_capped(l, t, ORACLE_CAP)
    }

    pub fn brute_force_reduced_density_capped(&self, l: usize, t: f64, cap: usize) -> Result<DensityMatrix> {
        self.check_index(l)?;
        let psi = self.brute_force_state(t, cap)?;
        Ok(reduce_state_vector(&psi, self.n(), l))
    }
}

/// `Tr_{k≠l} |ψ⟩⟨ψ|` for an `n`-qubit vector.
pub fn reduce_state_vector(psi: &[C64], n: usize, l: usize) -> DensityMatrix {
    let bit = 1usize << (n - 1 - l);
    let mut m = DMatrix::<C64>::zeros(2, 2);
    for idx in (0..psi.len()).filter(|i| i & bit == 0) {
        let up = psi[idx];
        let down = psi[idx | bit];
        m[(0, 0)] += up * up.conj();
        m[(0, 1)] += up * down.conj();
        m[(1, 0)] += down * up.conj();
        m[(1, 1)] += down * down.conj();
    }
    DensityMatrix::from_matrix_unchecked(m)
}

/// Spin-basis change `[[cos θ, e^{-iφ} sin θ], [e^{iφ} sin θ, -cos θ]]`.
pub fn spin_basis_unitary(theta: f64, phi: f64) -> DMatrix<C64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[
        C64::new(c, 0.0), C64::from_polar(s, -phi),
        C64::from_polar(s, phi), C64::new(-c, 0.0),
    ])
}

/// Reduced state of one particle together with its off-diagonal element.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleParticleState {
    pub z: C64,
    pub rho: DensityMatrix,
    /// `(λ_max, λ_min)`.
    pub eigenvalues: (f64, f64),
}

impl SingleParticleState {
    /// `Ξ(ρ_l) = λ_max - λ_min`.
    pub fn coherence(&self) -> f64 {
        self.eigenvalues.0 - self.eigenvalues.1
    }
}

/// `Ξ_re` sampled on a strictly increasing grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceTrace {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl CoherenceTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::arg(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::arg("empty trace"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("trace times must be finite and strictly increasing"));
        }
        if let Some(v) = values.iter().find(|v| !(-1e-12..=1.0 + 1e-12).contains(*v)) {
            return Err(Error::arg(format!("trace value {v} outside [0, 1]")));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Same values on the time axis `t · factor`.
    pub fn rescale_time(&self, factor: f64) -> Result<Self> {
        Self::new(self.times.iter().map(|t| t * factor).collect(), self.values.clone())
    }
}

/// Default sampling grid: log-spaced points plus a uniform block, merged.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_ref: f64,
    pub log_points: usize,
    pub log_min: f64,
    pub log_max: f64,
    pub linear_points: usize,
    pub linear_max: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            t_ref: 1.0,
            log_points: 512,
            log_min: 1e-3,
            log_max: 20.0,
            linear_points: 512,
            linear_max: 5.0,
        }
    }
}

impl TimeGrid {
    pub fn with_t_ref(mut self, t_ref: f64) -> Self {
        self.t_ref = t_ref;
        self
    }

    /// Sorted grid with duplicates removed.
    pub fn build(&self) -> Vec<f64> {
        let mut ts = Vec::with_capacity(self.log_points + self.linear_points);
        if self.log_points == 1 {
            ts.push(self.log_min * self.t_ref);
        } else if self.log_points > 1 {
            let (lo, hi) = (self.log_min.ln(), self.log_max.ln());
            let step = (hi - lo) / (self.log_points - 1) as f64;
            ts.extend((0..self.log_points).map(|i| (lo + step * i as f64).exp() * self.t_ref));
        }
        if self.linear_points == 1 {
            ts.push(0.0);
        } else if self.linear_points > 1 {
            let step = self.linear_max / (self.linear_points - 1) as f64;
            ts.extend((0..self.linear_points).map(|i| step * i as f64 * self.t_ref));
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }
}

// √(1 - 4(|a|²|b|² - |z|²)) written as √((|a|² - |b|²)² + 4|z|²), which
// keeps full precision when |z| is tiny.
fn stretch_root(pa: f64, pb: f64, z: C64) -> f64 {
    let s = pa + pb;
    ((pa - pb).powi(2) / (s * s) + 4.0 * z.norm_sqr() / (s * s)).sqrt().min(1.0)
}

/// Uniform grid of `points` samples over `[t1, t2]`.
pub fn linear_grid(t1: f64, t2: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![t1],
        _ => {
            let step = (t2 - t1) / (points - 1) as f64;
            let mut g: Vec<f64> = (0..points).map(|i| t1 + step * i as f64).collect();
            g[points - 1] = t2;
            g
        }
    }
}

/// Sample `Ξ_re` of `ensemble` on `times`.
pub fn xi_re_trace(ensemble: &SpinEnsemble, times: &[f64]) -> Result<CoherenceTrace> {
    ensemble.xi_re_trace(times)
}

/// Recursive pairwise summation with a fixed split; order independent of
/// scheduling.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{coherence, eigen_spectrum};
    use approx::assert_abs_diff_eq;

    fn random_amplitudes(n: usize, seed: u64) -> Vec<(C64, C64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let th: f64 = rng.random::<f64>() * std::f64::consts::FRAC_PI_2;
                let pa: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                let pb: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                (C64::from_polar(th.cos(), pa), C64::from_polar(th.sin(), pb))
            })
            .collect()
    }

    #[test]
    fn two_particle_box() {
        let params = ModelParams::full_superposition(2, 1, 1.0);
        assert_abs_diff_eq!(params.box_side(), 2.0, epsilon = 1e-15);
        let ens = sample_ensemble(&params, 7).unwrap();
        for p in ens.positions() {
            assert!((0.0..=2.0).contains(&p[0]));
        }
        let r = (ens.positions()[0][0] - ens.positions()[1][0]).abs();
        assert_abs_diff_eq!(ens.coupling(0, 1), 1.0 / r, epsilon = 1e-12);
        assert_eq!(ens.coupling(0, 0), 0.0);
    }

    #[test]
    fn box_side_three_dimensions() {
        let params = ModelParams::full_superposition(100, 3, 1.0);
        assert_abs_diff_eq!(params.box_side(), 4.641588833612779, epsilon = 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let params = ModelParams::full_superposition(30, 2, 1.5);
        let a = sample_ensemble(&params, 99).unwrap();
        let b = sample_ensemble(&params, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_ensemble(&params, 100).unwrap();
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn degenerate_geometry_is_reported() {
        let params = ModelParams::full_superposition(3, 1, 1.0);
        let g = Geometry { r_min_fraction: 0.9, max_retries: 5 };
        assert!(matches!(
            sample_ensemble_with(&params, 1, &g),
            Err(Error::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(sample_ensemble(&ModelParams::full_superposition(1, 1, 1.0), 0).is_err());
        let bad = ModelParams::full_superposition(2, 1, 1.0)
            .with_amplitudes(vec![(C64::new(1.0, 0.0), C64::new(0.1, 0.0)); 2]);
        assert!(sample_ensemble(&bad, 0).is_err());
        assert!(sample_ensemble(&ModelParams::full_superposition(2, 1, 0.0), 0).is_err());
    }

    #[test]
    fn z_at_time_zero() {
        let ens = sample_ensemble(&ModelParams::full_superposition(6, 2, 1.0), 3).unwrap();
        for l in 0..6 {
            let z = ens.offdiag_z(l, 0.0).unwrap();
            assert_abs_diff_eq!(z.re, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }
        assert!(ens.offdiag_z(6, 0.0).is_err());
        assert!(ens.offdiag_z(0, -1.0).is_err());
    }

    #[test]
    fn two_particle_closed_form() {
        let ens = sample_ensemble(&ModelParams::full_superposition(2, 1, 1.0), 11).unwrap();
        let g = ens.coupling(0, 1);
        for &t in &[0.0, 0.03, 0.4, 1.7, 12.0] {
            let z = ens.offdiag_z(0, t).unwrap();
            assert_abs_diff_eq!(z.re, 0.5 * (2.0 * g * t).cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
            let bf = ens.brute_force_reduced_density(0, t).unwrap();
            assert!(bf.max_abs_diff(&ens.reduced_density(0, t).unwrap().rho) < 1e-12);
            assert_abs_diff_eq!(ens.xi_re(t), (2.0 * g * t).cos().abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn initial_reduced_state_is_pure() {
        let ens = sample_ensemble(&ModelParams::full_superposition(5, 3, 1.0), 5).unwrap();
        let st = ens.reduced_density(2, 0.0).unwrap();
        assert_abs_diff_eq!(st.eigenvalues.0, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(st.eigenvalues.1, 0.0, epsilon = 1e-15);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(st.rho.entry(i, j).re, 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn eigenstate_particle_never_evolves() {
        let mut amps = random_amplitudes(5, 1);
        amps[0] = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let params = ModelParams::full_superposition(5, 2, 1.0).with_amplitudes(amps);
        let ens = sample_ensemble(&params, 2).unwrap();
        for &t in &[0.0, 0.5, 3.0] {
            let st = ens.reduced_density(0, t).unwrap();
            assert_eq!(st.z, C64::new(0.0, 0.0));
            assert_eq!(st.rho.entry(0, 0).re, 1.0);
            assert_eq!(st.rho.entry(1, 1).re, 0.0);
        }
    }

    #[test]
    fn closed_form_matches_oracle_random_amplitudes() {
        for (n, seed) in [(6usize, 10u64), (8, 11)] {
            let params = ModelParams::full_superposition(n, 2, 1.3).with_amplitudes(random_amplitudes(n, seed));
            let ens = sample_ensemble(&params, seed).unwrap();
            for &t in &[0.0, 0.11, 0.73, 2.9] {
                for l in 0..n {
                    let cf = ens.reduced_density(l, t).unwrap().rho;
                    let bf = ens.brute_force_reduced_density(l, t).unwrap();
                    assert!(cf.max_abs_diff(&bf) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn eigenvalue_formula_and_coherence_identity() {
        let n = 6;
        let params = ModelParams::full_superposition(n, 1, 1.0).with_amplitudes(random_amplitudes(n, 4));
        let ens = sample_ensemble(&params, 4).unwrap();
        let st = ens.reduced_density(3, 0.37).unwrap();
        let spec = eigen_spectrum(&DensityMatrix::new(st.rho.matrix().clone()).unwrap()).unwrap();
        assert_abs_diff_eq!(spec.eigenvalues()[0], st.eigenvalues.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.eigenvalues()[1], st.eigenvalues.1, epsilon = 1e-12);
        assert_abs_diff_eq!(coherence(&st.rho).unwrap(), st.coherence(), epsilon = 1e-12);
        let (a, b) = params.amplitudes[3];
        assert!(st.z.norm() <= (a * b).norm() + 1e-15);
    }

    #[test]
    fn rotated_matches_unitary_conjugation() {
        let n = 5;
        let params = ModelParams::full_superposition(n, 2, 1.0).with_amplitudes(random_amplitudes(n, 9));
        let ens = sample_ensemble(&params, 9).unwrap();
        for &(th, ph, t) in &[(0.3, 1.1, 0.2), (1.2, -0.4, 1.5), (0.0, 0.0, 0.7)] {
            let rot = ens.reduced_density_rotated(1, t, th, ph).unwrap();
            let u = spin_basis_unitary(th, ph);
            let direct = ens.reduced_density(1, t).unwrap().rho.conjugate_by(&u).unwrap();
            assert!(rot.max_abs_diff(&direct) < 1e-12);
        }
    }

    #[test]
    fn x_basis_makes_initial_superposition_an_eigenstate() {
        let ens = sample_ensemble(&ModelParams::full_superposition(4, 1, 1.0), 1).unwrap();
        let rot = ens.reduced_density_rotated(0, 0.0, std::f64::consts::FRAC_PI_4, 0.0).unwrap();
        assert_abs_diff_eq!(rot.entry(0, 0).re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rot.entry(1, 1).re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rot.entry(0, 1).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_rotation_flips_offdiagonal_sign() {
        let ens = sample_ensemble(&ModelParams::full_superposition(4, 1, 1.0), 1).unwrap();
        let rot = ens.reduced_density_rotated(2, 0.3, 0.0, 0.0).unwrap();
        let plain = ens.reduced_density(2, 0.3).unwrap().rho;
        assert_abs_diff_eq!((rot.entry(0, 1) + plain.entry(0, 1)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((rot.entry(0, 0) - plain.entry(0, 0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn trace_starts_at_one_and_stays_bounded() {
        let ens = sample_ensemble(&ModelParams::full_superposition(40, 2, 1.0), 8).unwrap();
        let trace = ens.xi_re_trace(&TimeGrid::default().build()).unwrap();
        assert_eq!(trace.times()[0], 0.0);
        assert_abs_diff_eq!(trace.values()[0], 1.0, epsilon = 1e-15);
        assert!(trace.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(ens.xi_re_trace(&[]).is_err());
    }

    #[test]
    fn eigenstates_keep_unit_coherence() {
        let amps = vec![(C64::new(1.0, 0.0), C64::new(0.0, 0.0)); 6];
        let params = ModelParams::full_superposition(6, 1, 1.0).with_amplitudes(amps);
        let ens = sample_ensemble(&params, 3).unwrap();
        for &t in &[0.0, 0.2, 9.0] {
            assert_eq!(ens.xi_re(t), 1.0);
        }
    }

    #[test]
    fn general_path_agrees_with_cosine_products() {
        let ens = sample_ensemble(&ModelParams::full_superposition(12, 2, 1.0), 21).unwrap();
        for &t in &[0.05, 0.3, 2.0] {
            let general: f64 = (0..12).map(|l| 2.0 * ens.offdiag_z(l, t).unwrap().norm()).sum::<f64>() / 12.0;
            assert_abs_diff_eq!(ens.xi_re(t), general, epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_cap_enforced() {
        let ens = sample_ensemble(&ModelParams::full_superposition(15, 1, 1.0), 0).unwrap();
        assert!(matches!(ens.brute_force_reduced_density(0, 0.1), Err(Error::Capacity(_))));
    }

    #[test]
    fn commensurate_rounding() {
        let ens = sample_ensemble(&ModelParams::full_superposition(4, 1, 1.0), 0).unwrap();
        let ens = ens.with_commensurate_couplings(0.25).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let m = ens.coupling(i, j) / 0.25;
                assert_eq!(m, m.round());
            }
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = TimeGrid::default().build();
        assert_eq!(g[0], 0.0);
        assert!((g.last().unwrap() - 20.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.len() > 1000);
    }
}
