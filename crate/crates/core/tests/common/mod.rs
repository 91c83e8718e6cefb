#![allow(dead_code)]

use closed_coherence::density::DensityMatrix;
use closed_coherence::C64;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_c64<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |_, _| gaussian_c64(rng))
}

/// Haar-ish unitary: QR of a complex Ginibre matrix with the phases of R's
/// diagonal folded back into Q.
pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> DMatrix<C64> {
    let qr = gaussian_matrix(rng, n).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random full-rank density matrix `A A† / tr(A A†)`.
pub fn random_density<R: Rng>(rng: &mut R, n: usize) -> DensityMatrix {
    let a = gaussian_matrix(rng, n);
    let m = &a * a.adjoint();
    let tr = m.trace();
    let m = m.map(|x| x / tr);
    let m = (&m + m.adjoint()).map(|x| x * 0.5);
    DensityMatrix::new(m).expect("valid random density matrix")
}

/// Random normalised single-spin amplitudes.
pub fn random_amplitude_pair<R: Rng>(rng: &mut R) -> (C64, C64) {
    let (a, b) = (gaussian_c64(rng), gaussian_c64(rng));
    let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
    (a / norm, b / norm)
}

/// `-Σ λ ln λ` over a hand-supplied spectrum.
pub fn entropy_of(eigs: &[f64]) -> f64 {
    eigs.iter().filter(|&&l| l > 0.0).map(|&l| -l * l.ln()).sum()
}

/// Largest eigenvalue of a 2×2 Hermitian matrix from its closed form.
pub fn lambda_max_2x2(m: &DMatrix<C64>) -> f64 {
    let (a, d) = (m[(0, 0)].re, m[(1, 1)].re);
    let b = m[(0, 1)].norm();
    0.5 * (a + d) + (0.25 * (a - d).powi(2) + b * b).sqrt()
}
