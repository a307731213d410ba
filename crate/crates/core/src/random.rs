//! Random states, density operators and spectra for tests and experiments.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::qhilbert::{c, CMatrix, CVector, DensityOperator, StateVector, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Ginibre matrix with unit-variance entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-random pure state.
pub fn random_state<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> StateVector {
    let amps = CVector::from_fn(1 << n_sites, |_, _| gaussian(rng));
    StateVector::normalized(n_sites, amps).expect("Gaussian vector is non-zero")
}

/// `G G^dagger / Tr` for a `d x rank` Ginibre matrix `G`.
pub fn random_density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> DensityOperator {
    let g = ginibre(d, rank.max(1), rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    let labels = (0..d.trailing_zeros() as usize).collect();
    DensityOperator::from_trusted(m.unscale(tr), labels)
}

/// Uniform point on the probability simplex, unsorted.
pub fn random_spectrum<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Density operator `U diag(spectrum) U^dagger` with Haar-random `U`.
pub fn density_with_spectrum<R: Rng + ?Sized>(spectrum: &[f64], rng: &mut R) -> DensityOperator {
    let d = spectrum.len();
    let u = crate::infotheory::haar_unitary(d, rng);
    let mut scaled = u.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= c(spectrum[k], 0.0);
    }
    let labels = (0..d.trailing_zeros() as usize).collect();
    DensityOperator::from_trusted(scaled * u.adjoint(), labels)
}
