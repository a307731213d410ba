//! Self-checks of the `Q2` identities on random inputs: the spectral and
//! contour representations, concavity, and Haar moments. Each suite returns
//! its worst observed statistic next to the tolerance it was held to.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::infotheory::{chi2, haar_moment_mc, q2_contour, q2_from_purity, q2_purity, q2_spectral, Ensemble};
use crate::qhilbert::{purity, DensityOperator, Spectrum};
use crate::random::{random_density, random_spectrum};
use crate::seed;

pub const SPECTRAL_TOL: f64 = 1e-8;
pub const CONTOUR_TOL: f64 = 1e-6;
pub const CONTOUR_NODES: usize = 256;
pub const CONCAVITY_TOL: f64 = 1e-12;
pub const CHI2_FLOOR: f64 = -1e-10;
/// Minimum concavity gap, relative to `lambda (1 - lambda) ||rho_0 - rho_1||_F^2`,
/// for a triple to count as strictly concave.
pub const STRICTNESS_SCALE: f64 = 1e-14;
pub const HAAR_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub statistic: f64,
    pub tolerance: f64,
    pub samples: usize,
}

impl SuiteOutcome {
    fn below(name: &str, statistic: f64, tolerance: f64, samples: usize) -> Self {
        Self { name: name.to_string(), passed: statistic < tolerance, statistic, tolerance, samples }
    }
}

/// Spectral and contour `Q2` against the purity form over random spectra of
/// size 1 to 8.
pub fn spectral_identity_suite(n_spectra: usize, master: u64) -> Result<Vec<SuiteOutcome>> {
    let mut rng = seed::stream(master, "identity/spectral", 0);
    let (mut worst_spectral, mut worst_contour) = (0.0f64, 0.0f64);
    for _ in 0..n_spectra {
        let n = rng.random_range(1..=8);
        let spec = Spectrum::density(random_spectrum(n, &mut rng))?;
        let exact = q2_from_purity(spec.sum_of_squares());
        worst_spectral = worst_spectral.max((q2_spectral(&spec) - exact).abs());
        let radius = (2.0 * spec.max()).max(0.5);
        worst_contour = worst_contour.max((q2_contour(&spec, radius, CONTOUR_NODES)? - exact).abs());
    }
    Ok(vec![
        SuiteOutcome::below("q2_spectral_vs_purity", worst_spectral, SPECTRAL_TOL, n_spectra),
        SuiteOutcome::below("q2_contour_vs_purity", worst_contour, CONTOUR_TOL, n_spectra),
    ])
}

fn random_mixed<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityOperator {
    let rank = rng.random_range(1..=d);
    random_density(d, rank, rng)
}

/// Concavity of `Q2` over random `(rho_0, rho_1, lambda)` triples in
/// dimensions 2, 4 and 8, and non-negativity of `chi2` over random pairs.
pub fn concavity_suite(n_triples: usize, master: u64) -> Result<Vec<SuiteOutcome>> {
    let mut rng = seed::stream(master, "identity/concavity", 0);
    let dims = [2usize, 4, 8];
    let mut worst_violation = f64::NEG_INFINITY;
    let mut non_strict = 0usize;
    for k in 0..n_triples {
        let d = dims[k % dims.len()];
        let (r0, r1) = (random_mixed(d, &mut rng), random_mixed(d, &mut rng));
        let lambda: f64 = rng.random();
        let mix = DensityOperator::mixture(&[(lambda, &r0), (1.0 - lambda, &r1)])?;
        let gap = q2_purity(&mix) - lambda * q2_purity(&r0) - (1.0 - lambda) * q2_purity(&r1);
        worst_violation = worst_violation.max(-gap);
        let dist = (r0.matrix() - r1.matrix()).norm_squared();
        if gap <= STRICTNESS_SCALE * lambda * (1.0 - lambda) * dist {
            non_strict += 1;
        }
    }
    let mut worst_chi2 = f64::INFINITY;
    for k in 0..n_triples {
        let d = dims[k % dims.len()];
        let e = Ensemble::equal_pair(random_mixed(d, &mut rng), random_mixed(d, &mut rng))?;
        worst_chi2 = worst_chi2.min(chi2(&e)?);
    }
    Ok(vec![
        SuiteOutcome::below("q2_concavity_violation", worst_violation, CONCAVITY_TOL, n_triples),
        SuiteOutcome::below("q2_non_strict_triples", non_strict as f64, 0.5, n_triples),
        SuiteOutcome {
            name: "chi2_nonnegative".to_string(),
            passed: worst_chi2 >= CHI2_FLOOR,
            statistic: worst_chi2,
            tolerance: CHI2_FLOOR,
            samples: n_triples,
        },
    ])
}

/// Haar-basis moments at `d = 2, 4`: the pure-state moment `2 / (d + 1)` and
/// the marginal moment `(Tr rho^2 + 1) / (d + 1)`, each within three
/// standard errors. The statistic is the deviation in standard errors.
pub fn haar_moment_suite(n_samples: usize, master: u64) -> Result<Vec<SuiteOutcome>> {
    let mut out = Vec::new();
    for d in [2usize, 4] {
        let mut rng = seed::stream(master, "identity/haar", d as u64);
        let rho = random_density(d, d, &mut rng);
        let m = haar_moment_mc(&rho, n_samples, &mut rng)?;
        let df = d as f64;
        let pure_z = (m.pure - 2.0 / (df + 1.0)).abs() / m.pure_se;
        let marginal_z = (m.marginal - (purity(&rho) + 1.0) / (df + 1.0)).abs() / m.marginal_se;
        out.push(SuiteOutcome::below(&format!("haar_pure_moment_d{d}"), pure_z, HAAR_SIGMAS, n_samples));
        out.push(SuiteOutcome::below(&format!("haar_marginal_moment_d{d}"), marginal_z, HAAR_SIGMAS, n_samples));
    }
    Ok(out)
}

/// All suites at their standard sizes.
pub fn full_suite(master: u64) -> Result<Vec<SuiteOutcome>> {
    let mut out = spectral_identity_suite(1000, master)?;
    out.extend(concavity_suite(10_000, master)?);
    out.extend(haar_moment_suite(100_000, master)?);
    Ok(out)
}
