//! Information metrics of an ensemble of reduced states: Holevo `chi`,
//! the subentropy variant `chi_Q`, and the purity-based `chi_2` built on
//! `Q2(rho) = ln(2 / (1 + Tr rho^2))`. All values are in nats.
//!
//! `Q2` has three independent evaluation routes (purity, eigenvalue
//! formula, contour integral); they agree on every spectrum and are
//! cross-checked in tests.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::qhilbert::{c, eigensystem, purity, CMatrix, DensityOperator, Spectrum, C64};

/// Eigenvalues closer than this are treated as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-9;
/// Base perturbation applied to a two-fold degenerate cluster.
pub const DEGENERACY_EPS: f64 = 1e-7;
/// Eigenvalues at or below this contribute nothing to the spectral formulas.
const ZERO_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<(f64, DensityOperator)>,
}

impl Ensemble {
    pub fn new(members: Vec<(f64, DensityOperator)>) -> Result<Self> {
        let Some((_, first)) = members.first() else {
            return invalid("ensemble needs at least one member");
        };
        let d = first.dim();
        if members.iter().any(|(_, r)| r.dim() != d) {
            return invalid("ensemble members have different dimensions");
        }
        if members.iter().any(|(p, _)| !(*p >= 0.0 && p.is_finite())) {
            return invalid("ensemble weights must be non-negative");
        }
        let total: f64 = members.iter().map(|(p, _)| p).sum();
        if (total - 1.0).abs() > 1e-10 {
            return invalid(format!("ensemble weights sum to {total}, expected 1"));
        }
        Ok(Self { members })
    }

    /// Two members with weight one half each.
    pub fn equal_pair(a: DensityOperator, b: DensityOperator) -> Result<Self> {
        Self::new(vec![(0.5, a), (0.5, b)])
    }

    pub fn members(&self) -> &[(f64, DensityOperator)] {
        &self.members
    }

    pub fn average(&self) -> DensityOperator {
        let refs: Vec<(f64, &DensityOperator)> = self.members.iter().map(|(p, r)| (*p, r)).collect();
        DensityOperator::mixture(&refs).expect("validated ensemble")
    }

    /// `F(sum p_i rho_i) - sum p_i F(rho_i)`.
    fn gap(&self, f: impl Fn(&DensityOperator) -> Result<f64>) -> Result<f64> {
        let mut weighted = 0.0;
        for (p, rho) in &self.members {
            if *p > 0.0 {
                weighted += p * f(rho)?;
            }
        }
        Ok(f(&self.average())? - weighted)
    }
}

pub fn spectrum_of(rho: &DensityOperator) -> Result<Spectrum> {
    rho.spectrum()
}

pub fn von_neumann_spectrum(spec: &Spectrum) -> f64 {
    -spec
        .values()
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| l * l.ln())
        .sum::<f64>()
}

/// `-Tr(rho ln rho)`.
pub fn von_neumann(rho: &DensityOperator) -> Result<f64> {
    Ok(von_neumann_spectrum(&rho.spectrum()?))
}

pub fn holevo_chi(e: &Ensemble) -> Result<f64> {
    e.gap(von_neumann)
}

/// Groups sorted (descending) values into runs whose neighbors differ by
/// less than `DEGENERACY_GAP`.
fn clusters(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i - 1] - values[i] >= DEGENERACY_GAP {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn cluster_eps(size: usize, mean: f64) -> f64 {
    let base = if size == 2 {
        DEGENERACY_EPS
    } else {
        // Roundoff grows like eps^-(m-1); this balances it against the
        // O(eps^4) remainder left by the extrapolation.
        10f64.powf(-16.0 / (size as f64 + 3.0))
    };
    base.min(mean / size as f64)
}

/// Evaluates a divided-difference style spectral formula on the non-zero
/// eigenvalues. Degenerate clusters are split symmetrically (trace
/// preserving) at spreads `eps` and `2 eps`, and the two results are
/// Richardson-extrapolated to zero spread.
fn regularized(values: &[f64], formula: impl Fn(&[f64]) -> f64) -> f64 {
    let mut nodes: Vec<f64> = values.iter().copied().filter(|&v| v > ZERO_CUTOFF).collect();
    nodes.sort_by(|a, b| b.total_cmp(a));
    if nodes.is_empty() {
        return formula(&nodes);
    }
    let groups = clusters(&nodes);
    if groups.iter().all(|g| g.len() == 1) {
        return formula(&nodes);
    }
    let spread = |scale: f64| -> Vec<f64> {
        let mut out = Vec::with_capacity(nodes.len());
        for g in &groups {
            let m = g.len();
            let mean = nodes[g.clone()].iter().sum::<f64>() / m as f64;
            if m == 1 {
                out.push(nodes[g.start]);
                continue;
            }
            let eps = scale * cluster_eps(m, mean);
            out.extend((0..m).map(|j| mean + (j as f64 - (m as f64 - 1.0) / 2.0) * eps));
        }
        out
    };
    let f1 = formula(&spread(1.0));
    let f2 = formula(&spread(2.0));
    (4.0 * f1 - f2) / 3.0
}

fn subentropy_formula(nodes: &[f64]) -> f64 {
    -nodes
        .iter()
        .enumerate()
        .map(|(k, &lk)| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|(l, _)| *l != k)
                .map(|(_, &ll)| lk / (lk - ll))
                .product();
            lk * lk.ln() * prod
        })
        .sum::<f64>()
}

/// `Q(rho) = -sum_k lambda_k ln lambda_k prod_{l != k} lambda_k / (lambda_k - lambda_l)`.
pub fn subentropy(spec: &Spectrum) -> f64 {
    regularized(spec.values(), subentropy_formula)
}

pub fn subentropy_of(rho: &DensityOperator) -> Result<f64> {
    Ok(subentropy(&rho.spectrum()?))
}

pub fn chi_q(e: &Ensemble) -> Result<f64> {
    e.gap(subentropy_of)
}

/// `ln(2 / (1 + P))` for purity `P`.
pub fn q2_from_purity(p: f64) -> f64 {
    (2.0 / (1.0 + p)).ln()
}

pub fn q2_purity(rho: &DensityOperator) -> f64 {
    q2_from_purity(purity(rho))
}

fn q2_spectral_formula(nodes: &[f64]) -> f64 {
    let n = nodes.len() as i32;
    nodes
        .iter()
        .enumerate()
        .map(|(i, &li)| {
            let denom: f64 = nodes
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, &lj)| li - lj)
                .product();
            li.powi(n + 1) / denom
        })
        .sum()
}

/// `Q2` from the eigenvalue formula `-ln sum_i lambda_i^{N+1} / prod_{j != i} (lambda_i - lambda_j)`.
pub fn q2_spectral(spec: &Spectrum) -> f64 {
    -regularized(spec.values(), q2_spectral_formula).ln()
}

/// Trapezoidal evaluation of `(1 / 2 pi i) oint z det(I - rho / z)^{-1} dz`
/// on the circle `|z| = radius`.
pub fn q2_contour_integral(spec: &Spectrum, radius: f64, n_nodes: usize) -> Result<f64> {
    if n_nodes < 64 {
        return invalid(format!("contour quadrature needs at least 64 nodes, got {n_nodes}"));
    }
    if !(radius > spec.max() && radius.is_finite()) {
        return invalid(format!(
            "contour radius {radius} must exceed the largest eigenvalue {}",
            spec.max()
        ));
    }
    let step = std::f64::consts::TAU / n_nodes as f64;
    let sum: C64 = (0..n_nodes)
        .map(|k| {
            let z = C64::from_polar(radius, k as f64 * step);
            let det: C64 = spec.values().iter().map(|&l| c(1.0, 0.0) - l / z).product();
            // dz = i z dtheta cancels the 1 / (2 pi i) up to 1 / (2 pi).
            z * z / det
        })
        .sum();
    Ok((sum / n_nodes as f64).re)
}

pub fn q2_contour(spec: &Spectrum, radius: f64, n_nodes: usize) -> Result<f64> {
    Ok(-q2_contour_integral(spec, radius, n_nodes)?.ln())
}

/// Averaged accessible information of the ensemble.
pub fn chi2(e: &Ensemble) -> Result<f64> {
    e.gap(|rho| Ok(q2_purity(rho)))
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of `R`'s
/// diagonal absorbed into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let z = crate::random::ginibre(d, d, rng);
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for (k, mut col) in q.column_iter_mut().enumerate() {
        let diag = r[(k, k)];
        let norm = diag.norm();
        if norm > 0.0 {
            col *= diag / norm;
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaarMoments {
    /// Mean of `sum_j <a_j|rho|a_j>^2`.
    pub marginal: f64,
    pub marginal_se: f64,
    /// Mean of `sum_j |<a_j|psi>|^4` for the leading eigenvector `psi` of rho.
    pub pure: f64,
    pub pure_se: f64,
    pub n_samples: usize,
}

/// Monte-Carlo moments over Haar-random measurement bases.
pub fn haar_moment_mc<R: Rng + ?Sized>(rho: &DensityOperator, n_samples: usize, rng: &mut R) -> Result<HaarMoments> {
    if n_samples < 1000 {
        return invalid(format!("Haar Monte Carlo needs at least 1000 samples, got {n_samples}"));
    }
    let d = rho.dim();
    let eig = eigensystem(rho.matrix())?;
    let psi = DVector::from_iterator(d, eig.vectors.column(0).iter().copied());
    let (mut m_sum, mut m_sq, mut p_sum, mut p_sq) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_samples {
        let u = haar_unitary(d, rng);
        let rotated = u.adjoint() * rho.matrix() * &u;
        let marginal: f64 = (0..d).map(|j| rotated[(j, j)].re.powi(2)).sum();
        let amps = u.ad_mul(&psi);
        let pure: f64 = amps.iter().map(|a| a.norm_sqr().powi(2)).sum();
        m_sum += marginal;
        m_sq += marginal * marginal;
        p_sum += pure;
        p_sq += pure * pure;
    }
    let n = n_samples as f64;
    let se = |s: f64, sq: f64| {
        let mean = s / n;
        ((sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
    };
    Ok(HaarMoments {
        marginal: m_sum / n,
        marginal_se: se(m_sum, m_sq),
        pure: p_sum / n,
        pure_se: se(p_sum, p_sq),
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qhilbert::{CVector, StateVector};
    use crate::random::{density_with_spectrum, random_density, random_spectrum, random_state};
    use crate::seed::stream;

    fn spectrum(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    fn basis(bits: &[u8]) -> DensityOperator {
        DensityOperator::pure(&StateVector::basis_state(bits).unwrap())
    }

    #[test]
    fn von_neumann_examples() {
        assert!(von_neumann(&basis(&[0])).unwrap().abs() < 1e-15);
        let s = von_neumann(&DensityOperator::maximally_mixed(1)).unwrap();
        assert!((s - 2f64.ln()).abs() < 1e-14);
    }

    /// Matrix-function oracle: -Tr(rho ln rho) through ln rho = V ln(Lambda) V^dagger.
    #[test]
    fn von_neumann_matches_matrix_log() {
        let mut rng = stream(3, "vn", 0);
        let psi = random_state(4, &mut rng);
        let rho = crate::qhilbert::partial_trace(&psi, &crate::qhilbert::SiteSubset::new(&[0, 2], 4).unwrap()).unwrap();
        let e = eigensystem(rho.matrix()).unwrap();
        let mut log_rho = CMatrix::zeros(4, 4);
        for k in 0..4 {
            let v = e.vectors.column(k);
            log_rho += (v * v.adjoint()) * c(e.values[k].ln(), 0.0);
        }
        let oracle = -(rho.matrix() * log_rho).trace().re;
        assert!((von_neumann(&rho).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn holevo_examples() {
        let mut rng = stream(4, "holevo", 0);
        let r = random_density(2, 2, &mut rng);
        assert!(holevo_chi(&Ensemble::equal_pair(r.clone(), r.clone()).unwrap()).unwrap().abs() < 1e-14);
        let e = Ensemble::equal_pair(basis(&[0]), basis(&[1])).unwrap();
        assert!((holevo_chi(&e).unwrap() - 2f64.ln()).abs() < 1e-14);

        // Random two-member qubit ensemble against closed-form qubit entropies.
        let a = random_density(2, 2, &mut rng);
        let b = random_density(2, 2, &mut rng);
        let e = Ensemble::new(vec![(0.3, a.clone()), (0.7, b.clone())]).unwrap();
        let h = |rho: &DensityOperator| {
            // Eigenvalues of a qubit: (1 +- |r|) / 2 with |r|^2 = 2P - 1.
            let r = (2.0 * purity(rho) - 1.0).max(0.0).sqrt();
            let ent = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
            ent((1.0 + r) / 2.0) + ent((1.0 - r) / 2.0)
        };
        let oracle = h(&e.average()) - 0.3 * h(&a) - 0.7 * h(&b);
        assert!((holevo_chi(&e).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn subentropy_examples() {
        assert_eq!(subentropy(&spectrum(&[1.0, 0.0])), 0.0);
        let half = subentropy(&spectrum(&[0.5, 0.5]));
        assert!((half - (2f64.ln() - 0.5)).abs() < 1e-9, "{half}");
        assert!((half - 0.193147).abs() < 1e-6);
    }

    /// Independent limit oracle for the degenerate qubit spectrum: evaluate
    /// the raw formula at (1/2 + e, 1/2 - e) for several e and Richardson
    /// extrapolate in e^2.
    #[test]
    fn subentropy_degenerate_limit_oracle() {
        let raw = |e: f64| {
            let (a, b) = (0.5 + e, 0.5 - e);
            -(a * a.ln() * a / (a - b) + b * b.ln() * b / (b - a))
        };
        let values: Vec<f64> = [1e-4, 1e-5, 1e-6].iter().map(|&e| raw(e)).collect();
        let extrapolated = (4.0 * raw(1e-4 / 2.0) - raw(1e-4)) / 3.0;
        let expected = 2f64.ln() - 0.5;
        for v in &values {
            assert!((v - expected).abs() < 1e-8);
        }
        assert!((extrapolated - expected).abs() < 1e-10);
        assert!((subentropy(&spectrum(&[0.5, 0.5])) - extrapolated).abs() < 1e-9);
    }

    #[test]
    fn subentropy_bounded_by_entropy() {
        let mut rng = stream(5, "sub", 0);
        for n in 2..=6 {
            for _ in 0..200 {
                let s = spectrum(&random_spectrum(n, &mut rng));
                let q = subentropy(&s);
                assert!(q >= -1e-10 && q <= von_neumann_spectrum(&s) + 1e-10, "{q} {:?}", s.values());
            }
        }
        // Three-fold and four-fold degeneracies take the wider split.
        let q3 = subentropy(&spectrum(&[1.0 / 3.0; 3]));
        let q4 = subentropy(&spectrum(&[0.25; 4]));
        // Q(I/n) = ln n - (1/2 + 1/3 + ... + 1/n), a closed form for the maximally mixed state.
        assert!((q3 - (3f64.ln() - 0.5 - 1.0 / 3.0)).abs() < 1e-8, "{q3}");
        assert!((q4 - (4f64.ln() - 0.5 - 1.0 / 3.0 - 0.25)).abs() < 1e-7, "{q4}");
    }

    #[test]
    fn chi_q_examples() {
        let e = Ensemble::equal_pair(basis(&[0]), basis(&[1])).unwrap();
        assert!((chi_q(&e).unwrap() - (2f64.ln() - 0.5)).abs() < 1e-9);
        let mut rng = stream(6, "chiq", 0);
        let a = random_density(4, 4, &mut rng);
        let b = random_density(4, 2, &mut rng);
        let e = Ensemble::equal_pair(a.clone(), b.clone()).unwrap();
        let manual = subentropy_of(&e.average()).unwrap()
            - 0.5 * subentropy_of(&a).unwrap()
            - 0.5 * subentropy_of(&b).unwrap();
        assert!((chi_q(&e).unwrap() - manual).abs() < 1e-14);
        assert!(chi_q(&Ensemble::equal_pair(a.clone(), a).unwrap()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn q2_examples() {
        assert_eq!(q2_purity(&basis(&[0, 1])), 0.0);
        assert!((q2_purity(&DensityOperator::maximally_mixed(1)) - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((q2_purity(&DensityOperator::maximally_mixed(1)) - 0.287682).abs() < 1e-6);
        for n in 1..=4 {
            let d = (1 << n) as f64;
            let q = q2_purity(&DensityOperator::maximally_mixed(n));
            assert!((q - (2.0 * d / (d + 1.0)).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn q2_spectral_examples() {
        // Two eigenvalues: l1^2 + l1 l2 + l2^2 = (1 + P) / 2.
        let (a, b) = (0.8, 0.2);
        let arg: f64 = a * a + a * b + b * b;
        assert!((arg - (1.0 + a * a + b * b) / 2.0).abs() < 1e-15);
        assert!((q2_spectral(&spectrum(&[a, b])) + arg.ln()).abs() < 1e-14);
        assert!(q2_spectral(&spectrum(&[1.0, 0.0, 0.0, 0.0])).abs() < 1e-15);
        let q = q2_spectral(&spectrum(&[0.25; 4]));
        assert!((q - q2_from_purity(0.25)).abs() < 1e-8, "{q}");
    }

    #[test]
    fn q2_contour_examples() {
        let one = spectrum(&[1.0]);
        assert!((q2_contour_integral(&one, 2.0, 256).unwrap() - 1.0).abs() < 1e-12);
        assert!(q2_contour(&one, 2.0, 256).unwrap().abs() < 1e-12);
        let half = spectrum(&[0.5, 0.5]);
        assert!((q2_contour_integral(&half, 2.0, 256).unwrap() - 0.75).abs() < 1e-12);
        assert!(q2_contour(&half, 0.5, 256).is_err());
        assert!(q2_contour(&half, 2.0, 32).is_err());

        let mut rng = stream(8, "contour", 0);
        let s = spectrum(&random_spectrum(4, &mut rng));
        let rho = density_with_spectrum(s.values(), &mut rng);
        assert!((q2_contour(&s, 2.0, 256).unwrap() - q2_purity(&rho)).abs() < 1e-6);
    }

    #[test]
    fn chi2_examples() {
        let mut rng = stream(9, "chi2", 0);
        let r = random_density(4, 3, &mut rng);
        assert!(chi2(&Ensemble::equal_pair(r.clone(), r).unwrap()).unwrap().abs() < 1e-15);
        let e = Ensemble::equal_pair(basis(&[0]), basis(&[1])).unwrap();
        assert!((chi2(&e).unwrap() - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        for _ in 0..10_000 {
            let a = random_density(2, 1 + rng.random_range(0..2), &mut rng);
            let b = random_density(2, 1 + rng.random_range(0..2), &mut rng);
            assert!(chi2(&Ensemble::equal_pair(a, b).unwrap()).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn ensemble_validation() {
        assert!(Ensemble::new(vec![]).is_err());
        assert!(Ensemble::new(vec![(0.6, basis(&[0])), (0.6, basis(&[1]))]).is_err());
        assert!(Ensemble::new(vec![(0.5, basis(&[0])), (0.5, basis(&[1, 0]))]).is_err());
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = stream(10, "haar", 0);
        for d in [2, 4, 8] {
            let u = haar_unitary(d, &mut rng);
            assert!(crate::qhilbert::unitarity_defect(&u) < 1e-12);
        }
    }

    #[test]
    fn haar_moments_of_maximally_mixed_qubit() {
        // rho = I/2 gives <a|rho|a> = 1/2 for every basis: the marginal moment
        // is exactly (P + 1) / (d + 1) = 1/2 with zero spread, while the pure
        // moment is 2 / (d + 1) = 2/3.
        let mut rng = stream(11, "haar-mm", 0);
        let m = haar_moment_mc(&DensityOperator::maximally_mixed(1), 20_000, &mut rng).unwrap();
        assert!((m.marginal - 0.5).abs() < 1e-14 && m.marginal_se < 1e-12);
        assert!((m.pure - 2.0 / 3.0).abs() < 3.0 * m.pure_se);
        assert!(haar_moment_mc(&DensityOperator::maximally_mixed(1), 10, &mut rng).is_err());
    }

    #[test]
    fn regularized_handles_numerical_zeros() {
        let psi = StateVector::new(2, CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.8, 0.0)])).unwrap();
        let rho = DensityOperator::pure(&psi);
        let s = rho.spectrum().unwrap();
        assert!(subentropy(&s).abs() < 1e-10);
        assert!(q2_spectral(&s).abs() < 1e-10);
    }
}
