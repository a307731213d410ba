//! Exact time evolution from one cached eigendecomposition.

use crate::error::{invalid, Result};
use crate::qhilbert::{c, CMatrix, CVector, Eigensystem, HermitianOperator, StateVector};

#[derive(Debug, Clone)]
pub struct Propagator {
    eigen: Eigensystem,
}

impl Propagator {
    pub fn new(h: &HermitianOperator) -> Result<Self> {
        Ok(Self { eigen: h.eigensystem()? })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigen.vectors
    }

    pub fn dim(&self) -> usize {
        self.eigen.values.len()
    }

    /// `V exp(-i Lambda t) V^dagger psi0`.
    pub fn evolve(&self, psi0: &StateVector, t: f64) -> Result<StateVector> {
        self.trajectory(psi0)?.at(t)
    }

    /// Projects `psi0` onto the eigenbasis once so that many times can be
    /// evaluated with one matrix-vector product each.
    pub fn trajectory(&self, psi0: &StateVector) -> Result<Trajectory<'_>> {
        if psi0.dim() != self.dim() {
            return invalid(format!(
                "state dimension {} does not match propagator dimension {}",
                psi0.dim(),
                self.dim()
            ));
        }
        Ok(Trajectory {
            propagator: self,
            n_sites: psi0.n_sites(),
            coefficients: self.eigen.vectors.ad_mul(psi0.amplitudes()),
        })
    }
}

pub struct Trajectory<'a> {
    propagator: &'a Propagator,
    n_sites: usize,
    coefficients: CVector,
}

impl Trajectory<'_> {
    pub fn at(&self, t: f64) -> Result<StateVector> {
        if !t.is_finite() {
            return invalid(format!("time must be finite, got {t}"));
        }
        let phased = CVector::from_iterator(
            self.coefficients.len(),
            self.coefficients
                .iter()
                .zip(&self.propagator.eigen.values)
                .map(|(a, &lambda)| a * c(0.0, -lambda * t).exp()),
        );
        Ok(StateVector::from_parts_unchecked(
            self.n_sites,
            &self.propagator.eigen.vectors * phased,
        ))
    }
}

/// `n_points` uniformly spaced times on `[0, t_max]`.
pub fn uniform_grid(t_max: f64, n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 || !(t_max > 0.0 && t_max.is_finite()) {
        return invalid(format!("time grid needs t_max > 0 and >= 2 points, got ({t_max}, {n_points})"));
    }
    let dt = t_max / (n_points - 1) as f64;
    Ok((0..n_points).map(|k| k as f64 * dt).collect())
}

pub const DEFAULT_T_MAX: f64 = 30.0;
pub const DEFAULT_STEPS: usize = 301;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_mfim, build_pxp, default_mfim_g, default_mfim_h, respects_blockade, PxpBoundary};
    use crate::qhilbert::{sigma_x, sigma_z, unitarity_defect, Local};

    fn op(m: Local) -> HermitianOperator {
        HermitianOperator::new(CMatrix::from_iterator(2, 2, m.iter().copied())).unwrap()
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
    }

    fn neel(l: usize) -> StateVector {
        StateVector::basis_state(&(0..l).map(|s| (s % 2) as u8).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn small_propagators() {
        let d = HermitianOperator::new(CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0)]))).unwrap();
        let p = Propagator::new(&d).unwrap();
        assert_eq!(p.eigenvalues(), &[2.0, 1.0]);
        assert!(max_diff(&p.eigenvectors().map(|z| c(z.norm(), 0.0)), &CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])) < 1e-15);

        let p = Propagator::new(&op(sigma_x())).unwrap();
        assert!((p.eigenvalues()[0] - 1.0).abs() < 1e-15);
        assert!(p.eigenvectors().iter().all(|z| (z.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14));
    }

    #[test]
    fn phase_rotation_under_sigma_z() {
        let p = Propagator::new(&op(sigma_z())).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::new(1, CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)])).unwrap();
        let t = std::f64::consts::FRAC_PI_2;
        let out = p.evolve(&plus, t).unwrap();
        assert!((out.amplitudes()[0] - c(0.0, -s)).norm() < 1e-14);
        assert!((out.amplitudes()[1] - c(0.0, s)).norm() < 1e-14);
        assert!((p.evolve(&plus, 0.0).unwrap().inner(&plus).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mfim_reconstruction_energy_and_group_property() {
        let l = 8;
        let h = build_mfim(l, 1.0, default_mfim_g(), default_mfim_h()).unwrap();
        let p = Propagator::new(&h).unwrap();
        assert!(unitarity_defect(p.eigenvectors()) < 1e-8);
        let e = Eigensystem { values: p.eigenvalues().to_vec(), vectors: p.eigenvectors().clone() };
        assert!(max_diff(&e.reconstruct(), h.matrix()) < 1e-8);

        let psi0 = StateVector::basis_state(&[0, 0, 0, 1, 0, 0, 0, 0]).unwrap();
        let e0 = h.expectation(&psi0).unwrap();
        let traj = p.trajectory(&psi0).unwrap();
        for k in 0..=30 {
            let psi = traj.at(k as f64).unwrap();
            assert!((psi.norm_squared() - 1.0).abs() < 1e-10);
            assert!((h.expectation(&psi).unwrap() - e0).abs() < 1e-8);
        }
        let (t1, t2) = (1.3, 2.9);
        let direct = p.evolve(&psi0, t1 + t2).unwrap();
        let composed = p.evolve(&p.evolve(&psi0, t1).unwrap(), t2).unwrap();
        let diff = (direct.amplitudes() - composed.amplitudes()).camax();
        assert!(diff < 1e-9);
        assert_eq!(p.evolve(&psi0, 0.0).map(|s| (s.amplitudes() - psi0.amplitudes()).camax() < 1e-12), Ok(true));
    }

    #[test]
    fn pxp_dynamics_stay_in_blockaded_subspace() {
        let l = 8;
        let p = Propagator::new(&build_pxp(l, PxpBoundary::OpenProjected).unwrap()).unwrap();
        let traj = p.trajectory(&neel(l)).unwrap();
        for k in 0..=60 {
            let psi = traj.at(0.5 * k as f64).unwrap();
            let forbidden: f64 = psi
                .probabilities()
                .iter()
                .enumerate()
                .filter(|(i, _)| !respects_blockade(*i, l))
                .map(|(_, p)| p)
                .sum();
            assert!(forbidden < 1e-9);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let p = Propagator::new(&op(sigma_z())).unwrap();
        assert!(p.evolve(&neel(2), 1.0).is_err());
        let one = StateVector::basis_state(&[0]).unwrap();
        assert!(p.evolve(&one, f64::NAN).is_err());
        assert!(uniform_grid(0.0, 10).is_err());
        let g = uniform_grid(30.0, 301).unwrap();
        assert_eq!(g.len(), 301);
        assert!((g[300] - 30.0).abs() < 1e-12 && (g[1] - 0.1).abs() < 1e-12);
    }
}
