//! Hilbert-space primitives for qubit chains.
//!
//! Basis convention: site 0 is the leftmost chain site and the most
//! significant bit of a basis index. Bit value 0 is spin up, the `+1`
//! eigenstate of sigma-z.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type Local = Matrix2<C64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const NORM_TOL: f64 = 1e-10;

/// Largest chain handled by the dense representation.
pub const MAX_SITES: usize = 14;

pub(crate) const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Single-site Pauli labels, also used as measurement bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Local {
        match self {
            Pauli::X => sigma_x(),
            Pauli::Y => sigma_y(),
            Pauli::Z => sigma_z(),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Pauli> {
        Pauli::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(ch: char) -> Option<Pauli> {
        match ch {
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    /// Unitary that maps the `(-1)^b` eigenvector of this Pauli onto `|b>`.
    pub fn to_computational(self) -> Local {
        match self {
            Pauli::X => hadamard(),
            // H S^dagger
            Pauli::Y => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Local::new(c(s, 0.0), c(0.0, -s), c(s, 0.0), c(0.0, s))
            }
            Pauli::Z => Local::identity(),
        }
    }
}

pub fn identity2() -> Local {
    Local::identity()
}

pub fn sigma_x() -> Local {
    Local::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub fn sigma_y() -> Local {
    Local::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

pub fn sigma_z() -> Local {
    Local::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
}

pub fn hadamard() -> Local {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Local::new(c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0))
}

pub fn phase_s() -> Local {
    Local::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0))
}

#[inline]
pub(crate) fn site_mask(n_sites: usize, site: usize) -> usize {
    1usize << (n_sites - 1 - site)
}

/// Bits of basis index `index`, ordered by site.
pub fn index_to_bits(index: usize, n_sites: usize) -> Vec<u8> {
    (0..n_sites)
        .map(|s| ((index & site_mask(n_sites, s)) != 0) as u8)
        .collect()
}

pub fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

fn local_unitarity_defect(u: &Local) -> f64 {
    (u.adjoint() * u - Local::identity())
        .iter()
        .fold(0.0f64, |acc, z| acc.max(z.norm()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_sites: usize,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(n_sites: usize, amplitudes: CVector) -> Result<Self> {
        if n_sites == 0 || n_sites > MAX_SITES {
            return invalid(format!("n_sites must be in 1..={MAX_SITES}, got {n_sites}"));
        }
        if amplitudes.len() != 1 << n_sites {
            return invalid(format!(
                "state of {n_sites} sites needs {} amplitudes, got {}",
                1usize << n_sites,
                amplitudes.len()
            ));
        }
        let norm_sq = amplitudes.norm_squared();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return invalid(format!("state is not normalized: |psi|^2 = {norm_sq}"));
        }
        Ok(Self { n_sites, amplitudes })
    }

    /// Normalizes `amplitudes` before wrapping them.
    pub fn normalized(n_sites: usize, mut amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return invalid("cannot normalize a zero or non-finite vector");
        }
        amplitudes.unscale_mut(norm);
        Self::new(n_sites, amplitudes)
    }

    /// Computational basis product state; `bits[s]` is the bit of site `s`.
    pub fn basis_state(bits: &[u8]) -> Result<Self> {
        let n = bits.len();
        if n == 0 || n > MAX_SITES {
            return invalid(format!("n_sites must be in 1..={MAX_SITES}, got {n}"));
        }
        if bits.iter().any(|&b| b > 1) {
            return invalid("basis bits must be 0 or 1");
        }
        let mut amps = CVector::zeros(1 << n);
        amps[bits_to_index(bits)] = c(1.0, 0.0);
        Ok(Self { n_sites: n, amplitudes: amps })
    }

    /// Tensor product of single-site states, site 0 first.
    pub fn product(site_states: &[[C64; 2]]) -> Result<Self> {
        let n = site_states.len();
        if n == 0 || n > MAX_SITES {
            return invalid(format!("n_sites must be in 1..={MAX_SITES}, got {n}"));
        }
        let d = 1usize << n;
        let amps = CVector::from_fn(d, |i, _| {
            (0..n).fold(c(1.0, 0.0), |acc, s| {
                acc * site_states[s][((i & site_mask(n, s)) != 0) as usize]
            })
        });
        Self::normalized(n, amps)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub(crate) fn from_parts_unchecked(n_sites: usize, amplitudes: CVector) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << n_sites);
        Self { n_sites, amplitudes }
    }
}

/// Ordered, duplicate-free set of sites of an `n_sites` chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteSubset {
    indices: Vec<usize>,
}

impl SiteSubset {
    pub fn new(indices: &[usize], n_sites: usize) -> Result<Self> {
        if indices.is_empty() {
            return invalid("site subset must not be empty");
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return invalid(format!("duplicate site in subset {indices:?}"));
        }
        if let Some(&bad) = sorted.iter().find(|&&i| i >= n_sites) {
            return invalid(format!("site {bad} out of range for {n_sites} sites"));
        }
        Ok(Self { indices: sorted })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.indices.binary_search(&site).is_ok()
    }

    pub fn complement(&self, n_sites: usize) -> Option<SiteSubset> {
        let rest: Vec<usize> = (0..n_sites).filter(|s| !self.contains(*s)).collect();
        if rest.is_empty() {
            None
        } else {
            Some(SiteSubset { indices: rest })
        }
    }

    /// Every size-`k` subset of `0..n_sites` in lexicographic order.
    pub fn all_of_size(n_sites: usize, k: usize) -> Vec<SiteSubset> {
        let mut out = Vec::new();
        if k == 0 || k > n_sites {
            return out;
        }
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(SiteSubset { indices: idx.clone() });
            let mut i = k;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if idx[i] < n_sites - k + i {
                    idx[i] += 1;
                    for j in i + 1..k {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

/// Eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    /// Sorts descending; rejects non-finite values.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("spectrum must not be empty");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("spectrum contains a non-finite value");
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    /// Additionally checks the density-operator constraints.
    pub fn density(values: Vec<f64>) -> Result<Self> {
        let s = Self::new(values)?;
        if s.values.iter().any(|&v| !(-1e-10..=1.0 + 1e-10).contains(&v)) {
            return invalid(format!("eigenvalue outside [0, 1]: {:?}", s.values));
        }
        let total: f64 = s.values.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return invalid(format!("spectrum sums to {total}, expected 1"));
        }
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Eigensystem {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: CMatrix,
}

impl Eigensystem {
    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= c(self.values[k], 0.0);
        }
        scaled * self.vectors.adjoint()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return invalid("operator matrix must be square");
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return invalid(format!("operator is not Hermitian (defect {defect:e})"));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }

    pub fn eigensystem(&self) -> Result<Eigensystem> {
        eigensystem(&self.matrix)
    }

    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        if psi.dim() != self.dim() {
            return invalid("state and operator dimensions differ");
        }
        Ok(psi.amplitudes().dotc(&(&self.matrix * psi.amplitudes())).re)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<CVector> {
        if psi.dim() != self.dim() {
            return invalid("state and operator dimensions differ");
        }
        Ok(&self.matrix * psi.amplitudes())
    }
}

/// Full eigendecomposition of a Hermitian matrix, eigenvalues descending.
///
/// Real symmetric input takes the real solver, which is several times
/// faster at the chain sizes used here. Backed by faer, whose blocked
/// tridiagonalization is much quicker than nalgebra's at dimension 1024.
pub fn eigensystem(m: &CMatrix) -> Result<Eigensystem> {
    if !m.is_square() {
        return invalid("eigensystem needs a square matrix");
    }
    let defect = hermiticity_defect(m);
    if defect > HERMITIAN_TOL {
        return invalid(format!("matrix is not Hermitian (defect {defect:e})"));
    }
    let n = m.nrows();
    let failed = |e: faer::linalg::evd::EvdError| Error::Numeric(format!("eigensolver failed: {e:?}"));
    let (values, vectors): (Vec<f64>, CMatrix) = if m.iter().all(|z| z.im == 0.0) {
        let eig = faer::Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re))
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(failed)?;
        let (s, u) = (eig.S().column_vector(), eig.U());
        ((0..n).map(|k| s[k]).collect(), CMatrix::from_fn(n, n, |i, j| c(u[(i, j)], 0.0)))
    } else {
        let eig = faer::Mat::<C64>::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(failed)?;
        let (s, u) = (eig.S().column_vector(), eig.U());
        ((0..n).map(|k| s[k].re).collect(), CMatrix::from_fn(n, n, |i, j| u[(i, j)]))
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigensolver produced non-finite values".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = CMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    Ok(Eigensystem {
        values: sorted_values,
        vectors: sorted_vectors,
    })
}

/// Embeds single-site operators into the full chain: the tensor product of
/// the given operator on each listed site and the identity elsewhere.
pub fn kron_embed(local_ops: &[(usize, Local)], n_sites: usize) -> Result<HermitianOperator> {
    if n_sites == 0 || n_sites > MAX_SITES {
        return invalid(format!("n_sites must be in 1..={MAX_SITES}, got {n_sites}"));
    }
    let mut slots: Vec<Option<Local>> = vec![None; n_sites];
    for (site, op) in local_ops {
        if *site >= n_sites {
            return invalid(format!("site {site} out of range for {n_sites} sites"));
        }
        if slots[*site].is_some() {
            return invalid(format!("site {site} listed twice"));
        }
        let defect = (op - op.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if defect > HERMITIAN_TOL {
            return invalid(format!("local operator on site {site} is not Hermitian"));
        }
        slots[*site] = Some(*op);
    }
    let mut acc = CMatrix::from_element(1, 1, c(1.0, 0.0));
    for slot in &slots {
        let local = slot.unwrap_or_else(Local::identity);
        let local = CMatrix::from_iterator(2, 2, local.iter().copied());
        acc = acc.kronecker(&local);
    }
    Ok(HermitianOperator::from_trusted(acc))
}

pub(crate) fn apply_local_in_place(amps: &mut CVector, n_sites: usize, site: usize, u: &Local) {
    let mask = site_mask(n_sites, site);
    let (u00, u01, u10, u11) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    for i in 0..amps.len() {
        if i & mask == 0 {
            let j = i | mask;
            let (a0, a1) = (amps[i], amps[j]);
            amps[i] = u00 * a0 + u01 * a1;
            amps[j] = u10 * a0 + u11 * a1;
        }
    }
}

pub fn apply_local_unitary(state: &StateVector, site: usize, u: &Local) -> Result<StateVector> {
    if site >= state.n_sites {
        return invalid(format!("site {site} out of range for {} sites", state.n_sites));
    }
    let defect = local_unitarity_defect(u);
    if defect > 1e-10 {
        return invalid(format!("local gate is not unitary (defect {defect:e})"));
    }
    let mut amps = state.amplitudes.clone();
    apply_local_in_place(&mut amps, state.n_sites, site, u);
    Ok(StateVector::from_parts_unchecked(state.n_sites, amps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
    site_labels: Vec<usize>,
}

impl DensityOperator {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: CMatrix, site_labels: Vec<usize>) -> Result<Self> {
        if !matrix.is_square() {
            return invalid("density matrix must be square");
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return invalid(format!("density matrix is not Hermitian (defect {defect:e})"));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return invalid(format!("density matrix trace is {tr}, expected 1"));
        }
        let eig = eigensystem(&matrix)?;
        if let Some(neg) = eig.values.iter().find(|&&v| v < -1e-10) {
            return invalid(format!("density matrix has negative eigenvalue {neg}"));
        }
        Ok(Self { matrix, site_labels })
    }

    pub(crate) fn from_trusted(matrix: CMatrix, site_labels: Vec<usize>) -> Self {
        Self { matrix, site_labels }
    }

    pub fn pure(psi: &StateVector) -> Self {
        let a = psi.amplitudes();
        Self::from_trusted(a * a.adjoint(), (0..psi.n_sites()).collect())
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        Self::from_trusted(
            CMatrix::identity(d, d) * c(1.0 / d as f64, 0.0),
            (0..n_qubits).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn site_labels(&self) -> &[usize] {
        &self.site_labels
    }

    /// `sum_i w_i rho_i`; labels follow the first member.
    pub fn mixture(members: &[(f64, &DensityOperator)]) -> Result<Self> {
        let Some((_, first)) = members.first() else {
            return invalid("mixture needs at least one member");
        };
        let d = first.dim();
        let mut acc = CMatrix::zeros(d, d);
        for (w, rho) in members {
            if rho.dim() != d {
                return invalid("mixture members have different dimensions");
            }
            acc += rho.matrix() * c(*w, 0.0);
        }
        Ok(Self::from_trusted(acc, first.site_labels.clone()))
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        let eig = eigensystem(&self.matrix)?;
        Spectrum::new(eig.values)
    }

    pub fn overlap(&self, other: &DensityOperator) -> f64 {
        // Tr(AB) = sum_ij A_ij conj(B_ij) for Hermitian B.
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }
}

/// Tr(rho^2) as the squared Frobenius norm.
pub fn purity(rho: &DensityOperator) -> f64 {
    rho.matrix.norm_squared()
}

/// Reduced density operator on `keep` of a pure state.
pub fn partial_trace(state: &StateVector, keep: &SiteSubset) -> Result<DensityOperator> {
    let n = state.n_sites();
    if keep.is_empty() {
        return invalid("partial trace needs a non-empty subset");
    }
    if let Some(&bad) = keep.indices().iter().find(|&&s| s >= n) {
        return invalid(format!("site {bad} out of range for {n} sites"));
    }
    let k = keep.len();
    let traced: Vec<usize> = (0..n).filter(|s| !keep.contains(*s)).collect();
    let d_a = 1usize << k;
    let d_b = 1usize << traced.len();
    let amps = state.amplitudes();
    let mut block = CMatrix::zeros(d_a, d_b);
    for (i, amp) in amps.iter().enumerate() {
        if *amp == c(0.0, 0.0) {
            continue;
        }
        let a = keep
            .indices()
            .iter()
            .fold(0usize, |acc, &s| (acc << 1) | ((i & site_mask(n, s)) != 0) as usize);
        let b = traced
            .iter()
            .fold(0usize, |acc, &s| (acc << 1) | ((i & site_mask(n, s)) != 0) as usize);
        block[(a, b)] = *amp;
    }
    let rho = &block * block.adjoint();
    Ok(DensityOperator::from_trusted(rho, keep.indices().to_vec()))
}

/// Draws one computational-basis outcome with Born probabilities; returns
/// the basis index.
pub fn born_sample_index<R: Rng + ?Sized>(state: &StateVector, rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * state.norm_squared();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, a) in state.amplitudes().iter().enumerate() {
        let p = a.norm_sqr();
        if p > 0.0 {
            acc += p;
            last_nonzero = i;
            if u < acc {
                return i;
            }
        }
    }
    last_nonzero
}

/// Born-rule sample as per-site bits.
pub fn born_sample<R: Rng + ?Sized>(state: &StateVector, rng: &mut R) -> Vec<u8> {
    index_to_bits(born_sample_index(state, rng), state.n_sites())
}
