//! Spin-chain Hamiltonians: transverse-field Ising, mixed-field Ising,
//! disordered Heisenberg (MBL) and PXP, all with open boundaries.
//!
//! Builders fill the dense matrix directly from basis-state bit patterns.
//! Tests check them against sums of `kron_embed` terms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::qhilbert::{c, site_mask, CMatrix, HermitianOperator, MAX_SITES};

pub const DEFAULT_TFIM_G: f64 = 0.6;
pub const DEFAULT_J: f64 = 1.0;
pub const DEFAULT_MBL_W: f64 = 8.0;
pub const DEFAULT_DISORDER_SEED: u64 = 42;
pub const DISORDER_GENERATOR_ID: &str = "rand_chacha::ChaCha8Rng::seed_from_u64(seed) -> rand_distr::Uniform::new_inclusive(-W, W), one draw per site in order";

/// (sqrt 5 + 5) / 8
pub fn default_mfim_g() -> f64 {
    (5f64.sqrt() + 5.0) / 8.0
}

/// (sqrt 5 + 1) / 4
pub fn default_mfim_h() -> f64 {
    (5f64.sqrt() + 1.0) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tfim,
    Mfim,
    Pxp,
    Mbl,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tfim" => Ok(ModelKind::Tfim),
            "mfim" => Ok(ModelKind::Mfim),
            "pxp" => Ok(ModelKind::Pxp),
            "mbl" => Ok(ModelKind::Mbl),
            other => Err(format!("unknown model '{other}' (expected tfim, mfim, pxp or mbl)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Tfim => "tfim",
            ModelKind::Mfim => "mfim",
            ModelKind::Pxp => "pxp",
            ModelKind::Mbl => "mbl",
        })
    }
}

/// Edge treatment of the PXP chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PxpBoundary {
    /// Edge sites flip subject to their single neighbor: `X_1 P_2` and `P_{L-1} X_L`.
    #[default]
    OpenProjected,
    /// Only sites with two neighbors carry a term.
    BulkOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub fields: Vec<f64>,
    pub seed: u64,
    pub generator_id: String,
    #[serde(rename = "W")]
    pub w: f64,
}

impl DisorderRealization {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w.is_finite()) {
            return invalid(format!("disorder strength W must be positive, got {}", self.w));
        }
        if let Some(h) = self.fields.iter().find(|h| !(h.is_finite() && h.abs() <= self.w)) {
            return invalid(format!("disorder field {h} outside [-W, W] with W = {}", self.w));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("disorder realization serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text)
            .map_err(|e| crate::Error::InvalidArgument(format!("bad disorder JSON: {e}")))?;
        d.validate()?;
        Ok(d)
    }

    /// Fields of the given contiguous or scattered sites, in order.
    pub fn restrict(&self, sites: &[usize]) -> Result<Self> {
        if let Some(&s) = sites.iter().find(|&&s| s >= self.fields.len()) {
            return invalid(format!("site {s} outside disorder realization of length {}", self.fields.len()));
        }
        Ok(Self {
            fields: sites.iter().map(|&s| self.fields[s]).collect(),
            seed: self.seed,
            generator_id: self.generator_id.clone(),
            w: self.w,
        })
    }
}

/// i.i.d. uniform fields on `[-W, W]`, reproducible from `seed`.
pub fn draw_disorder(n_sites: usize, w: f64, seed: u64) -> Result<DisorderRealization> {
    if !(w > 0.0 && w.is_finite()) {
        return invalid(format!("disorder strength W must be positive, got {w}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-w, w)
        .map_err(|e| crate::Error::InvalidArgument(format!("bad disorder range: {e}")))?;
    Ok(DisorderRealization {
        fields: (0..n_sites).map(|_| dist.sample(&mut rng)).collect(),
        seed,
        generator_id: DISORDER_GENERATOR_ID.to_string(),
        w,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Tfim { j: f64, g: f64 },
    Mfim { j: f64, g: f64, h: f64 },
    Pxp { boundary: PxpBoundary },
    Mbl { j_perp: f64, j_z: f64, disorder: DisorderRealization },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_sites: usize,
    #[serde(flatten)]
    pub model: Model,
}

impl ModelSpec {
    pub fn tfim(n_sites: usize) -> Self {
        Self { n_sites, model: Model::Tfim { j: DEFAULT_J, g: DEFAULT_TFIM_G } }
    }

    pub fn mfim(n_sites: usize) -> Self {
        Self {
            n_sites,
            model: Model::Mfim { j: DEFAULT_J, g: default_mfim_g(), h: default_mfim_h() },
        }
    }

    pub fn pxp(n_sites: usize) -> Self {
        Self { n_sites, model: Model::Pxp { boundary: PxpBoundary::OpenProjected } }
    }

    /// Paper-default MBL chain: J_perp = J_z = 1, W = 8, disorder seed 42.
    pub fn mbl(n_sites: usize) -> Result<Self> {
        Self::mbl_with(n_sites, DEFAULT_J, DEFAULT_J, draw_disorder(n_sites, DEFAULT_MBL_W, DEFAULT_DISORDER_SEED)?)
    }

    pub fn mbl_with(n_sites: usize, j_perp: f64, j_z: f64, disorder: DisorderRealization) -> Result<Self> {
        let spec = Self { n_sites, model: Model::Mbl { j_perp, j_z, disorder } };
        spec.validate()?;
        Ok(spec)
    }

    pub fn defaults(kind: ModelKind, n_sites: usize) -> Result<Self> {
        let spec = match kind {
            ModelKind::Tfim => Self::tfim(n_sites),
            ModelKind::Mfim => Self::mfim(n_sites),
            ModelKind::Pxp => Self::pxp(n_sites),
            ModelKind::Mbl => Self::mbl(n_sites)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind(&self) -> ModelKind {
        match self.model {
            Model::Tfim { .. } => ModelKind::Tfim,
            Model::Mfim { .. } => ModelKind::Mfim,
            Model::Pxp { .. } => ModelKind::Pxp,
            Model::Mbl { .. } => ModelKind::Mbl,
        }
    }

    pub fn disorder(&self) -> Option<&DisorderRealization> {
        match &self.model {
            Model::Mbl { disorder, .. } => Some(disorder),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.n_sites;
        if l < 2 || l > MAX_SITES {
            return invalid(format!("chain length must be in 2..={MAX_SITES}, got {l}"));
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match &self.model {
            Model::Tfim { j, g } if !finite(&[*j, *g]) => invalid("TFIM couplings must be finite"),
            Model::Mfim { j, g, h } if !finite(&[*j, *g, *h]) => invalid("MFIM couplings must be finite"),
            Model::Mfim { .. } if l < 3 => invalid("MFIM needs at least 3 sites"),
            Model::Pxp { .. } if l < 3 => invalid("PXP needs at least 3 sites"),
            Model::Mbl { j_perp, j_z, disorder } => {
                if !finite(&[*j_perp, *j_z]) {
                    return invalid("MBL couplings must be finite");
                }
                if disorder.fields.len() != l {
                    return invalid(format!(
                        "disorder realization has {} fields for {l} sites",
                        disorder.fields.len()
                    ));
                }
                disorder.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn hamiltonian(&self) -> Result<HermitianOperator> {
        self.validate()?;
        let l = self.n_sites;
        match &self.model {
            Model::Tfim { j, g } => build_tfim(l, *j, *g),
            Model::Mfim { j, g, h } => build_mfim(l, *j, *g, *h),
            Model::Pxp { boundary } => build_pxp(l, *boundary),
            Model::Mbl { j_perp, j_z, disorder } => build_mbl(l, *j_perp, *j_z, disorder),
        }
    }
}

#[inline]
fn spin_z(index: usize, l: usize, site: usize) -> f64 {
    if index & site_mask(l, site) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn ising_like(l: usize, j: f64, g: f64, h: f64, h_sites: std::ops::Range<usize>) -> HermitianOperator {
    let d = 1usize << l;
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        let zz: f64 = (0..l - 1).map(|s| spin_z(i, l, s) * spin_z(i, l, s + 1)).sum();
        let z: f64 = h_sites.clone().map(|s| spin_z(i, l, s)).sum();
        m[(i, i)] = c(j * zz + h * z, 0.0);
        if g != 0.0 {
            for s in 0..l {
                m[(i ^ site_mask(l, s), i)] += c(g, 0.0);
            }
        }
    }
    HermitianOperator::from_trusted(m)
}

/// `J sum_i Z_i Z_{i+1} + g sum_i X_i` on an open chain.
pub fn build_tfim(l: usize, j: f64, g: f64) -> Result<HermitianOperator> {
    if !(2..=MAX_SITES).contains(&l) {
        return invalid(format!("TFIM needs 2..={MAX_SITES} sites, got {l}"));
    }
    Ok(ising_like(l, j, g, 0.0, 0..0))
}

/// TFIM plus a longitudinal field `h` on every site except the two ends.
pub fn build_mfim(l: usize, j: f64, g: f64, h: f64) -> Result<HermitianOperator> {
    if !(3..=MAX_SITES).contains(&l) {
        return invalid(format!("MFIM needs 3..={MAX_SITES} sites, got {l}"));
    }
    Ok(ising_like(l, j, g, h, 1..l - 1))
}

/// Disordered XXZ chain in spin-1/2 operators `S = sigma / 2`.
pub fn build_mbl(l: usize, j_perp: f64, j_z: f64, disorder: &DisorderRealization) -> Result<HermitianOperator> {
    if disorder.fields.len() != l {
        return invalid(format!("disorder realization has {} fields for {l} sites", disorder.fields.len()));
    }
    let bonds = vec![(j_perp, j_z); l.saturating_sub(1)];
    build_mbl_bonds(&bonds, &disorder.fields)
}

/// XXZ chain with per-bond couplings; `bonds[b] = (J_perp, J_z)` couples
/// sites `b` and `b + 1`.
pub fn build_mbl_bonds(bonds: &[(f64, f64)], fields: &[f64]) -> Result<HermitianOperator> {
    let l = fields.len();
    if !(2..=MAX_SITES).contains(&l) {
        return invalid(format!("MBL chain needs 2..={MAX_SITES} sites, got {l}"));
    }
    if bonds.len() != l - 1 {
        return invalid(format!("{} bonds given for an open chain of {l} sites", bonds.len()));
    }
    let d = 1usize << l;
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        let mut diag = 0.0;
        for (s, &(j_perp, j_z)) in bonds.iter().enumerate() {
            let (za, zb) = (spin_z(i, l, s), spin_z(i, l, s + 1));
            diag += 0.25 * j_z * za * zb;
            // S+S- + S-S+ = 2 (SxSx + SySy) exchanges antiparallel neighbors.
            if za != zb && j_perp != 0.0 {
                let flipped = i ^ site_mask(l, s) ^ site_mask(l, s + 1);
                m[(flipped, i)] += c(0.5 * j_perp, 0.0);
            }
        }
        diag += fields.iter().enumerate().map(|(s, h)| 0.5 * h * spin_z(i, l, s)).sum::<f64>();
        m[(i, i)] = c(diag, 0.0);
    }
    Ok(HermitianOperator::from_trusted(m))
}

/// `sum_i P_{i-1} X_i P_{i+1}` with `P = (1 - Z) / 2`, the projector on spin down.
pub fn build_pxp(l: usize, boundary: PxpBoundary) -> Result<HermitianOperator> {
    if !(3..=MAX_SITES).contains(&l) {
        return invalid(format!("PXP needs 3..={MAX_SITES} sites, got {l}"));
    }
    let d = 1usize << l;
    let down = |i: usize, s: usize| i & site_mask(l, s) != 0;
    let sites = match boundary {
        PxpBoundary::OpenProjected => 0..l,
        PxpBoundary::BulkOnly => 1..l - 1,
    };
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        for s in sites.clone() {
            let left_ok = s == 0 || down(i, s - 1);
            let right_ok = s == l - 1 || down(i, s + 1);
            if left_ok && right_ok {
                m[(i ^ site_mask(l, s), i)] = c(1.0, 0.0);
            }
        }
    }
    Ok(HermitianOperator::from_trusted(m))
}

/// True when no two neighboring sites are both spin up (excited).
pub fn respects_blockade(index: usize, l: usize) -> bool {
    (0..l - 1).all(|s| index & site_mask(l, s) != 0 || index & site_mask(l, s + 1) != 0)
}
