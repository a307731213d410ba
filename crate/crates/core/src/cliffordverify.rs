//! Purity and `chi2` recovery from exact outcome statistics under sampled
//! Clifford unitaries, which form a unitary 2-design.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::evolve::Propagator;
use crate::infotheory::q2_from_purity;
use crate::models::ModelKind;
use crate::qhilbert::{
    hadamard, partial_trace, phase_s, purity, site_mask, CMatrix, DensityOperator, Local, SiteSubset,
};
use crate::scramble::{format_sig, prepare_ensemble, ScrambleScenario};
use crate::seed;

pub const DEFAULT_CIRCUIT_DEPTH: usize = 50;
pub const DEFAULT_SAMPLE_COUNTS: [usize; 3] = [10, 50, 200];
pub const DEFAULT_TRIALS: usize = 5;
const MAX_CIRCUIT_QUBITS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CliffordElement {
    pub matrix: Local,
    pub label: usize,
}

fn to_dense(m: &Local) -> CMatrix {
    CMatrix::from_iterator(2, 2, m.iter().copied())
}

/// Equal up to a global phase: `|Tr(A^dagger B)| = d` for unitaries.
fn phase_equivalent(a: &Local, b: &Local, tol: f64) -> bool {
    ((a.adjoint() * b).trace().norm() - 2.0).abs() < tol
}

/// The 24 single-qubit Cliffords modulo phase, generated breadth-first from
/// words in `H` and `S`. Label 0 is the identity, 1 is `H`, 2 is `S`.
pub fn enumerate_c1() -> Vec<CliffordElement> {
    let generators = [hadamard(), phase_s()];
    let mut found: Vec<Local> = vec![Local::identity()];
    let mut frontier = 0;
    while frontier < found.len() {
        let base = found[frontier];
        for g in &generators {
            let next = g * base;
            if !found.iter().any(|m| phase_equivalent(m, &next, 1e-9)) {
                found.push(next);
            }
        }
        frontier += 1;
    }
    found
        .into_iter()
        .enumerate()
        .map(|(label, matrix)| CliffordElement { matrix, label })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    H(usize),
    S(usize),
    Cnot { control: usize, target: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffordCircuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub depth: usize,
}

impl CliffordCircuit {
    pub fn new(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_CIRCUIT_QUBITS {
            return invalid(format!("circuit width {n_qubits} must be in 1..={MAX_CIRCUIT_QUBITS}"));
        }
        for g in &gates {
            match *g {
                Gate::H(q) | Gate::S(q) if q >= n_qubits => {
                    return invalid(format!("gate site {q} out of range for {n_qubits} qubits"));
                }
                Gate::Cnot { control, target } if control >= n_qubits || target >= n_qubits || control == target => {
                    return invalid(format!("invalid CNOT ({control}, {target}) on {n_qubits} qubits"));
                }
                _ => {}
            }
        }
        Ok(Self { n_qubits, depth: gates.len(), gates })
    }

    /// Dense unitary, with the first gate applied first.
    pub fn unitary(&self) -> CMatrix {
        let n = self.n_qubits;
        let dim = 1usize << n;
        let mut u = CMatrix::identity(dim, dim);
        for g in &self.gates {
            u = match *g {
                Gate::H(q) => apply_single(u, n, q, &hadamard()),
                Gate::S(q) => apply_single(u, n, q, &phase_s()),
                Gate::Cnot { control, target } => {
                    let (cm, tm) = (site_mask(n, control), site_mask(n, target));
                    let mut out = u.clone();
                    for row in 0..dim {
                        let src = if row & cm != 0 { row ^ tm } else { row };
                        out.set_row(row, &u.row(src));
                    }
                    out
                }
            };
        }
        u
    }
}

/// Left-multiplies `u` by the gate `g` acting on `site`.
fn apply_single(mut u: CMatrix, n: usize, site: usize, g: &Local) -> CMatrix {
    let mask = site_mask(n, site);
    for i in (0..u.nrows()).filter(|i| i & mask == 0) {
        let j = i | mask;
        let (a, b) = (u.row(i).clone_owned(), u.row(j).clone_owned());
        u.set_row(i, &(&a * g[(0, 0)] + &b * g[(0, 1)]));
        u.set_row(j, &(a * g[(1, 0)] + b * g[(1, 1)]));
    }
    u
}

/// Each layer draws one generator uniformly from `{H, S, CNOT}` (only
/// `{H, S}` on a single qubit) and uniformly random valid sites.
pub fn random_clifford_circuit<R: Rng + ?Sized>(n_qubits: usize, depth: usize, rng: &mut R) -> Result<(CliffordCircuit, CMatrix)> {
    if depth == 0 {
        return invalid("circuit depth must be at least 1");
    }
    if n_qubits == 0 || n_qubits > MAX_CIRCUIT_QUBITS {
        return invalid(format!("circuit width {n_qubits} must be in 1..={MAX_CIRCUIT_QUBITS}"));
    }
    let kinds = if n_qubits == 1 { 2 } else { 3 };
    let gates = (0..depth)
        .map(|_| match rng.random_range(0..kinds) {
            0 => Gate::H(rng.random_range(0..n_qubits)),
            1 => Gate::S(rng.random_range(0..n_qubits)),
            _ => {
                let control = rng.random_range(0..n_qubits);
                let mut target = rng.random_range(0..n_qubits - 1);
                if target >= control {
                    target += 1;
                }
                Gate::Cnot { control, target }
            }
        })
        .collect();
    let circuit = CliffordCircuit::new(n_qubits, gates)?;
    let u = circuit.unitary();
    Ok((circuit, u))
}

fn collision_probability(rho: &CMatrix, u: &CMatrix) -> f64 {
    let rotated = u * rho * u.adjoint();
    (0..rotated.nrows()).map(|j| rotated[(j, j)].re.powi(2)).sum()
}

/// Inverts `E[sum_j P(j)^2] = (Tr rho^2 + 1) / (d + 1)` using the exact
/// outcome distribution of each rotated state.
pub fn purity_from_basis_sampling(rho: &DensityOperator, unitaries: &[CMatrix]) -> Result<f64> {
    if unitaries.is_empty() {
        return invalid("at least one unitary is required");
    }
    let d = rho.dim();
    if let Some(u) = unitaries.iter().find(|u| u.nrows() != d || u.ncols() != d) {
        return invalid(format!("unitary of shape {}x{} does not match dimension {d}", u.nrows(), u.ncols()));
    }
    let avg = unitaries.iter().map(|u| collision_probability(rho.matrix(), u)).sum::<f64>() / unitaries.len() as f64;
    Ok((d as f64 + 1.0) * avg - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub sample_counts: Vec<usize>,
    pub n_trials: usize,
    /// Reuse one unitary draw per (trial, N) across all times instead of
    /// drawing fresh unitaries at every time.
    pub reuse_unitaries: bool,
    /// First site of the two-site subsystem; defaults to the pair starting
    /// at the perturbation site (or ending there at the right edge).
    pub pair_start: Option<usize>,
    pub circuit_depth: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            sample_counts: DEFAULT_SAMPLE_COUNTS.to_vec(),
            n_trials: DEFAULT_TRIALS,
            reuse_unitaries: false,
            pair_start: None,
            circuit_depth: DEFAULT_CIRCUIT_DEPTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub t: f64,
    pub subsystem_size: usize,
    pub n_samples: usize,
    pub trial: usize,
    pub chi2_est: f64,
    pub chi2_exact: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub t: f64,
    pub subsystem_size: usize,
    pub n_samples: usize,
    pub mean: f64,
    /// Sample standard deviation across trials.
    pub std: f64,
    pub chi2_exact: f64,
}

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,L_A,N,trial,chi2_est,chi2_exact")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            format_sig(r.t),
            r.subsystem_size,
            r.n_samples,
            r.trial,
            format_sig(r.chi2_est),
            format_sig(r.chi2_exact)
        )?;
    }
    Ok(())
}

fn convergence_subsystem(s: &ScrambleScenario, cfg: &ConvergenceConfig) -> Result<SiteSubset> {
    let l = s.n_sites();
    let site = s.perturbation_site;
    match s.subsystem_size {
        1 => SiteSubset::new(&[site], l),
        2 => {
            let start = match cfg.pair_start {
                Some(p) => p,
                None if site + 1 < l => site,
                None => site - 1,
            };
            if start + 1 >= l {
                return invalid(format!("pair starting at {start} does not fit in {l} sites"));
            }
            SiteSubset::new(&[start, start + 1], l)
        }
        other => invalid(format!("Clifford convergence supports L_A in {{1, 2}}, got {other}")),
    }
}

fn draw_unitaries(la: usize, n: usize, depth: usize, c1: &[CMatrix], rng: &mut seed::StreamRng) -> Result<Vec<CMatrix>> {
    (0..n)
        .map(|_| {
            if la == 1 {
                Ok(c1[rng.random_range(0..c1.len())].clone())
            } else {
                Ok(random_clifford_circuit(la, depth, rng)?.1)
            }
        })
        .collect()
}

fn chi2_from_purities(p1: f64, p2: f64, p_mix: f64) -> f64 {
    q2_from_purity(p_mix) - 0.5 * (q2_from_purity(p1) + q2_from_purity(p2))
}

/// Per-trial `chi2` estimates from sampled Clifford unitaries alongside the
/// exact value. Within one sample set the same unitaries serve all three
/// purities. Output order is (time, N, trial).
pub fn clifford_convergence_experiment(s: &ScrambleScenario, cfg: &ConvergenceConfig) -> Result<Vec<ConvergenceRow>> {
    if s.model.kind() != ModelKind::Pxp {
        return invalid("Clifford convergence runs on the PXP model");
    }
    if cfg.n_trials == 0 || cfg.sample_counts.is_empty() || cfg.sample_counts.contains(&0) {
        return invalid("need at least one trial and positive sample counts");
    }
    if cfg.circuit_depth == 0 {
        return invalid("circuit depth must be at least 1");
    }
    let subset = convergence_subsystem(s, cfg)?;
    let la = subset.len();
    let (psi1, psi2) = prepare_ensemble(s)?;
    let propagator = Propagator::new(&s.model.hamiltonian()?)?;
    let (traj1, traj2) = (propagator.trajectory(&psi1)?, propagator.trajectory(&psi2)?);
    let c1: Vec<CMatrix> = enumerate_c1().iter().map(|e| to_dense(&e.matrix)).collect();

    let per_time: Vec<Vec<ConvergenceRow>> = s
        .time_grid
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let rho1 = partial_trace(&traj1.at(t)?, &subset)?;
            let rho2 = partial_trace(&traj2.at(t)?, &subset)?;
            let mix = DensityOperator::mixture(&[(0.5, &rho1), (0.5, &rho2)])?;
            let exact = chi2_from_purities(purity(&rho1), purity(&rho2), purity(&mix));
            let mut rows = Vec::new();
            for &n in &cfg.sample_counts {
                for trial in 0..cfg.n_trials {
                    let time_index = if cfg.reuse_unitaries { 0 } else { k as u64 };
                    let index = time_index * cfg.n_trials as u64 + trial as u64;
                    let mut rng = seed::stream(s.seeds.master, &format!("clifford/L{la}/N{n}"), index);
                    let us = draw_unitaries(la, n, cfg.circuit_depth, &c1, &mut rng)?;
                    let est = chi2_from_purities(
                        purity_from_basis_sampling(&rho1, &us)?,
                        purity_from_basis_sampling(&rho2, &us)?,
                        purity_from_basis_sampling(&mix, &us)?,
                    );
                    rows.push(ConvergenceRow { t, subsystem_size: la, n_samples: n, trial, chi2_est: est, chi2_exact: exact });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_time.into_iter().flatten().collect())
}

/// Mean and sample standard deviation over trials for each (t, N).
pub fn summarize_convergence(rows: &[ConvergenceRow]) -> Vec<ConvergenceSummary> {
    let mut out: Vec<ConvergenceSummary> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].t, rows[start].n_samples, rows[start].subsystem_size);
        let end = start + rows[start..].iter().take_while(|r| (r.t, r.n_samples, r.subsystem_size) == key).count();
        let xs: Vec<f64> = rows[start..end].iter().map(|r| r.chi2_est).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        } else {
            0.0
        };
        out.push(ConvergenceSummary {
            t: key.0,
            subsystem_size: key.2,
            n_samples: key.1,
            mean,
            std: var.sqrt(),
            chi2_exact: rows[start].chi2_exact,
        });
        start = end;
    }
    out
}

/// Reference single-qubit elements as dense matrices, for callers that
/// sample from the full group.
pub fn c1_dense() -> Vec<CMatrix> {
    enumerate_c1().iter().map(|e| to_dense(&e.matrix)).collect()
}
