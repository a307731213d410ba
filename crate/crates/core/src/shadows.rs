//! Classical shadows from randomized single-qubit Pauli measurements.
//!
//! Each snapshot stores, per site, the measured Pauli basis and the
//! outcome bit (0 for the `+1` eigenvalue). The single-site estimator is
//! `3 U^dagger |b><b| U - I`, and the trace inner product of two such
//! estimators on one site only takes the values 5, -4 and 1/2, so
//! subsystem purities and overlaps reduce to table lookups over the
//! recorded data.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::infotheory::q2_from_purity;
use crate::qhilbert::{
    apply_local_in_place, born_sample_index, c, index_to_bits, CMatrix, Local, Pauli, SiteSubset,
    StateVector,
};
use crate::seed;

/// Snapshots pack three bits per site into a `u64`.
pub const MAX_SNAPSHOT_SITES: usize = 21;
pub const DEFAULT_BATCHES: usize = 10;

/// Sitewise `Tr(sigma sigma~)` between two single-qubit snapshots:
/// 5 for identical eigenstates, -4 for orthogonal eigenstates of one basis,
/// 1/2 across different bases.
pub fn kernel_value(basis_1: Pauli, bit_1: u8, basis_2: Pauli, bit_2: u8) -> f64 {
    if basis_1 != basis_2 {
        0.5
    } else if bit_1 == bit_2 {
        5.0
    } else {
        -4.0
    }
}

/// Kernel indexed by site codes `2 * basis + bit`.
fn code_kernel(a: u8, b: u8) -> f64 {
    kernel_value(
        Pauli::from_index((a >> 1) as usize).expect("valid code"),
        a & 1,
        Pauli::from_index((b >> 1) as usize).expect("valid code"),
        b & 1,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Snapshot {
    n_sites: u8,
    packed: u64,
}

impl Snapshot {
    pub fn new(bases: &[Pauli], outcomes: &[u8]) -> Result<Self> {
        let n = bases.len();
        if n == 0 || n > MAX_SNAPSHOT_SITES {
            return invalid(format!("snapshot needs 1..={MAX_SNAPSHOT_SITES} sites, got {n}"));
        }
        if outcomes.len() != n {
            return invalid(format!("{n} bases but {} outcomes", outcomes.len()));
        }
        if outcomes.iter().any(|&o| o > 1) {
            return invalid("snapshot outcomes must be 0 or 1");
        }
        let packed = bases
            .iter()
            .zip(outcomes)
            .enumerate()
            .fold(0u64, |acc, (s, (b, &o))| acc | (((b.index() as u64) << 1 | o as u64) << (3 * s)));
        Ok(Self { n_sites: n as u8, packed })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites as usize
    }

    /// `2 * basis index + outcome bit` of `site`, in `0..6`.
    #[inline]
    pub fn code(&self, site: usize) -> u8 {
        ((self.packed >> (3 * site)) & 0b111) as u8
    }

    pub fn basis(&self, site: usize) -> Pauli {
        Pauli::from_index((self.code(site) >> 1) as usize).expect("valid code")
    }

    pub fn outcome(&self, site: usize) -> u8 {
        self.code(site) & 1
    }

    pub fn bases(&self) -> Vec<Pauli> {
        (0..self.n_sites()).map(|s| self.basis(s)).collect()
    }

    pub fn outcomes(&self) -> Vec<u8> {
        (0..self.n_sites()).map(|s| self.outcome(s)).collect()
    }

    /// Single-site estimator `3 U^dagger |b><b| U - I`.
    pub fn local_estimator(&self, site: usize) -> Local {
        let u = self.basis(site).to_computational();
        let mut ket = Local::zeros();
        ket[(self.outcome(site) as usize, self.outcome(site) as usize)] = c(1.0, 0.0);
        u.adjoint() * ket * u * c(3.0, 0.0) - Local::identity()
    }

    /// Dense reduced snapshot on `subset` (first subset site most significant).
    pub fn reconstruct(&self, subset: &SiteSubset) -> CMatrix {
        subset.indices().iter().fold(CMatrix::from_element(1, 1, c(1.0, 0.0)), |acc, &s| {
            let l = self.local_estimator(s);
            acc.kronecker(&CMatrix::from_iterator(2, 2, l.iter().copied()))
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotLine {
    b: String,
    o: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ShadowHeader {
    n_sites: usize,
    seed: u64,
    source_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowSet {
    n_sites: usize,
    snapshots: Vec<Snapshot>,
    source_label: String,
    seed: u64,
}

impl ShadowSet {
    pub fn new(n_sites: usize, snapshots: Vec<Snapshot>, source_label: impl Into<String>, seed: u64) -> Result<Self> {
        if let Some(s) = snapshots.iter().find(|s| s.n_sites() != n_sites) {
            return invalid(format!("snapshot of {} sites in a set of {n_sites}", s.n_sites()));
        }
        Ok(Self { n_sites, snapshots, source_label: source_label.into(), seed })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Header line with `n_sites`, `seed` and `source_label`, then one
    /// `{"b":"ZXY...","o":"010..."}` object per snapshot.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = ShadowHeader {
            n_sites: self.n_sites,
            seed: self.seed,
            source_label: self.source_label.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for s in &self.snapshots {
            let line = SnapshotLine {
                b: s.bases().iter().map(|p| p.as_char()).collect(),
                o: s.outcomes().iter().map(|&o| if o == 0 { '0' } else { '1' }).collect(),
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("shadow file: {msg}"));
        let mut lines = r.lines();
        let header_text = lines
            .next()
            .ok_or_else(|| bad("missing header line".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let header: ShadowHeader = serde_json::from_str(&header_text).map_err(|e| bad(e.to_string()))?;
        let mut snapshots = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SnapshotLine = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
            let bases = rec
                .b
                .chars()
                .map(|ch| Pauli::from_char(ch).ok_or_else(|| bad(format!("line {}: bad basis '{ch}'", k + 2))))
                .collect::<Result<Vec<_>>>()?;
            let outcomes = rec
                .o
                .chars()
                .map(|ch| match ch {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(bad(format!("line {}: bad outcome '{ch}'", k + 2))),
                })
                .collect::<Result<Vec<u8>>>()?;
            snapshots.push(Snapshot::new(&bases, &outcomes)?);
        }
        Self::new(header.n_sites, snapshots, header.source_label, header.seed)
    }
}

/// Measures `state` with the given per-site bases and one Born sample.
pub fn sample_snapshot_in_bases<R: Rng + ?Sized>(state: &StateVector, bases: &[Pauli], rng: &mut R) -> Result<Snapshot> {
    let n = state.n_sites();
    if bases.len() != n {
        return invalid(format!("{} bases for a {n}-site state", bases.len()));
    }
    let mut amps = state.amplitudes().clone();
    for (site, b) in bases.iter().enumerate() {
        if *b != Pauli::Z {
            apply_local_in_place(&mut amps, n, site, &b.to_computational());
        }
    }
    let rotated = StateVector::from_parts_unchecked(n, amps);
    let bits = index_to_bits(born_sample_index(&rotated, rng), n);
    Snapshot::new(bases, &bits)
}

/// Uniformly random Pauli basis per site, then one measurement.
pub fn sample_snapshot<R: Rng + ?Sized>(state: &StateVector, rng: &mut R) -> Result<Snapshot> {
    let bases: Vec<Pauli> = (0..state.n_sites())
        .map(|_| Pauli::ALL[rng.random_range(0..3)])
        .collect();
    sample_snapshot_in_bases(state, &bases, rng)
}

/// `shots` snapshots; shot `i` draws from its own substream of `seed`, so
/// the set does not depend on the worker count.
pub fn sample_shadow_set(state: &StateVector, shots: usize, seed: u64, label: impl Into<String>) -> Result<ShadowSet> {
    if state.n_sites() > MAX_SNAPSHOT_SITES {
        return invalid(format!("shadows support at most {MAX_SNAPSHOT_SITES} sites"));
    }
    let snapshots = (0..shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream(seed, "shadow-shot", i as u64);
            sample_snapshot(state, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    ShadowSet::new(state.n_sites(), snapshots, label, seed)
}

/// Product over `subset` of the sitewise kernel.
pub fn pair_kernel(s1: &Snapshot, s2: &Snapshot, subset: &SiteSubset) -> Result<f64> {
    if s1.n_sites() != s2.n_sites() {
        return invalid("snapshots cover different numbers of sites");
    }
    if let Some(&bad) = subset.indices().iter().find(|&&s| s >= s1.n_sites()) {
        return invalid(format!("site {bad} out of range for {} sites", s1.n_sites()));
    }
    Ok(subset
        .indices()
        .iter()
        .map(|&s| code_kernel(s1.code(s), s2.code(s)))
        .product())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoMConfig {
    pub n_batches: usize,
    pub batch_size: usize,
}

impl MoMConfig {
    pub fn new(n_batches: usize, batch_size: usize) -> Result<Self> {
        if n_batches == 0 || batch_size == 0 {
            return invalid("median-of-means needs at least one batch of at least one sample");
        }
        Ok(Self { n_batches, batch_size })
    }

    /// `n_batches` equal batches out of `shots`; the remainder is unused.
    pub fn split(shots: usize, n_batches: usize) -> Result<Self> {
        if n_batches == 0 || shots < n_batches {
            return invalid(format!("cannot split {shots} shots into {n_batches} batches"));
        }
        Self::new(n_batches, shots / n_batches)
    }

    pub fn required(&self) -> usize {
        self.n_batches * self.batch_size
    }
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Partitions `samples` in order into `k` batches of `len / k` (excess
/// samples at the end are dropped) and returns the median of batch means.
pub fn median_of_means(samples: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return invalid("median-of-means needs at least one batch");
    }
    if k > samples.len() {
        return invalid(format!("{k} batches requested from {} samples", samples.len()));
    }
    let size = samples.len() / k;
    let means: Vec<f64> = samples[..size * k]
        .chunks(size)
        .map(|b| b.iter().sum::<f64>() / size as f64)
        .collect();
    Ok(median(&means))
}

/// Local records of one set restricted to a subset, as base-6 integers.
fn subset_codes(set: &ShadowSet, subset: &SiteSubset) -> Vec<usize> {
    set.snapshots
        .iter()
        .map(|s| {
            subset
                .indices()
                .iter()
                .rev()
                .fold(0usize, |acc, &site| acc * 6 + s.code(site) as usize)
        })
        .collect()
}

/// Kernel between two base-6 local records of `k` sites.
fn record_kernel(mut a: usize, mut b: usize, k: usize) -> f64 {
    let mut out = 1.0;
    for _ in 0..k {
        out *= code_kernel((a % 6) as u8, (b % 6) as u8);
        a /= 6;
        b /= 6;
    }
    out
}

/// Histogram-based evaluation pays off while the table of record pairs
/// stays small.
const HISTOGRAM_MAX_SITES: usize = 3;

struct KernelTable {
    k: usize,
    table: Option<Vec<f64>>,
}

impl KernelTable {
    fn new(k: usize) -> Self {
        let table = (k <= HISTOGRAM_MAX_SITES).then(|| {
            let r = 6usize.pow(k as u32);
            (0..r * r).map(|i| record_kernel(i / r, i % r, k)).collect()
        });
        Self { k, table }
    }

    fn records(&self) -> usize {
        6usize.pow(self.k as u32)
    }

    fn histogram(&self, codes: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.records()];
        for &c in codes {
            h[c] += 1.0;
        }
        h
    }

    /// Sum over ordered pairs `i != j` within one batch.
    fn within_sum(&self, codes: &[usize]) -> f64 {
        match &self.table {
            Some(t) => {
                let h = self.histogram(codes);
                let r = self.records();
                let mut total = 0.0;
                for a in (0..r).filter(|&a| h[a] > 0.0) {
                    let row = &t[a * r..(a + 1) * r];
                    let dot: f64 = h.iter().zip(row).filter(|(n, _)| **n > 0.0).map(|(n, k)| n * k).sum();
                    total += h[a] * (dot - row[a]);
                }
                total
            }
            None => {
                let mut total = 0.0;
                for i in 0..codes.len() {
                    for j in i + 1..codes.len() {
                        total += record_kernel(codes[i], codes[j], self.k);
                    }
                }
                2.0 * total
            }
        }
    }

    /// Sum over all cross pairs of two batches.
    fn cross_sum(&self, a: &[usize], b: &[usize]) -> f64 {
        match &self.table {
            Some(t) => {
                let (ha, hb) = (self.histogram(a), self.histogram(b));
                let r = self.records();
                let mut total = 0.0;
                for x in (0..r).filter(|&x| ha[x] > 0.0) {
                    let row = &t[x * r..(x + 1) * r];
                    total += ha[x] * hb.iter().zip(row).map(|(n, k)| n * k).sum::<f64>();
                }
                total
            }
            None => a
                .iter()
                .map(|&x| b.iter().map(|&y| record_kernel(x, y, self.k)).sum::<f64>())
                .sum(),
        }
    }
}

fn check_subset(set: &ShadowSet, subset: &SiteSubset) -> Result<()> {
    if let Some(&bad) = subset.indices().iter().find(|&&s| s >= set.n_sites()) {
        return invalid(format!("site {bad} out of range for {} sites", set.n_sites()));
    }
    Ok(())
}

/// Per-batch U-statistic means of `Tr(rho_A^2)`.
pub fn purity_batch_means(shadows: &ShadowSet, subset: &SiteSubset, mom: &MoMConfig) -> Result<Vec<f64>> {
    check_subset(shadows, subset)?;
    if mom.batch_size < 2 {
        return invalid("purity estimation needs at least two snapshots per batch");
    }
    if mom.required() > shadows.len() {
        return invalid(format!(
            "{} batches of {} need {} snapshots, only {} available",
            mom.n_batches,
            mom.batch_size,
            mom.required(),
            shadows.len()
        ));
    }
    let codes = subset_codes(shadows, subset);
    let table = KernelTable::new(subset.len());
    let pairs = (mom.batch_size * (mom.batch_size - 1)) as f64;
    Ok(codes[..mom.required()]
        .chunks(mom.batch_size)
        .map(|b| table.within_sum(b) / pairs)
        .collect())
}

/// Median over batches of the mean kernel over distinct snapshot pairs.
pub fn purity_estimate(shadows: &ShadowSet, subset: &SiteSubset, mom: &MoMConfig) -> Result<f64> {
    Ok(median(&purity_batch_means(shadows, subset, mom)?))
}

/// Estimates `Tr(rho_1,A rho_2,A)`: batch `k` of one set is paired with
/// batch `k` of the other over all cross pairs.
pub fn overlap_estimate(s1: &ShadowSet, s2: &ShadowSet, subset: &SiteSubset, mom: &MoMConfig) -> Result<f64> {
    if s1.n_sites() != s2.n_sites() {
        return invalid(format!("shadow sets cover {} and {} sites", s1.n_sites(), s2.n_sites()));
    }
    if s1.is_empty() || s2.is_empty() {
        return invalid("overlap estimation needs non-empty shadow sets");
    }
    check_subset(s1, subset)?;
    if mom.required() > s1.len().min(s2.len()) {
        return invalid(format!(
            "{} batches of {} exceed the available snapshots ({} and {})",
            mom.n_batches,
            mom.batch_size,
            s1.len(),
            s2.len()
        ));
    }
    let (a, b) = (subset_codes(s1, subset), subset_codes(s2, subset));
    let table = KernelTable::new(subset.len());
    let pairs = (mom.batch_size * mom.batch_size) as f64;
    let means: Vec<f64> = a[..mom.required()]
        .chunks(mom.batch_size)
        .zip(b[..mom.required()].chunks(mom.batch_size))
        .map(|(x, y)| table.cross_sum(x, y) / pairs)
        .collect();
    Ok(median(&means))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Estimate {
    pub chi2: f64,
    /// Raw (unclamped) estimates.
    pub purity_1: f64,
    pub purity_2: f64,
    pub overlap: f64,
    /// `(P1 + P2 + 2 O) / 4`, the purity of the equal mixture.
    pub purity_mean: f64,
}

/// Plug-in `chi_2` of the equal-weight pair. Purities are clamped to
/// `[2^-|A|, 1]` before the logarithm.
pub fn chi2_estimate(s1: &ShadowSet, s2: &ShadowSet, subset: &SiteSubset, mom: &MoMConfig) -> Result<Chi2Estimate> {
    let purity_1 = purity_estimate(s1, subset, mom)?;
    let purity_2 = purity_estimate(s2, subset, mom)?;
    let overlap = overlap_estimate(s1, s2, subset, mom)?;
    let purity_mean = (purity_1 + purity_2 + 2.0 * overlap) / 4.0;
    let floor = 0.5f64.powi(subset.len() as i32);
    let q2 = |p: f64| q2_from_purity(p.clamp(floor, 1.0));
    Ok(Chi2Estimate {
        chi2: q2(purity_mean) - 0.5 * (q2(purity_1) + q2(purity_2)),
        purity_1,
        purity_2,
        overlap,
        purity_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qhilbert::{partial_trace, purity, CVector, DensityOperator};
    use crate::random::random_state;

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn kernel_lookup_values() {
        assert_eq!(kernel_value(Pauli::Z, 0, Pauli::Z, 0), 5.0);
        assert_eq!(kernel_value(Pauli::Z, 0, Pauli::Z, 1), -4.0);
        assert_eq!(kernel_value(Pauli::Z, 0, Pauli::X, 1), 0.5);
    }

    #[test]
    fn snapshot_packing() {
        let s = Snapshot::new(&[Pauli::Z, Pauli::X, Pauli::Y], &[1, 0, 1]).unwrap();
        assert_eq!(s.bases(), vec![Pauli::Z, Pauli::X, Pauli::Y]);
        assert_eq!(s.outcomes(), vec![1, 0, 1]);
        assert!(Snapshot::new(&[Pauli::Z], &[2]).is_err());
        assert!(Snapshot::new(&[Pauli::Z, Pauli::Z], &[0]).is_err());
    }

    #[test]
    fn forced_basis_examples() {
        let mut rng = seed::stream(1, "snap", 0);
        let up = StateVector::basis_state(&[0, 0, 0, 0]).unwrap();
        for _ in 0..100 {
            let s = sample_snapshot_in_bases(&up, &[Pauli::Z; 4], &mut rng).unwrap();
            assert_eq!(s.outcomes(), vec![0; 4]);
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::new(1, CVector::from_vec(vec![c(h, 0.0), c(h, 0.0)])).unwrap();
        let plus_i = StateVector::new(1, CVector::from_vec(vec![c(h, 0.0), c(0.0, h)])).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_snapshot_in_bases(&plus, &[Pauli::X], &mut rng).unwrap().outcome(0), 0);
            assert_eq!(sample_snapshot_in_bases(&plus_i, &[Pauli::Y], &mut rng).unwrap().outcome(0), 0);
        }
    }

    #[test]
    fn pair_kernel_examples() {
        let a = Snapshot::new(&[Pauli::Z, Pauli::Z], &[0, 0]).unwrap();
        let b = Snapshot::new(&[Pauli::Z, Pauli::X], &[0, 1]).unwrap();
        let one = SiteSubset::new(&[0], 2).unwrap();
        let both = SiteSubset::new(&[0, 1], 2).unwrap();
        assert_eq!(pair_kernel(&a, &a, &one).unwrap(), 5.0);
        assert_eq!(pair_kernel(&a, &b, &both).unwrap(), 2.5);
        let three = Snapshot::new(&[Pauli::Z; 3], &[0; 3]).unwrap();
        assert!(pair_kernel(&a, &three, &one).is_err());
    }

    /// All 36^2 two-site record pairs against dense Tr(rho1 rho2).
    #[test]
    fn pair_kernel_matches_dense_snapshots() {
        let mut records = Vec::new();
        for b0 in Pauli::ALL {
            for o0 in 0..2 {
                for b1 in Pauli::ALL {
                    for o1 in 0..2 {
                        records.push(Snapshot::new(&[b0, b1], &[o0, o1]).unwrap());
                    }
                }
            }
        }
        let both = SiteSubset::new(&[0, 1], 2).unwrap();
        for a in &records {
            for b in &records {
                let dense = (a.reconstruct(&both) * b.reconstruct(&both)).trace();
                let k = pair_kernel(a, b, &both).unwrap();
                assert!((dense.re - k).abs() < 1e-12 && dense.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_snapshot_is_unbiased() {
        let mut rng = seed::stream(5, "unbiased-state", 0);
        let psi = random_state(3, &mut rng);
        let rho = DensityOperator::pure(&psi);
        let all = SiteSubset::new(&[0, 1, 2], 3).unwrap();
        let set = sample_shadow_set(&psi, 30_000, 77, "test").unwrap();
        let mut mean = CMatrix::zeros(8, 8);
        for s in set.snapshots() {
            mean += s.reconstruct(&all);
        }
        mean /= c(set.len() as f64, 0.0);
        let err = max_diff(&mean, rho.matrix());
        assert!(err < 0.02, "max-norm error {err}");
    }

    #[test]
    fn histogram_and_direct_pair_sums_agree() {
        let mut rng = seed::stream(6, "hist", 0);
        let psi = random_state(5, &mut rng);
        let set = sample_shadow_set(&psi, 200, 3, "h").unwrap();
        for sites in [vec![1], vec![0, 3], vec![0, 2, 4], vec![0, 1, 2, 3]] {
            let sub = SiteSubset::new(&sites, 5).unwrap();
            let codes = subset_codes(&set, &sub);
            let fast = KernelTable::new(sub.len());
            let slow = KernelTable { k: sub.len(), table: None };
            let (w1, w2) = (fast.within_sum(&codes[..50]), slow.within_sum(&codes[..50]));
            assert!((w1 - w2).abs() < 1e-9 * w2.abs().max(1.0));
            let (x1, x2) = (fast.cross_sum(&codes[..40], &codes[40..90]), slow.cross_sum(&codes[..40], &codes[40..90]));
            assert!((x1 - x2).abs() < 1e-9 * x2.abs().max(1.0));
            // Direct pair_kernel sum over distinct ordered pairs.
            let snaps = &set.snapshots()[..50];
            let mut direct = 0.0;
            for i in 0..50 {
                for j in 0..50 {
                    if i != j {
                        direct += pair_kernel(&snaps[i], &snaps[j], &sub).unwrap();
                    }
                }
            }
            assert!((w1 - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn two_snapshot_purity_is_the_single_pair() {
        let s = Snapshot::new(&[Pauli::Z], &[0]).unwrap();
        let set = ShadowSet::new(1, vec![s, s], "pair", 0).unwrap();
        let one = SiteSubset::new(&[0], 1).unwrap();
        let est = purity_estimate(&set, &one, &MoMConfig::new(1, 2).unwrap()).unwrap();
        assert_eq!(est, 5.0);
        assert!(purity_estimate(&set, &one, &MoMConfig::new(1, 1).unwrap()).is_err());
        assert!(purity_estimate(&set, &one, &MoMConfig::new(2, 2).unwrap()).is_err());
    }

    #[test]
    fn purity_estimates_for_simple_states() {
        let mom = MoMConfig::split(3000, DEFAULT_BATCHES).unwrap();
        let up = StateVector::basis_state(&[0; 4]).unwrap();
        let set = sample_shadow_set(&up, 3000, 11, "up").unwrap();
        // For |0..0> the single-snapshot projection Tr(rho_hat rho) is a
        // product of sitewise values 2 (prob 1/3) and 1/2 (prob 2/3): mean 1,
        // variance 1.5^k - 1. The U-statistic over a batch of n has variance
        // about 4 (1.5^k - 1) / n and the median of K means inflates the
        // spread of their average by about sqrt(pi / 2).
        for (sites, tol) in [(vec![0], 0.05), (vec![1, 2], 0.0), (vec![0, 1, 3], 0.0)] {
            let sub = SiteSubset::new(&sites, 4).unwrap();
            let k = sites.len() as i32;
            let batch_var = 4.0 * (1.5f64.powi(k) - 1.0) / mom.batch_size as f64;
            let sd = (std::f64::consts::FRAC_PI_2 * batch_var / mom.n_batches as f64).sqrt();
            let tol = if tol > 0.0 { tol } else { 3.0 * sd };
            let p = purity_estimate(&set, &sub, &mom).unwrap();
            assert!((p - 1.0).abs() < tol, "{sites:?}: {p} (tol {tol})");
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::new(2, CVector::from_vec(vec![c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)])).unwrap();
        let set = sample_shadow_set(&bell, 3000, 12, "bell").unwrap();
        let p = purity_estimate(&set, &SiteSubset::new(&[0], 2).unwrap(), &mom).unwrap();
        assert!((p - 0.5).abs() < 0.05, "{p}");
    }

    #[test]
    fn overlap_estimates() {
        let mom = MoMConfig::split(3000, DEFAULT_BATCHES).unwrap();
        let up = StateVector::basis_state(&[0; 3]).unwrap();
        let down = StateVector::basis_state(&[1; 3]).unwrap();
        let a = sample_shadow_set(&up, 3000, 1, "a").unwrap();
        let b = sample_shadow_set(&up, 3000, 2, "b").unwrap();
        let d = sample_shadow_set(&down, 3000, 3, "d").unwrap();
        let site = SiteSubset::new(&[1], 3).unwrap();
        assert!((overlap_estimate(&a, &b, &site, &mom).unwrap() - 1.0).abs() < 0.05);
        assert!(overlap_estimate(&a, &d, &site, &mom).unwrap().abs() < 0.05);
        let other = sample_shadow_set(&StateVector::basis_state(&[0; 2]).unwrap(), 10, 1, "x").unwrap();
        assert!(overlap_estimate(&a, &other, &SiteSubset::new(&[0], 2).unwrap(), &mom).is_err());
    }

    /// Over 20 repetitions the mean overlap estimate of two random 2-qubit
    /// states sits within 4 standard errors of Tr(rho1 rho2).
    #[test]
    fn overlap_matches_dense_trace() {
        let mut rng = seed::stream(13, "overlap", 0);
        let (p1, p2) = (random_state(2, &mut rng), random_state(2, &mut rng));
        let all = SiteSubset::new(&[0, 1], 2).unwrap();
        let exact = DensityOperator::pure(&p1).overlap(&DensityOperator::pure(&p2));
        let mom = MoMConfig::split(3000, DEFAULT_BATCHES).unwrap();
        let est: Vec<f64> = (0..20)
            .map(|r| {
                let a = sample_shadow_set(&p1, 3000, 100 + r, "a").unwrap();
                let b = sample_shadow_set(&p2, 3000, 200 + r, "b").unwrap();
                overlap_estimate(&a, &b, &all, &mom).unwrap()
            })
            .collect();
        let mean = est.iter().sum::<f64>() / 20.0;
        let sd = (est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
        assert!((mean - exact).abs() < 4.0 * sd / 20f64.sqrt(), "{mean} vs {exact} (sd {sd})");
    }

    #[test]
    fn chi2_estimate_controls() {
        let mom = MoMConfig::split(3000, DEFAULT_BATCHES).unwrap();
        let mut rng = seed::stream(14, "chi2", 0);
        let psi = random_state(3, &mut rng);
        let sub = SiteSubset::new(&[0], 3).unwrap();
        let a = sample_shadow_set(&psi, 3000, 5, "a").unwrap();
        let b = sample_shadow_set(&psi, 3000, 6, "b").unwrap();
        let est = chi2_estimate(&a, &b, &sub, &mom).unwrap();
        assert!(est.chi2.abs() < 0.05, "{est:?}");

        // Orthogonal single-site pure states: chi_2 = ln(4/3).
        let up = StateVector::basis_state(&[0, 0, 0]).unwrap();
        let flipped = StateVector::basis_state(&[0, 1, 0]).unwrap();
        let a = sample_shadow_set(&up, 3000, 7, "a").unwrap();
        let b = sample_shadow_set(&flipped, 3000, 8, "b").unwrap();
        let est = chi2_estimate(&a, &b, &SiteSubset::new(&[1], 3).unwrap(), &mom).unwrap();
        assert!((est.chi2 - (4.0f64 / 3.0).ln()).abs() < 0.05, "{est:?}");
    }

    #[test]
    fn mixture_purity_decomposition() {
        let mut rng = seed::stream(15, "decomp", 0);
        let (p1, p2) = (random_state(4, &mut rng), random_state(4, &mut rng));
        let sub = SiteSubset::new(&[0, 2], 4).unwrap();
        let r1 = partial_trace(&p1, &sub).unwrap();
        let r2 = partial_trace(&p2, &sub).unwrap();
        let mix = DensityOperator::mixture(&[(0.5, &r1), (0.5, &r2)]).unwrap();
        let lhs = purity(&mix);
        let rhs = (purity(&r1) + purity(&r2) + 2.0 * r1.overlap(&r2)) / 4.0;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn median_of_means_examples() {
        assert_eq!(median_of_means(&[1.0, 2.0, 3.0, 100.0, 2.0, 3.0], 3).unwrap(), 2.5);
        let v = [1.0, 4.0, 2.0, 9.0, 5.0];
        assert!((median_of_means(&v, 1).unwrap() - 4.2).abs() < 1e-15);
        assert!(median_of_means(&v, 6).is_err());
        assert!(median_of_means(&v, 0).is_err());
        // Excess samples beyond k * (len / k) are dropped.
        assert_eq!(median_of_means(&[1.0, 3.0, 1000.0], 2).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn jsonl_roundtrip() {
        let psi = StateVector::basis_state(&[0, 1, 0]).unwrap();
        let set = sample_shadow_set(&psi, 25, 9, "psi").unwrap();
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first_record = text.lines().nth(1).unwrap();
        assert!(first_record.starts_with("{\"b\":\"") && first_record.contains("\"o\":\""));
        let back = ShadowSet::read_jsonl(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, set);
        assert!(ShadowSet::read_jsonl(std::io::Cursor::new(b"{\"n_sites\":1,\"seed\":0,\"source_label\":\"x\"}\n{\"b\":\"Q\",\"o\":\"0\"}\n".to_vec())).is_err());
    }

    #[test]
    fn shadow_sets_are_independent_of_thread_count() {
        let psi = StateVector::basis_state(&[0, 1, 0, 1]).unwrap();
        let a = sample_shadow_set(&psi, 500, 21, "x").unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_shadow_set(&psi, 500, 21, "x").unwrap());
        assert_eq!(a, b);
    }
}
