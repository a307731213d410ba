//! Scrambling experiments: a product state and its single-site flip are
//! evolved under one Hamiltonian, and information metrics of the
//! equal-weight pair of reduced states are tracked over time and space.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolve::{uniform_grid, Propagator, DEFAULT_STEPS, DEFAULT_T_MAX};
use crate::infotheory::{chi2, chi_q, holevo_chi, Ensemble};
use crate::models::{build_mbl_bonds, draw_disorder, Model, ModelKind, ModelSpec};
use crate::qhilbert::{apply_local_unitary, partial_trace, sigma_x, SiteSubset, StateVector};
use crate::seed;
use crate::shadows::{chi2_estimate, sample_shadow_set, MoMConfig, DEFAULT_BATCHES};

pub const DEFAULT_SUBSET_CAP: usize = 5000;
pub const LOG_BASE_NOTE: &str = "natural logarithm (nats)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// All spins up.
    Polarized,
    /// Up on even sites, down on odd sites.
    Neel,
}

impl InitialKind {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Tfim | ModelKind::Mfim => InitialKind::Polarized,
            ModelKind::Pxp | ModelKind::Mbl => InitialKind::Neel,
        }
    }

    pub fn bits(self, n_sites: usize) -> Vec<u8> {
        match self {
            InitialKind::Polarized => vec![0; n_sites],
            InitialKind::Neel => (0..n_sites).map(|s| (s % 2) as u8).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetPolicy {
    /// One column: the maximum over every size-`L_A` subset of the chain.
    AllSubsets,
    /// One column per site `x`: the maximum over size-`L_A` subsets containing `x`.
    WindowsContainingX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Chi2,
    Holevo,
    ChiQ,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Chi2 => "chi2",
            Metric::Holevo => "holevo",
            Metric::ChiQ => "chi_q",
        }
    }

    fn evaluate(self, e: &Ensemble) -> Result<f64> {
        match self {
            Metric::Chi2 => chi2(e),
            Metric::Holevo => holevo_chi(e),
            Metric::ChiQ => chi_q(e),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "chi2" => Ok(Metric::Chi2),
            "holevo" => Ok(Metric::Holevo),
            "chi_q" => Ok(Metric::ChiQ),
            other => Err(format!("unknown metric '{other}' (expected chi2, holevo or chi_q)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedBundle {
    pub master: u64,
}

impl SeedBundle {
    pub fn derive(&self, purpose: &str, index: u64) -> u64 {
        seed::derive_seed(self.master, purpose, index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrambleScenario {
    pub model: ModelSpec,
    pub initial: InitialKind,
    pub perturbation_site: usize,
    pub subsystem_size: usize,
    pub subset_policy: SubsetPolicy,
    pub metrics: Vec<Metric>,
    pub time_grid: Vec<f64>,
    pub shots: Option<usize>,
    pub batches: usize,
    pub seeds: SeedBundle,
    pub subset_cap: usize,
    /// Disorder realizations averaged by exact MBL grids. The first is the
    /// configured realization; the others are drawn from the master seed.
    #[serde(default = "one")]
    pub realizations: usize,
}

fn one() -> usize {
    1
}

/// Site nearest the chain center, `floor(L / 2)`. For PXP from the Neel
/// state the flip must de-excite an up spin, so the nearest even site at or
/// below the center is used instead.
pub fn default_perturbation_site(kind: ModelKind, initial: InitialKind, n_sites: usize) -> usize {
    let center = n_sites / 2;
    if kind == ModelKind::Pxp && initial == InitialKind::Neel {
        center - center % 2
    } else {
        center
    }
}

impl ScrambleScenario {
    /// Defaults: model-appropriate initial state, center perturbation,
    /// windows policy, `chi2` only, `t` in `[0, 30]` with 301 points.
    pub fn new(model: ModelSpec, subsystem_size: usize, master_seed: u64) -> Result<Self> {
        let kind = model.kind();
        let initial = InitialKind::default_for(kind);
        let s = Self {
            perturbation_site: default_perturbation_site(kind, initial, model.n_sites),
            model,
            initial,
            subsystem_size,
            subset_policy: SubsetPolicy::WindowsContainingX,
            metrics: vec![Metric::Chi2],
            time_grid: uniform_grid(DEFAULT_T_MAX, DEFAULT_STEPS)?,
            shots: None,
            batches: DEFAULT_BATCHES,
            seeds: SeedBundle { master: master_seed },
            subset_cap: DEFAULT_SUBSET_CAP,
            realizations: 1,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n_sites(&self) -> usize {
        self.model.n_sites
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let l = self.n_sites();
        if self.perturbation_site >= l {
            return invalid(format!("perturbation site {} out of range for {l} sites", self.perturbation_site));
        }
        if self.subsystem_size == 0 || self.subsystem_size > l {
            return invalid(format!("subsystem size {} must be in 1..={l}", self.subsystem_size));
        }
        if self.metrics.is_empty() {
            return invalid("at least one metric is required");
        }
        if self.time_grid.is_empty() {
            return invalid("time grid is empty");
        }
        if self.time_grid[0] < 0.0 || self.time_grid.iter().any(|t| !t.is_finite()) {
            return invalid("time grid must be finite and start at t >= 0");
        }
        if self.time_grid.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("time grid must be strictly increasing");
        }
        if self.batches == 0 {
            return invalid("batch count must be positive");
        }
        if self.realizations == 0 || (self.realizations > 1 && self.model.kind() != ModelKind::Mbl) {
            return invalid("disorder averaging needs an MBL model and at least one realization");
        }
        Ok(())
    }

    fn subsets(&self) -> Result<Vec<SiteSubset>> {
        let l = self.n_sites();
        let count = binomial(l, self.subsystem_size);
        if count > self.subset_cap as u128 {
            return Err(Error::Resource(format!(
                "{count} subsets of size {} in {l} sites exceed the cap of {}",
                self.subsystem_size, self.subset_cap
            )));
        }
        Ok(SiteSubset::all_of_size(l, self.subsystem_size))
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// `|Psi_1>` is the configured product state and `|Psi_2>` applies sigma-x
/// at the perturbation site.
pub fn prepare_ensemble(s: &ScrambleScenario) -> Result<(StateVector, StateVector)> {
    s.validate()?;
    let bits = s.initial.bits(s.n_sites());
    if s.model.kind() == ModelKind::Pxp {
        if s.initial != InitialKind::Neel {
            return invalid("PXP scenarios start from the Neel state");
        }
        if bits[s.perturbation_site] != 0 {
            return invalid(format!(
                "perturbation at inactive site {} would exit scarred subspace",
                s.perturbation_site
            ));
        }
    }
    let psi1 = StateVector::basis_state(&bits)?;
    let psi2 = apply_local_unitary(&psi1, s.perturbation_site, &sigma_x())?;
    Ok((psi1, psi2))
}

fn metric_values(metrics: &[Metric], psi1: &StateVector, psi2: &StateVector, subset: &SiteSubset) -> Result<Vec<f64>> {
    let e = Ensemble::equal_pair(partial_trace(psi1, subset)?, partial_trace(psi2, subset)?)?;
    metrics.iter().map(|m| m.evaluate(&e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Site(usize),
    All,
}

impl Column {
    fn label(self) -> String {
        match self {
            Column::Site(x) => x.to_string(),
            Column::All => "all".to_string(),
        }
    }

    fn admits(self, subset: &SiteSubset) -> bool {
        match self {
            Column::Site(x) => subset.contains(x),
            Column::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub scenario: ScrambleScenario,
    pub code_version: String,
    pub generator_id: String,
    pub log_base: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub metrics: Vec<Metric>,
    pub times: Vec<f64>,
    pub columns: Vec<Column>,
    /// Indexed `[metric][time][column]`.
    pub values: Vec<Vec<Vec<f64>>>,
    pub metadata: GridMetadata,
}

impl GridResult {
    pub fn value(&self, metric: Metric, t_index: usize, column: usize) -> Option<f64> {
        let m = self.metrics.iter().position(|&x| x == metric)?;
        self.values.get(m)?.get(t_index)?.get(column).copied()
    }

    /// Time series of one metric in one column.
    pub fn series(&self, metric: Metric, column: usize) -> Option<Vec<f64>> {
        let m = self.metrics.iter().position(|&x| x == metric)?;
        self.values[m].iter().map(|row| row.get(column).copied()).collect()
    }

    /// Rows `metric,t,x,value` after a header row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "metric,t,x,value")?;
        for (m, metric) in self.metrics.iter().enumerate() {
            for (k, t) in self.times.iter().enumerate() {
                for (col, column) in self.columns.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        metric.name(),
                        format_sig(*t),
                        column.label(),
                        format_sig(self.values[m][k][col])
                    )?;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn metadata(s: &ScrambleScenario) -> GridMetadata {
    GridMetadata {
        scenario: s.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        generator_id: seed::GENERATOR_ID.to_string(),
        log_base: LOG_BASE_NOTE.to_string(),
    }
}

/// Decimal rendering with 12 significant digits.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".to_string() } else { v.to_string() };
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (11 - exponent).max(0) as usize;
    let text = format!("{v:.decimals$}");
    // Rounding can carry into a new leading digit (9.99.. -> 10.0..).
    let digits = text.chars().filter(|ch| ch.is_ascii_digit()).skip_while(|&ch| ch == '0').count();
    if digits > 12 && decimals > 0 {
        format!("{v:.prec$}", prec = decimals - 1)
    } else {
        text
    }
}

/// Exact metric grid: for each time, the maximum of every requested metric
/// over the qualifying subsets of each column. MBL scenarios with several
/// realizations average these maxima cell by cell.
pub fn exact_metric_grid(s: &ScrambleScenario) -> Result<GridResult> {
    s.validate()?;
    let mut grid = single_realization_grid(s, &s.model)?;
    if s.realizations > 1 {
        let Model::Mbl { j_perp, j_z, disorder } = &s.model.model else {
            return invalid("disorder averaging needs an MBL model");
        };
        for r in 1..s.realizations {
            let fields = draw_disorder(s.n_sites(), disorder.w, s.seeds.derive("disorder", r as u64))?;
            let model = ModelSpec::mbl_with(s.n_sites(), *j_perp, *j_z, fields)?;
            let extra = single_realization_grid(s, &model)?;
            for (acc, add) in grid.values.iter_mut().flatten().flatten().zip(extra.values.iter().flatten().flatten()) {
                *acc += add;
            }
        }
        let scale = 1.0 / s.realizations as f64;
        grid.values.iter_mut().flatten().flatten().for_each(|v| *v *= scale);
    }
    Ok(grid)
}

fn single_realization_grid(s: &ScrambleScenario, model: &ModelSpec) -> Result<GridResult> {
    let (psi1, psi2) = prepare_ensemble(s)?;
    let subsets = s.subsets()?;
    let propagator = Propagator::new(&model.hamiltonian()?)?;
    let (traj1, traj2) = (propagator.trajectory(&psi1)?, propagator.trajectory(&psi2)?);
    let columns: Vec<Column> = match s.subset_policy {
        SubsetPolicy::AllSubsets => vec![Column::All],
        SubsetPolicy::WindowsContainingX => (0..s.n_sites()).map(Column::Site).collect(),
    };
    // [time][metric][column]
    let per_time: Vec<Vec<Vec<f64>>> = s
        .time_grid
        .par_iter()
        .map(|&t| {
            let (a, b) = (traj1.at(t)?, traj2.at(t)?);
            let per_subset = subsets
                .iter()
                .map(|sub| metric_values(&s.metrics, &a, &b, sub))
                .collect::<Result<Vec<_>>>()?;
            Ok((0..s.metrics.len())
                .map(|m| {
                    columns
                        .iter()
                        .map(|col| {
                            subsets
                                .iter()
                                .zip(&per_subset)
                                .filter(|(sub, _)| col.admits(sub))
                                .map(|(_, v)| v[m])
                                .fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let values = (0..s.metrics.len())
        .map(|m| per_time.iter().map(|row| row[m].clone()).collect())
        .collect();
    Ok(GridResult {
        metrics: s.metrics.clone(),
        times: s.time_grid.clone(),
        columns,
        values,
        metadata: metadata(s),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowCurveRow {
    pub t: f64,
    pub subsystem_size: usize,
    pub chi2_shadow: f64,
    pub chi2_exact: f64,
}

pub fn write_shadow_curve_csv<W: Write>(rows: &[ShadowCurveRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,L_A,chi2_shadow,chi2_exact")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            format_sig(r.t),
            r.subsystem_size,
            format_sig(r.chi2_shadow),
            format_sig(r.chi2_exact)
        )?;
    }
    Ok(())
}

fn shadow_curve(s: &ScrambleScenario, control: bool) -> Result<Vec<ShadowCurveRow>> {
    if !s.metrics.contains(&Metric::Chi2) {
        return invalid("shadow curves estimate chi2 only");
    }
    let shots = s.shots.ok_or_else(|| Error::InvalidArgument("shadow curves need a shot count".into()))?;
    if shots < 2 * s.batches {
        return invalid(format!("{shots} shots cannot fill {} batches of at least two", s.batches));
    }
    let mom = MoMConfig::split(shots, s.batches)?;
    let (psi1, psi2) = prepare_ensemble(s)?;
    let subsets: Vec<SiteSubset> = match s.subset_policy {
        SubsetPolicy::AllSubsets => s.subsets()?,
        SubsetPolicy::WindowsContainingX => s
            .subsets()?
            .into_iter()
            .filter(|sub| sub.contains(s.perturbation_site))
            .collect(),
    };
    let propagator = Propagator::new(&s.model.hamiltonian()?)?;
    let (traj1, traj2) = (propagator.trajectory(&psi1)?, propagator.trajectory(&psi2)?);
    s.time_grid
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let a = traj1.at(t)?;
            let b = if control { a.clone() } else { traj2.at(t)? };
            let set_a = sample_shadow_set(&a, shots, s.seeds.derive("shadow-psi1", k as u64), "psi1")?;
            let set_b = sample_shadow_set(&b, shots, s.seeds.derive("shadow-psi2", k as u64), "psi2")?;
            let mut best_shadow = f64::NEG_INFINITY;
            let mut best_exact = f64::NEG_INFINITY;
            for sub in &subsets {
                best_shadow = best_shadow.max(chi2_estimate(&set_a, &set_b, sub, &mom)?.chi2);
                best_exact = best_exact.max(metric_values(&[Metric::Chi2], &a, &b, sub)?[0]);
            }
            Ok(ShadowCurveRow {
                t,
                subsystem_size: s.subsystem_size,
                chi2_shadow: best_shadow,
                chi2_exact: best_exact,
            })
        })
        .collect()
}

/// Shadow-estimated and exact `chi2`, each maximized over the qualifying
/// subsets, with fresh shadow sets for both states at every time.
pub fn shadow_metric_curve(s: &ScrambleScenario) -> Result<Vec<ShadowCurveRow>> {
    shadow_curve(s, false)
}

/// Same pipeline with both shadow sets drawn from `|Psi_1(t)>`; the exact
/// column is then identically zero.
pub fn shadow_control_curve(s: &ScrambleScenario) -> Result<Vec<ShadowCurveRow>> {
    shadow_curve(s, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CageRow {
    pub t: f64,
    pub chi2_full: f64,
    pub chi2_cage: f64,
}

pub fn write_cage_csv<W: Write>(rows: &[CageRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,chi2_full,chi2_cage")?;
    for r in rows {
        writeln!(w, "{},{},{}", format_sig(r.t), format_sig(r.chi2_full), format_sig(r.chi2_cage))?;
    }
    Ok(())
}

/// `chi2` on a subsystem inside a short MBL segment ("cage"), computed in
/// the full chain and in the isolated segment with the same local fields.
///
/// The subsystem is the `L_A`-site window of the cage that contains the
/// perturbation site, as centered as the cage allows. With
/// `decouple_boundary`, both couplings on the two bonds joining the cage
/// to the rest of the chain are set to zero in the full chain.
pub fn mbl_cage_compare(cage_sites: &SiteSubset, s: &ScrambleScenario, decouple_boundary: bool) -> Result<Vec<CageRow>> {
    s.validate()?;
    let Model::Mbl { j_perp, j_z, disorder } = &s.model.model else {
        return invalid("cage comparison needs an MBL scenario");
    };
    let cage = cage_sites.indices();
    let (first, last) = (cage[0], cage[cage.len() - 1]);
    if last - first + 1 != cage.len() {
        return invalid(format!("cage sites {cage:?} are not contiguous"));
    }
    if last >= s.n_sites() {
        return invalid(format!("cage site {last} out of range for {} sites", s.n_sites()));
    }
    if !cage_sites.contains(s.perturbation_site) {
        return invalid(format!("cage {cage:?} does not contain perturbation site {}", s.perturbation_site));
    }
    if cage.len() < 2 {
        return invalid("cage needs at least two sites");
    }
    let la = s.subsystem_size;
    if la > cage.len() {
        return invalid(format!("subsystem size {la} exceeds cage size {}", cage.len()));
    }
    let window_start = (s.perturbation_site.saturating_sub((la - 1) / 2)).clamp(first, last + 1 - la);
    let window: Vec<usize> = (window_start..window_start + la).collect();

    let l = s.n_sites();
    let mut bonds = vec![(*j_perp, *j_z); l - 1];
    if decouple_boundary {
        if first > 0 {
            bonds[first - 1] = (0.0, 0.0);
        }
        if last + 1 < l {
            bonds[last] = (0.0, 0.0);
        }
    }
    let full_h = build_mbl_bonds(&bonds, &disorder.fields)?;
    let cage_fields = disorder.restrict(cage)?.fields;
    let cage_h = build_mbl_bonds(&vec![(*j_perp, *j_z); cage.len() - 1], &cage_fields)?;

    let (full1, full2) = prepare_ensemble(s)?;
    let bits = s.initial.bits(l);
    let cage1 = StateVector::basis_state(&bits[first..=last])?;
    let cage2 = apply_local_unitary(&cage1, s.perturbation_site - first, &sigma_x())?;

    let full_window = SiteSubset::new(&window, l)?;
    let cage_window = SiteSubset::new(&window.iter().map(|x| x - first).collect::<Vec<_>>(), cage.len())?;

    let pf = Propagator::new(&full_h)?;
    let pc = Propagator::new(&cage_h)?;
    let (f1, f2) = (pf.trajectory(&full1)?, pf.trajectory(&full2)?);
    let (c1, c2) = (pc.trajectory(&cage1)?, pc.trajectory(&cage2)?);
    s.time_grid
        .par_iter()
        .map(|&t| {
            let full = metric_values(&[Metric::Chi2], &f1.at(t)?, &f2.at(t)?, &full_window)?[0];
            let caged = metric_values(&[Metric::Chi2], &c1.at(t)?, &c2.at(t)?, &cage_window)?[0];
            Ok(CageRow { t, chi2_full: full, chi2_cage: caged })
        })
        .collect()
}
