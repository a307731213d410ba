//! Configuration and dispatch for the `scramblescope` command-line tool.
//!
//! Settings come from an optional JSON file and from flags; flags win.
//! Every command writes its data files plus a `manifest.json` listing each
//! file with its SHA-256 digest. Identical settings produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scramblescope::cliffordverify::{
    clifford_convergence_experiment, summarize_convergence, write_convergence_csv, ConvergenceConfig,
    ConvergenceSummary, DEFAULT_CIRCUIT_DEPTH, DEFAULT_SAMPLE_COUNTS, DEFAULT_TRIALS,
};
use scramblescope::evolve::{uniform_grid, DEFAULT_STEPS, DEFAULT_T_MAX};
use scramblescope::identities::full_suite;
use scramblescope::models::{
    draw_disorder, ModelKind, ModelSpec, DEFAULT_DISORDER_SEED, DEFAULT_J, DEFAULT_MBL_W,
};
use scramblescope::qhilbert::SiteSubset;
use scramblescope::scramble::{
    default_perturbation_site, exact_metric_grid, format_sig, mbl_cage_compare, shadow_control_curve,
    shadow_metric_curve, write_cage_csv, write_shadow_curve_csv, InitialKind, Metric, ScrambleScenario,
    SeedBundle, SubsetPolicy, DEFAULT_SUBSET_CAP, LOG_BASE_NOTE,
};
use scramblescope::seed::GENERATOR_ID;
use scramblescope::shadows::DEFAULT_BATCHES;

pub const THREADS_ENV: &str = "SCRAMBLESCOPE_THREADS";
pub const MANIFEST_NAME: &str = "manifest.json";
pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_SHOTS: usize = 3000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Module(#[from] scramblescope::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Module(scramblescope::Error::InvalidArgument(_)) => "invalid_argument",
            CliError::Module(scramblescope::Error::Numeric(_)) => "numeric",
            CliError::Module(scramblescope::Error::Resource(_)) => "resource",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON object describing the failure.
    pub fn to_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string().replace('\n', " ") }).to_string()
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Exact metric grid over time and site.
    Grid,
    /// Shadow-estimated versus exact chi2, maximized over subsets.
    ShadowCurve,
    /// Convergence of chi2 estimated from sampled Clifford bases (PXP).
    CliffordVerify,
    /// MBL chain versus an isolated segment with the same fields.
    MblCage,
    /// Random-input checks of the Q2 identities, concavity and Haar moments.
    IdentitySuite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Grid => "grid",
            Command::ShadowCurve => "shadow-curve",
            Command::CliffordVerify => "clifford-verify",
            Command::MblCage => "mbl-cage",
            Command::IdentitySuite => "identity-suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArg {
    AllSubsets,
    WindowsContainingX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialArg {
    Polarized,
    Neel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Tfim,
    Mfim,
    Pxp,
    Mbl,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Tfim => ModelKind::Tfim,
            ModelArg::Mfim => ModelKind::Mfim,
            ModelArg::Pxp => ModelKind::Pxp,
            ModelArg::Mbl => ModelKind::Mbl,
        }
    }
}

/// Every setting, all optional, shared by the JSON file and the flags.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Spin-chain model
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelArg>,
    /// Number of sites L.
    #[arg(long, global = true)]
    pub length: Option<usize>,
    /// Subsystem size L_A.
    #[arg(long, global = true)]
    pub subsystem_size: Option<usize>,
    /// Perturbation site (0-indexed).
    #[arg(long, global = true)]
    pub site: Option<usize>,
    /// Measurement snapshots per state
    #[arg(long, global = true)]
    pub shots: Option<usize>,
    /// Median-of-means batch count.
    #[arg(long, global = true)]
    pub batches: Option<usize>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Final evolution time
    #[arg(long, global = true)]
    pub tmax: Option<f64>,
    /// Number of time points, including t = 0 and t = tmax.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output table format
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Which subsystems enter the max over subsets
    #[arg(long, global = true, value_enum)]
    pub policy: Option<PolicyArg>,
    /// Initial product state
    #[arg(long, global = true, value_enum)]
    pub initial: Option<InitialArg>,
    /// Comma-separated subset of chi2, holevo, chi_q.
    #[arg(long, global = true, value_delimiter = ',')]
    pub metrics: Option<Vec<Metric>>,
    /// Disorder strength W (MBL).
    #[arg(long, global = true)]
    pub disorder_strength: Option<f64>,
    /// Seed of the MBL field realization.
    #[arg(long, global = true)]
    pub disorder_seed: Option<u64>,
    /// Disorder realizations averaged by MBL grids.
    #[arg(long, global = true)]
    pub realizations: Option<usize>,
    /// Refuse runs that would evaluate more subsets than this
    #[arg(long, global = true)]
    pub subset_cap: Option<usize>,
    /// Cage sites for mbl-cage, comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub cage: Option<Vec<usize>>,
    /// Zero both couplings on the bonds joining the cage to the chain.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub decouple_boundary: Option<bool>,
    /// Also emit the identical-state shadow control curve.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub control: Option<bool>,
    /// Unitary counts for clifford-verify, comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub sample_counts: Option<Vec<usize>>,
    /// Independent trials per sample count
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Reuse one unitary draw per trial across times.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub reuse_unitaries: Option<bool>,
    /// First site of the two-site clifford-verify subsystem.
    #[arg(long, global = true)]
    pub pair_start: Option<usize>,
    /// Gate count of each random Clifford circuit
    #[arg(long, global = true)]
    pub circuit_depth: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Settings {
    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &Settings) -> Settings {
        overlay!(
            self, top, model, length, subsystem_size, site, shots, batches, seed, tmax, steps, out, format, policy,
            initial, metrics, disorder_strength, disorder_seed, realizations, subset_cap, cage, decouple_boundary,
            control, sample_counts, trials, reuse_unitaries, pair_start, circuit_depth
        );
        self
    }

    pub fn from_json(text: &str) -> Result<Settings, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }
}

#[derive(Debug, Parser)]
#[command(name = "scramblescope", version, about = "Quantum information scrambling experiments on spin chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON file with settings; flags override its values.
    #[arg(long, global = true, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CageOptions {
    pub sites: Vec<usize>,
    pub decouple_boundary: bool,
}

/// Fully resolved run description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub scenario: Option<ScrambleScenario>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub format: Format,
    pub control: bool,
    pub cage: Option<CageOptions>,
    pub convergence: Option<ConvergenceConfig>,
}

fn require<T: Clone>(value: &Option<T>, field: &str, command: Command) -> Result<T, CliError> {
    value
        .clone()
        .ok_or_else(|| CliError::Usage(format!("missing required field '{field}' for {}", command.name())))
}

fn build_scenario(command: Command, s: &Settings, master_seed: u64) -> Result<ScrambleScenario, CliError> {
    let kind: ModelKind = require(&s.model, "model", command)?.into();
    let length = require(&s.length, "length", command)?;
    let la = require(&s.subsystem_size, "subsystem_size", command)?;
    if length == 0 {
        return usage("length must be positive");
    }
    if la == 0 || la > length {
        return usage(format!("subsystem_size {la} must be in 1..={length}"));
    }
    if kind != ModelKind::Mbl && (s.disorder_strength.is_some() || s.disorder_seed.is_some()) {
        return usage("disorder settings apply to the mbl model only");
    }
    let model = match kind {
        ModelKind::Mbl => {
            let w = s.disorder_strength.unwrap_or(DEFAULT_MBL_W);
            let fields = draw_disorder(length, w, s.disorder_seed.unwrap_or(DEFAULT_DISORDER_SEED))?;
            ModelSpec::mbl_with(length, DEFAULT_J, DEFAULT_J, fields)?
        }
        other => ModelSpec::defaults(other, length)?,
    };
    let mut scenario = ScrambleScenario::new(model, la, master_seed)?;
    if let Some(initial) = s.initial {
        scenario.initial = match initial {
            InitialArg::Polarized => InitialKind::Polarized,
            InitialArg::Neel => InitialKind::Neel,
        };
        scenario.perturbation_site = default_perturbation_site(kind, scenario.initial, length);
    }
    if let Some(site) = s.site {
        scenario.perturbation_site = site;
    }
    if let Some(policy) = s.policy {
        scenario.subset_policy = match policy {
            PolicyArg::AllSubsets => SubsetPolicy::AllSubsets,
            PolicyArg::WindowsContainingX => SubsetPolicy::WindowsContainingX,
        };
    } else if command == Command::ShadowCurve {
        scenario.subset_policy = SubsetPolicy::AllSubsets;
    }
    if let Some(metrics) = &s.metrics {
        let mut m = metrics.clone();
        m.sort();
        m.dedup();
        scenario.metrics = m;
    }
    scenario.time_grid = uniform_grid(s.tmax.unwrap_or(DEFAULT_T_MAX), s.steps.unwrap_or(DEFAULT_STEPS))?;
    scenario.batches = s.batches.unwrap_or(DEFAULT_BATCHES);
    scenario.shots = match command {
        Command::ShadowCurve => Some(s.shots.unwrap_or(DEFAULT_SHOTS)),
        _ => s.shots,
    };
    scenario.subset_cap = s.subset_cap.unwrap_or(DEFAULT_SUBSET_CAP);
    scenario.realizations = s.realizations.unwrap_or(1);
    scenario.seeds = SeedBundle { master: master_seed };
    scenario.validate()?;
    Ok(scenario)
}

fn default_cage(scenario: &ScrambleScenario) -> Vec<usize> {
    let l = scenario.n_sites();
    let start = scenario.perturbation_site.saturating_sub(1).min(l.saturating_sub(3));
    (start..(start + 3).min(l)).collect()
}

/// Resolves file and flag settings into a validated run description.
pub fn resolve(command: Command, settings: &Settings) -> Result<RunConfig, CliError> {
    let master_seed = require(&settings.seed, "seed", command)?;
    let scenario = match command {
        Command::IdentitySuite => None,
        _ => Some(build_scenario(command, settings, master_seed)?),
    };
    let cage = match (command, &scenario) {
        (Command::MblCage, Some(s)) => Some(CageOptions {
            sites: settings.cage.clone().unwrap_or_else(|| default_cage(s)),
            decouple_boundary: settings.decouple_boundary.unwrap_or(false),
        }),
        _ => None,
    };
    let convergence = (command == Command::CliffordVerify).then(|| ConvergenceConfig {
        sample_counts: settings.sample_counts.clone().unwrap_or_else(|| DEFAULT_SAMPLE_COUNTS.to_vec()),
        n_trials: settings.trials.unwrap_or(DEFAULT_TRIALS),
        reuse_unitaries: settings.reuse_unitaries.unwrap_or(false),
        pair_start: settings.pair_start,
        circuit_depth: settings.circuit_depth.unwrap_or(DEFAULT_CIRCUIT_DEPTH),
    });
    Ok(RunConfig {
        command,
        scenario,
        output_dir: settings.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        master_seed,
        format: settings.format.unwrap_or_default(),
        control: settings.control.unwrap_or(false),
        cage,
        convergence,
    })
}

/// Parses command-line arguments (including the program name), reading
/// the `--config` file if given.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string().trim().replace('\n', " ")))?;
    let base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            Settings::from_json(&text)?
        }
        None => Settings::default(),
    };
    resolve(cli.command, &base.overlay(&cli.settings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest<'a> {
    pub command: &'static str,
    pub code_version: &'static str,
    pub generator_id: &'static str,
    pub seed_derivation: &'static str,
    pub log_base: &'static str,
    pub master_seed: u64,
    pub config: &'a RunConfig,
    pub files: Vec<FileEntry>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), CliError> {
        fs::write(self.dir.join(name), &bytes)?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        self.write(name, bytes)
    }
}

fn summary_csv(rows: &[ConvergenceSummary]) -> Vec<u8> {
    let mut out = String::from("t,L_A,N,mean_chi2,std_chi2,chi2_exact\n");
    for r in rows {
        out += &format!(
            "{},{},{},{},{},{}\n",
            format_sig(r.t),
            r.subsystem_size,
            r.n_samples,
            format_sig(r.mean),
            format_sig(r.std),
            format_sig(r.chi2_exact)
        );
    }
    out.into_bytes()
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs the command and returns the manifest entries of the files written.
pub fn run(config: &RunConfig) -> Result<Vec<FileEntry>, CliError> {
    fs::create_dir_all(&config.output_dir)?;
    let mut out = Outputs { dir: config.output_dir.clone(), files: Vec::new() };
    let scenario = || {
        config
            .scenario
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{} needs a scenario", config.command.name())))
    };
    match config.command {
        Command::Grid => {
            let grid = exact_metric_grid(scenario()?)?;
            match config.format {
                Format::Csv => out.write("grid.csv", csv_bytes(|b| grid.write_csv(b))?)?,
                Format::Json => out.write_json("grid.json", &grid)?,
            }
        }
        Command::ShadowCurve => {
            let s = scenario()?;
            let rows = shadow_metric_curve(s)?;
            let control = if config.control { Some(shadow_control_curve(s)?) } else { None };
            match config.format {
                Format::Csv => {
                    out.write("shadow_curve.csv", csv_bytes(|b| write_shadow_curve_csv(&rows, b))?)?;
                    if let Some(c) = &control {
                        out.write("shadow_control.csv", csv_bytes(|b| write_shadow_curve_csv(c, b))?)?;
                    }
                }
                Format::Json => {
                    out.write_json("shadow_curve.json", &rows)?;
                    if let Some(c) = &control {
                        out.write_json("shadow_control.json", c)?;
                    }
                }
            }
        }
        Command::CliffordVerify => {
            let cfg = config.convergence.clone().unwrap_or_default();
            let rows = clifford_convergence_experiment(scenario()?, &cfg)?;
            let summary = summarize_convergence(&rows);
            match config.format {
                Format::Csv => {
                    out.write("clifford_convergence.csv", csv_bytes(|b| write_convergence_csv(&rows, b))?)?;
                    out.write("clifford_summary.csv", summary_csv(&summary))?;
                }
                Format::Json => {
                    out.write_json("clifford_convergence.json", &rows)?;
                    out.write_json("clifford_summary.json", &summary)?;
                }
            }
        }
        Command::MblCage => {
            let s = scenario()?;
            let cage = config.cage.as_ref().ok_or_else(|| CliError::Usage("mbl-cage needs cage sites".into()))?;
            let sites = SiteSubset::new(&cage.sites, s.n_sites())?;
            let rows = mbl_cage_compare(&sites, s, cage.decouple_boundary)?;
            match config.format {
                Format::Csv => out.write("mbl_cage.csv", csv_bytes(|b| write_cage_csv(&rows, b))?)?,
                Format::Json => out.write_json("mbl_cage.json", &rows)?,
            }
        }
        Command::IdentitySuite => {
            let outcomes = full_suite(config.master_seed)?;
            let all_passed = outcomes.iter().all(|o| o.passed);
            out.write_json("identity_suite.json", &serde_json::json!({ "passed": all_passed, "suites": outcomes }))?;
        }
    }
    let files = out.files.clone();
    let manifest = Manifest {
        command: config.command.name(),
        code_version: env!("CARGO_PKG_VERSION"),
        generator_id: GENERATOR_ID,
        seed_derivation: "substream seed = splitmix64 mix of (master_seed, FNV-1a(purpose), index)",
        log_base: LOG_BASE_NOTE,
        master_seed: config.master_seed,
        config,
        files: files.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    fs::write(config.output_dir.join(MANIFEST_NAME), bytes)?;
    Ok(files)
}

/// Applies the worker-count cap from the environment, if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))
}

/// Reads and hashes a file listed in a manifest.
pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}
