//! Run configuration: command-line flags layered over an optional TOML file
//! layered over built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sqdkit::sqd::SqdConfig;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "sqdkit", version, about = "Sample-based quantum diagonalization toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Exact diagonalization in the full determinant space.
    Fci,
    /// Shot-based energy of the trial state with grouped measurements.
    Vqe,
    /// Quantum-selected CI from sampled bitstrings.
    Qsci,
    /// Sample-based quantum diagonalization with configuration recovery.
    Sqd,
    /// Sampling statistics: unique, valid and invalid bitstrings per budget.
    Sample,
    /// Coupon-collector shot estimates.
    Coupon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialState {
    /// Exact ground state.
    Fci,
    /// UCCSD state optimized by sequential sweeps.
    Vqe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Every field is optional so that unset flags fall through to the config
/// file and then to the defaults.
#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Flags {
    /// TOML file with any of the options below (kebab-case keys).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub fcidump: Option<PathBuf>,
    /// Shot budgets, comma separated. For `vqe` a budget of 0 means the exact
    /// expectation value.
    #[arg(long, global = true, value_delimiter = ',')]
    pub shots: Option<Vec<u64>>,
    /// Probability that a measured 0 reads as 1.
    #[arg(long, global = true)]
    pub noise_p01: Option<f64>,
    /// Probability that a measured 1 reads as 0.
    #[arg(long, global = true)]
    pub noise_p10: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub batches: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// SQD stopping tolerance on the spread of batch energies (Hartree).
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub trial_state: Option<TrialState>,
    #[arg(long, global = true)]
    pub vqe_sweeps: Option<usize>,
    /// VQE stops once a sweep lowers the energy by less than this.
    #[arg(long, global = true)]
    pub vqe_tolerance: Option<f64>,
    /// Category counts for `coupon`, comma separated.
    #[arg(long = "m", global = true, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub p_max: Option<f64>,
    /// Monte-Carlo trials for the coupon cross-check (0 disables it).
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

impl Flags {
    /// Fields set in `self` win over `other`.
    fn or(self, other: Flags) -> Flags {
        Flags {
            config: self.config.or(other.config),
            fcidump: self.fcidump.or(other.fcidump),
            shots: self.shots.or(other.shots),
            noise_p01: self.noise_p01.or(other.noise_p01),
            noise_p10: self.noise_p10.or(other.noise_p10),
            seed: self.seed.or(other.seed),
            batches: self.batches.or(other.batches),
            batch_size: self.batch_size.or(other.batch_size),
            tolerance: self.tolerance.or(other.tolerance),
            max_iter: self.max_iter.or(other.max_iter),
            trial_state: self.trial_state.or(other.trial_state),
            vqe_sweeps: self.vqe_sweeps.or(other.vqe_sweeps),
            vqe_tolerance: self.vqe_tolerance.or(other.vqe_tolerance),
            m: self.m.or(other.m),
            p_max: self.p_max.or(other.p_max),
            trials: self.trials.or(other.trials),
            out: self.out.or(other.out),
            format: self.format.or(other.format),
        }
    }
}

pub const DEFAULT_SHOTS: [u64; 5] = [100, 1_000, 10_000, 100_000, 1_000_000];
pub const DEFAULT_M_GRID: [usize; 5] = [10, 20, 30, 40, 50];
pub const DEFAULT_P_MAX: f64 = 0.972;
pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_VQE_SWEEPS: usize = 3;
pub const DEFAULT_VQE_TOLERANCE: f64 = 1e-4;

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip)]
    pub fcidump: Option<PathBuf>,
    pub shots: Vec<u64>,
    pub noise_p01: f64,
    pub noise_p10: f64,
    pub seed: u64,
    pub batches: usize,
    pub batch_size: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub trial_state: TrialState,
    pub vqe_sweeps: usize,
    pub vqe_tolerance: f64,
    pub m: Vec<usize>,
    pub p_max: f64,
    pub trials: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub format: Format,
}

impl RunConfig {
    /// Defaults for `command` with nothing overridden.
    pub fn new(command: Command) -> Self {
        Self::resolve(command, Flags::default()).expect("defaults are valid")
    }

    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let file = match &cli.flags.config {
            Some(path) => read_config_file(path)?,
            None => Flags::default(),
        };
        Self::resolve(cli.command, cli.flags.or(file))
    }

    fn resolve(command: Command, f: Flags) -> Result<Self, CliError> {
        let sqd = SqdConfig::default();
        let cfg = RunConfig {
            command,
            fcidump: f.fcidump,
            shots: f.shots.unwrap_or_else(|| DEFAULT_SHOTS.to_vec()),
            noise_p01: f.noise_p01.unwrap_or(0.0),
            noise_p10: f.noise_p10.unwrap_or(0.0),
            seed: f.seed.unwrap_or(0),
            batches: f.batches.unwrap_or(sqd.n_batches),
            batch_size: f.batch_size.unwrap_or(sqd.batch_size),
            tolerance: f.tolerance.unwrap_or(sqd.tolerance),
            max_iter: f.max_iter.unwrap_or(sqd.max_iterations),
            trial_state: f.trial_state.unwrap_or(TrialState::Fci),
            vqe_sweeps: f.vqe_sweeps.unwrap_or(DEFAULT_VQE_SWEEPS),
            vqe_tolerance: f.vqe_tolerance.unwrap_or(DEFAULT_VQE_TOLERANCE),
            m: f.m.unwrap_or_else(|| DEFAULT_M_GRID.to_vec()),
            p_max: f.p_max.unwrap_or(DEFAULT_P_MAX),
            trials: f.trials.unwrap_or(DEFAULT_TRIALS),
            out: f.out,
            format: f.format.unwrap_or(Format::Json),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Input(msg.to_string()));
        if self.shots.is_empty() {
            return bad("--shots needs at least one budget");
        }
        if self.command != Command::Vqe && self.shots.contains(&0) {
            return bad("shot budgets must be positive");
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return bad("--m needs positive category counts");
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return bad("--p-max must lie in (0, 1]");
        }
        if !(self.vqe_tolerance > 0.0) || self.vqe_sweeps == 0 {
            return bad("VQE needs a positive tolerance and at least one sweep");
        }
        sqdkit::NoiseModel::new(self.noise_p01, self.noise_p10).map_err(CliError::from)?;
        self.sqd_config().validate().map_err(CliError::from)?;
        Ok(())
    }

    pub fn sqd_config(&self) -> SqdConfig {
        SqdConfig {
            n_batches: self.batches,
            batch_size: self.batch_size,
            max_iterations: self.max_iter,
            tolerance: self.tolerance,
            seed: self.seed,
            strict_disjoint: false,
        }
    }

    pub fn noise(&self) -> Option<sqdkit::NoiseModel> {
        let n = sqdkit::NoiseModel::new(self.noise_p01, self.noise_p10).ok()?;
        (!n.is_noiseless()).then_some(n)
    }

    /// SHA-256 over the resolved settings and the FCIDUMP contents (not its
    /// path), so a record can be matched to the inputs that produced it.
    pub fn hash(&self, fcidump_text: Option<&str>) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("serializable"));
        if let Some(text) = fcidump_text {
            h.update(b"\0fcidump\0");
            h.update(text.as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn read_config_file(path: &Path) -> Result<Flags, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
