//! The subcommands. Each returns its records and whether every iterative
//! solver involved converged.

use serde::Serialize;
use sqdkit::coupon::{
    expected_shots_exact, expected_shots_integral, expected_shots_lower_bound, expected_shots_uniform,
    simulate_discovery, AmplitudeDistribution, EXACT_MAX_M,
};
use sqdkit::determinant::project_hamiltonian;
use sqdkit::fcidump::parse_fcidump;
use sqdkit::pauli::{build_qubit_hamiltonian, qubitwise_commuting_groups, DEFAULT_CUTOFF};
use sqdkit::qsci::qsci_from_distribution;
use sqdkit::sampling::{sample_bitstrings, split_by_sector};
use sqdkit::sqd::sqd_run;
use sqdkit::statevector::{
    estimate_energy_by_sampling, fci_ground_state, uccsd_excitations, vqe_optimize, CompiledHamiltonian,
    FciGroundState, VqeOptions,
};
use sqdkit::{Determinant, Error, MolecularIntegrals, QubitHamiltonian, StateVector, Subspace};

use crate::config::{Command, RunConfig, TrialState};
use crate::CliError;

/// Bitstrings with a smaller Born probability are left out of the coupon
/// distribution of a state.
pub const STATE_PROBABILITY_THRESHOLD: f64 = 1e-14;
/// Monte-Carlo cross-checks are only run up to this many categories.
pub const MC_MAX_M: usize = 30;

/// Fields shared by every record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub version: &'static str,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FciReport {
    pub fci_energy: f64,
    pub hf_energy: f64,
    pub space_dimension: usize,
    pub hf_weight: f64,
    pub n_orbitals: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub method: &'static str,
    pub shots: u64,
    /// `None` when the samples held no valid determinant.
    pub energy: Option<f64>,
    pub abs_error: Option<f64>,
    /// Statistical error of the grouped VQE estimate.
    pub stderr: Option<f64>,
    pub subspace_size: Option<usize>,
    /// Unique bitstrings observed.
    pub n_discovered: Option<usize>,
    /// Unique bitstrings in the right particle-number sector.
    pub n_valid: Option<usize>,
    pub sqd_iterations: Option<usize>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub shots: u64,
    pub n_unique: usize,
    pub n_valid: usize,
    pub n_invalid: usize,
    /// Fraction of shots that landed in the right sector.
    pub valid_fraction: f64,
    pub hf_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouponRecord {
    pub m: usize,
    pub p_max: f64,
    /// Expected shots for the most spread-out distribution with this p_max.
    pub lower_bound: f64,
    /// Expected shots of the distribution itself by quadrature.
    pub integral: f64,
    /// m·H_m.
    pub uniform: f64,
    /// Inclusion–exclusion value, for small m.
    pub exact: Option<f64>,
    pub mc_mean: Option<f64>,
    pub mc_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Body {
    Fci(FciReport),
    Estimate(EstimateRecord),
    Sample(SampleRecord),
    Coupon(CouponRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    #[serde(flatten)]
    pub body: Body,
    #[serde(flatten)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub records: Vec<Record>,
    pub converged: bool,
}

struct Inputs {
    ints: MolecularIntegrals,
    text: String,
}

fn load(cfg: &RunConfig) -> Result<Inputs, CliError> {
    let path = cfg
        .fcidump
        .as_ref()
        .ok_or_else(|| CliError::Input("--fcidump is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let ints = parse_fcidump(&text)?;
    Ok(Inputs { ints, text })
}

/// Runs the configured subcommand.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let inputs = match (cfg.command, &cfg.fcidump) {
        (Command::Coupon, None) => None,
        _ => Some(load(cfg)?),
    };
    let provenance = Provenance {
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(inputs.as_ref().map(|i| i.text.as_str())),
    };
    let (bodies, converged) = match (cfg.command, inputs) {
        (Command::Coupon, inputs) => (cmd_coupon(cfg, inputs.as_ref().map(|i| &i.ints))?, true),
        (Command::Fci, Some(i)) => {
            let r = cmd_fci(&i.ints)?;
            (vec![Body::Fci(r)], true)
        }
        (Command::Sample, Some(i)) => (cmd_sample(cfg, &i.ints)?, true),
        (_, Some(i)) => {
            let records = cmd_estimate(cfg, &i.ints)?;
            let ok = records.iter().all(|r| r.converged);
            (records.into_iter().map(Body::Estimate).collect(), ok)
        }
        (_, None) => unreachable!("inputs are loaded for every command but coupon"),
    };
    let records = bodies
        .into_iter()
        .map(|body| Record {
            body,
            provenance: provenance.clone(),
        })
        .collect();
    Ok(Outcome { records, converged })
}

fn hf_determinant(ints: &MolecularIntegrals) -> Determinant {
    Determinant::hartree_fock(ints.n_alpha(), ints.n_beta())
}

fn hf_energy(ints: &MolecularIntegrals) -> Result<f64, Error> {
    let s = Subspace::new(vec![hf_determinant(ints)]);
    Ok(project_hamiltonian(&s, ints)?.diagonal()[0] + ints.core_energy())
}

pub fn cmd_fci(ints: &MolecularIntegrals) -> Result<FciReport, CliError> {
    let g = fci_ground_state(ints)?;
    let hf = g.space.position(&hf_determinant(ints)).expect("HF is in the full space");
    Ok(FciReport {
        fci_energy: g.energy,
        hf_energy: hf_energy(ints)?,
        space_dimension: g.space.len(),
        hf_weight: g.coefficients[hf].powi(2),
        n_orbitals: ints.n_orbitals(),
        n_alpha: ints.n_alpha(),
        n_beta: ints.n_beta(),
    })
}

/// State the samples are drawn from, with the ground state for reference.
pub struct Trial {
    pub ground: FciGroundState,
    pub state: StateVector,
    pub hamiltonian: Option<QubitHamiltonian>,
    pub converged: bool,
}

pub fn prepare_trial(cfg: &RunConfig, ints: &MolecularIntegrals) -> Result<Trial, CliError> {
    let ground = fci_ground_state(ints)?;
    let needs_h = cfg.command == Command::Vqe || cfg.trial_state == TrialState::Vqe;
    let hamiltonian = if needs_h {
        Some(build_qubit_hamiltonian(ints, DEFAULT_CUTOFF)?)
    } else {
        None
    };
    let (state, converged) = match cfg.trial_state {
        TrialState::Fci => (ground.state.clone(), true),
        TrialState::Vqe => {
            let h = hamiltonian.as_ref().expect("built above");
            let n = ints.n_orbitals();
            let mut ansatz = uccsd_excitations(n, ints.n_alpha(), ints.n_beta())?;
            let reference = StateVector::basis(2 * n, hf_determinant(ints).index(n))?;
            let opts = VqeOptions {
                max_sweeps: cfg.vqe_sweeps,
                tol: cfg.vqe_tolerance,
            };
            let r = vqe_optimize(h, &ansatz, &reference, &opts)?;
            ansatz.params = r.params;
            let mut s = reference;
            ansatz.apply(&mut s)?;
            (s, r.converged)
        }
    };
    Ok(Trial {
        ground,
        state,
        hamiltonian,
        converged,
    })
}

pub fn cmd_estimate(cfg: &RunConfig, ints: &MolecularIntegrals) -> Result<Vec<EstimateRecord>, CliError> {
    let trial = prepare_trial(cfg, ints)?;
    let exact = trial.ground.energy;
    let noise = cfg.noise();
    let (n, na, nb) = (ints.n_orbitals(), ints.n_alpha(), ints.n_beta());
    let mut out = Vec::with_capacity(cfg.shots.len());
    for &shots in &cfg.shots {
        let mut rec = EstimateRecord {
            method: "",
            shots,
            energy: None,
            abs_error: None,
            stderr: None,
            subspace_size: None,
            n_discovered: None,
            n_valid: None,
            sqd_iterations: None,
            converged: trial.converged,
        };
        match cfg.command {
            Command::Vqe => {
                rec.method = "vqe";
                let h = trial.hamiltonian.as_ref().expect("built for vqe");
                let (e, se) = if shots == 0 {
                    (CompiledHamiltonian::new(h)?.expectation(&trial.state)?, 0.0)
                } else {
                    let groups = qubitwise_commuting_groups(h);
                    let per_group = (shots as usize / groups.len()).max(1);
                    let r = estimate_energy_by_sampling(&trial.state, h, &groups, per_group, noise.as_ref(), cfg.seed)?;
                    (r.energy, r.stderr)
                };
                rec.energy = Some(e);
                rec.stderr = Some(se);
            }
            Command::Qsci | Command::Sqd => {
                let d = sample_bitstrings(&trial.state, shots as usize, noise.as_ref(), cfg.seed)?;
                let (valid, _) = split_by_sector(&d, n, na, nb)?;
                rec.n_discovered = Some(d.n_unique());
                rec.n_valid = Some(valid.n_unique());
                if cfg.command == Command::Qsci {
                    rec.method = "qsci";
                    match qsci_from_distribution(&d, ints) {
                        Ok(r) => {
                            rec.energy = Some(r.energy);
                            rec.subspace_size = Some(r.subspace_size);
                        }
                        Err(Error::Empty(_)) => rec.converged = false,
                        Err(e) => return Err(e.into()),
                    }
                } else {
                    rec.method = "sqd";
                    let r = sqd_run(&d, ints, &cfg.sqd_config())?;
                    rec.energy = Some(r.energy);
                    rec.subspace_size = Some(r.subspace_size);
                    rec.sqd_iterations = Some(r.iterations.len());
                    rec.converged &= r.converged;
                }
            }
            _ => unreachable!("not an estimate command"),
        }
        rec.abs_error = rec.energy.map(|e| (e - exact).abs());
        out.push(rec);
    }
    Ok(out)
}

fn cmd_sample(cfg: &RunConfig, ints: &MolecularIntegrals) -> Result<Vec<Body>, CliError> {
    let trial = prepare_trial(cfg, ints)?;
    let noise = cfg.noise();
    let hf = hf_determinant(ints).index(ints.n_orbitals());
    cfg.shots
        .iter()
        .map(|&shots| {
            let d = sample_bitstrings(&trial.state, shots as usize, noise.as_ref(), cfg.seed)?;
            let (valid, invalid) = split_by_sector(&d, ints.n_orbitals(), ints.n_alpha(), ints.n_beta())?;
            Ok(Body::Sample(SampleRecord {
                shots,
                n_unique: d.n_unique(),
                n_valid: valid.n_unique(),
                n_invalid: invalid.n_unique(),
                valid_fraction: valid.total() as f64 / d.total() as f64,
                hf_frequency: d.frequency(hf),
            }))
        })
        .collect()
}

fn coupon_row(p: &AmplitudeDistribution, cfg: &RunConfig) -> Result<CouponRecord, CliError> {
    let m = p.len();
    let mc = if cfg.trials > 0 && m <= MC_MAX_M {
        Some(simulate_discovery(p, cfg.trials, cfg.seed)?)
    } else {
        None
    };
    Ok(CouponRecord {
        m,
        p_max: p.p_max(),
        lower_bound: expected_shots_lower_bound(p)?,
        integral: expected_shots_integral(p)?,
        uniform: expected_shots_uniform(m),
        exact: if m <= EXACT_MAX_M { Some(expected_shots_exact(p)?) } else { None },
        mc_mean: mc.as_ref().map(|s| s.mean),
        mc_stderr: mc.as_ref().map(|s| s.stderr),
    })
}

/// One row per grid point, or a single row for the ground state of the
/// FCIDUMP system when one is given.
pub fn cmd_coupon(cfg: &RunConfig, ints: Option<&MolecularIntegrals>) -> Result<Vec<Body>, CliError> {
    if let Some(ints) = ints {
        let trial = prepare_trial(cfg, ints)?;
        let p = AmplitudeDistribution::from_state(&trial.state, STATE_PROBABILITY_THRESHOLD)?;
        return Ok(vec![Body::Coupon(coupon_row(&p, cfg)?)]);
    }
    cfg.m
        .iter()
        .map(|&m| {
            let p = AmplitudeDistribution::skewed(m, cfg.p_max)?;
            Ok(Body::Coupon(coupon_row(&p, cfg)?))
        })
        .collect()
}
