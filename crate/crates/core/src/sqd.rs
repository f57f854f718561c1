//! Sample-based quantum diagonalization with self-consistent configuration
//! recovery.
//!
//! One iteration draws `K` batches of unique determinants from the pool
//! (weighted by observed frequency), diagonalizes each batch's merged-pool
//! subspace, takes orbital occupations from the lowest-energy batch and uses
//! them to repair the symmetry-violating samples. Repaired determinants not
//! seen before join the pool.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::determinant::low_bits;
use crate::qsci::qsci_energy;
use crate::rng::{derive_seed, stream_rng};
use crate::sampling::split_by_sector;
use crate::{Determinant, EmpiricalDistribution, Error, MolecularIntegrals, Result, Subspace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SqdConfig {
    pub n_batches: usize,
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Stop once the batch energies of an iteration span less than this and
    /// recovery found nothing new.
    pub tolerance: f64,
    pub seed: u64,
    /// Deal batches from one weighted ordering of the pool so they are
    /// disjoint whenever the pool holds at least `K·d` determinants.
    pub strict_disjoint: bool,
}

impl Default for SqdConfig {
    fn default() -> Self {
        Self {
            n_batches: 3,
            batch_size: 300,
            max_iterations: 5,
            tolerance: 1e-6,
            seed: 0,
            strict_disjoint: false,
        }
    }
}

impl SqdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_batches == 0 || self.batch_size == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "batches, batch size and iterations must be at least 1".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqdIteration {
    pub batch_energies: Vec<f64>,
    pub subspace_sizes: Vec<usize>,
    /// Invalid shots repaired in this iteration.
    pub n_recovered: usize,
    /// Repaired determinants that were new to the pool.
    pub n_new: usize,
    /// Pool size the batches were drawn from.
    pub pool_size: usize,
    /// Repairs that fell back to a uniform choice.
    pub uniform_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqdResult {
    /// Lowest batch energy over all iterations, core energy included.
    pub energy: f64,
    /// Size of the subspace that produced `energy`.
    pub subspace_size: usize,
    pub iterations: Vec<SqdIteration>,
    /// α occupations of orbitals `0..n`, then β.
    pub occupations: Vec<f64>,
    pub converged: bool,
}

impl SqdResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
}

/// Cross product over the merged pool U_α ∪ U_β, restricted per slot to the
/// strings with the right electron count.
pub fn sqd_subspace(u_alpha: &[u64], u_beta: &[u64], n_alpha: usize, n_beta: usize) -> Result<Subspace> {
    let merged: BTreeSet<u64> = u_alpha.iter().chain(u_beta).copied().collect();
    let alphas: Vec<u64> = merged
        .iter()
        .copied()
        .filter(|s| s.count_ones() as usize == n_alpha)
        .collect();
    let betas: Vec<u64> = merged
        .iter()
        .copied()
        .filter(|s| s.count_ones() as usize == n_beta)
        .collect();
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::Empty("merged spin pool"));
    }
    let mut dets = Vec::with_capacity(alphas.len() * betas.len());
    for &a in &alphas {
        for &b in &betas {
            dets.push(Determinant::new(a, b));
        }
    }
    Ok(Subspace::new(dets))
}

/// occ[σ·n + p] = Σ_i c_i² [p occupied in sector σ of determinant i].
pub fn average_occupations(coefficients: &[f64], s: &Subspace, n_orb: usize) -> Result<Vec<f64>> {
    if coefficients.len() != s.len() {
        return Err(Error::SizeMismatch {
            expected: s.len(),
            found: coefficients.len(),
        });
    }
    let mut occ = vec![0.0; 2 * n_orb];
    for (d, c) in s.iter().zip(coefficients) {
        let w = c * c;
        for p in 0..n_orb {
            if d.alpha >> p & 1 == 1 {
                occ[p] += w;
            }
            if d.beta >> p & 1 == 1 {
                occ[n_orb + p] += w;
            }
        }
    }
    Ok(occ)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// One valid determinant per input string, in input order.
    pub determinants: Vec<Determinant>,
    pub uniform_fallbacks: usize,
}

/// Picks a bit of `candidates` with probability ∝ weight; uniform when all
/// weights vanish (second value true).
fn pick_bit<R: Rng>(candidates: u64, weight: impl Fn(usize) -> f64, rng: &mut R) -> (usize, bool) {
    let bits: Vec<usize> = (0..64).filter(|&q| candidates >> q & 1 == 1).collect();
    let weights: Vec<f64> = bits.iter().map(|&q| weight(q).max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return (bits[rng.random_range(0..bits.len())], true);
    }
    let mut u = rng.random::<f64>() * total;
    for (q, w) in bits.iter().zip(&weights) {
        if u < *w {
            return (*q, false);
        }
        u -= w;
    }
    let last = weights.iter().rposition(|w| *w > 0.0).expect("positive total");
    (bits[last], false)
}

fn repair_sector<R: Rng>(
    mut s: u64,
    target: usize,
    n_orb: usize,
    occ: &[f64],
    rng: &mut R,
    fallbacks: &mut usize,
) -> u64 {
    let mask = low_bits(n_orb);
    while (s.count_ones() as usize) > target {
        let (q, fb) = pick_bit(s, |q| 1.0 - occ[q], rng);
        *fallbacks += fb as usize;
        s &= !(1 << q);
    }
    while (s.count_ones() as usize) < target {
        let (q, fb) = pick_bit(!s & mask, |q| occ[q], rng);
        *fallbacks += fb as usize;
        s |= 1 << q;
    }
    s
}

/// Repairs each bitstring (blocked α|β layout over `2·n_orb` qubits) sector
/// by sector: while a sector has too many electrons an occupied bit is
/// cleared with probability ∝ 1 − occ, while it has too few an empty bit is
/// set with probability ∝ occ. String `i` uses its own random stream.
pub fn recover_configurations(
    strings: &[u64],
    occ: &[f64],
    n_orb: usize,
    n_alpha: usize,
    n_beta: usize,
    seed: u64,
) -> Result<Recovery> {
    if occ.len() != 2 * n_orb {
        return Err(Error::SizeMismatch {
            expected: 2 * n_orb,
            found: occ.len(),
        });
    }
    if n_alpha > n_orb || n_beta > n_orb {
        return Err(Error::InvalidSector {
            n_orb,
            n_alpha,
            n_beta,
        });
    }
    let mask = low_bits(n_orb);
    let mut fallbacks = 0;
    let determinants = strings
        .iter()
        .enumerate()
        .map(|(i, &bits)| {
            let mut rng = stream_rng(seed, i as u64);
            let a = repair_sector(bits & mask, n_alpha, n_orb, &occ[..n_orb], &mut rng, &mut fallbacks);
            let b = repair_sector(
                bits >> n_orb & mask,
                n_beta,
                n_orb,
                &occ[n_orb..],
                &mut rng,
                &mut fallbacks,
            );
            Determinant::new(a, b)
        })
        .collect();
    Ok(Recovery {
        determinants,
        uniform_fallbacks: fallbacks,
    })
}

/// Up to `size` distinct pool entries, drawn without replacement with
/// probability ∝ weight (exponential-key method).
fn weighted_order(pool: &BTreeMap<Determinant, u64>, seed: u64) -> Vec<Determinant> {
    let mut rng = stream_rng(seed, 0);
    let mut keyed: Vec<(f64, Determinant)> = pool
        .iter()
        .map(|(d, &w)| {
            let u: f64 = rng.random::<f64>();
            // −ln(u)/w: smaller is earlier
            (-(1.0 - u).ln() / w as f64, *d)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, d)| d).collect()
}

fn draw_batches(pool: &BTreeMap<Determinant, u64>, cfg: &SqdConfig, iteration: usize) -> Vec<Vec<Determinant>> {
    let it_seed = derive_seed(cfg.seed, 0x5ad0 + iteration as u64);
    if pool.len() <= cfg.batch_size {
        let all: Vec<Determinant> = pool.keys().copied().collect();
        return vec![all; cfg.n_batches];
    }
    if cfg.strict_disjoint && pool.len() >= cfg.n_batches * cfg.batch_size {
        let order = weighted_order(pool, it_seed);
        return order
            .chunks(cfg.batch_size)
            .take(cfg.n_batches)
            .map(|c| c.to_vec())
            .collect();
    }
    (0..cfg.n_batches)
        .map(|k| {
            let mut order = weighted_order(pool, derive_seed(it_seed, k as u64));
            order.truncate(cfg.batch_size);
            order
        })
        .collect()
}

/// The batching, diagonalization and recovery loop.
pub fn sqd_run(d: &EmpiricalDistribution, ints: &MolecularIntegrals, cfg: &SqdConfig) -> Result<SqdResult> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::Empty("distribution"));
    }
    let (n, na, nb) = (ints.n_orbitals(), ints.n_alpha(), ints.n_beta());
    let (valid, invalid) = split_by_sector(d, n, na, nb)?;
    let mask = low_bits(n);
    let mut pool: BTreeMap<Determinant, u64> = valid
        .iter()
        .map(|(b, c)| (Determinant::new(b & mask, b >> n), c))
        .collect();
    let invalid_shots: Vec<u64> = invalid
        .iter()
        .flat_map(|(b, c)| std::iter::repeat_n(b, c as usize))
        .collect();

    let recover = |occ: &[f64], iteration: usize, pool: &mut BTreeMap<Determinant, u64>| -> Result<(usize, usize, usize)> {
        let rec = recover_configurations(
            &invalid_shots,
            occ,
            n,
            na,
            nb,
            derive_seed(cfg.seed, (iteration as u64).wrapping_add(0x7ec0)),
        )?;
        let mut n_new = 0;
        for det in &rec.determinants {
            let e = pool.entry(*det).or_insert(0);
            if *e == 0 {
                n_new += 1;
            }
            *e += 1;
        }
        Ok((rec.determinants.len(), n_new, rec.uniform_fallbacks))
    };

    let mut pending = (0, 0, 0);
    if pool.is_empty() {
        // No valid sample to learn occupations from: start from a uniform
        // filling.
        let mut occ = vec![na as f64 / n as f64; n];
        occ.extend(vec![nb as f64 / n as f64; n]);
        pending = recover(&occ, usize::MAX, &mut pool)?;
        if pool.is_empty() {
            return Err(Error::Empty("valid or recoverable configurations"));
        }
    }

    let mut iterations = Vec::new();
    let mut best = (f64::INFINITY, 0usize);
    let mut occupations = Vec::new();
    let mut converged = false;
    for it in 0..cfg.max_iterations {
        let pool_size = pool.len();
        let batches = draw_batches(&pool, cfg, it);
        let solved: Vec<(f64, usize, Vec<f64>)> = batches
            .par_iter()
            .map(|batch| -> Result<(f64, usize, Vec<f64>)> {
                let ua: Vec<u64> = batch.iter().map(|d| d.alpha).collect();
                let ub: Vec<u64> = batch.iter().map(|d| d.beta).collect();
                let s = sqd_subspace(&ua, &ub, na, nb)?;
                let r = qsci_energy(&s, ints)?;
                let occ = average_occupations(&r.coefficients, &r.subspace, n)?;
                Ok((r.energy, r.subspace_size, occ))
            })
            .collect::<Result<_>>()?;
        let lowest = solved
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .map(|(k, _)| k)
            .expect("at least one batch");
        if solved[lowest].0 < best.0 {
            best = (solved[lowest].0, solved[lowest].1);
        }
        occupations = solved[lowest].2.clone();
        let energies: Vec<f64> = solved.iter().map(|s| s.0).collect();
        let spread = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let (n_recovered, n_new, uniform_fallbacks) = if invalid_shots.is_empty() {
            (0, 0, 0)
        } else {
            recover(&occupations, it, &mut pool)?
        };
        let (n_recovered, n_new, uniform_fallbacks) = if it == 0 {
            (n_recovered + pending.0, n_new + pending.1, uniform_fallbacks + pending.2)
        } else {
            (n_recovered, n_new, uniform_fallbacks)
        };
        iterations.push(SqdIteration {
            batch_energies: energies,
            subspace_sizes: solved.iter().map(|s| s.1).collect(),
            n_recovered,
            n_new,
            pool_size,
            uniform_fallbacks,
        });
        if spread < cfg.tolerance && pool.len() == pool_size {
            converged = true;
            break;
        }
    }
    Ok(SqdResult {
        energy: best.0,
        subspace_size: best.1,
        iterations,
        occupations,
        converged,
    })
}
