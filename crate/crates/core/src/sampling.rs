//! Computational-basis sampling, readout noise and symmetry post-selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::determinant::{index_to_bitstring, bitstring_to_index, low_bits};
use crate::rng::stream_rng;
use crate::{Error, Result, StateVector};

/// Shots drawn from one RNG stream. Fixed so that results do not depend on
/// the number of worker threads.
pub const SHOTS_PER_STREAM: usize = 8192;

/// Independent per-qubit readout flips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Probability that a true 0 reads as 1.
    pub p01: f64,
    /// Probability that a true 1 reads as 0.
    pub p10: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            p01: 0.01,
            p10: 0.01,
        }
    }
}

impl NoiseModel {
    pub fn new(p01: f64, p10: f64) -> Result<Self> {
        for p in [p01, p10] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "readout probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(Self { p01, p10 })
    }

    pub fn symmetric(p: f64) -> Result<Self> {
        Self::new(p, p)
    }

    pub fn is_noiseless(&self) -> bool {
        self.p01 == 0.0 && self.p10 == 0.0
    }

    /// Passes `bits` through the readout channel. Draws one uniform per qubit.
    pub fn apply<R: Rng + ?Sized>(&self, bits: u64, n_qubits: usize, rng: &mut R) -> u64 {
        let mut out = bits;
        for q in 0..n_qubits {
            let one = bits >> q & 1 == 1;
            let p = if one { self.p10 } else { self.p01 };
            if rng.random::<f64>() < p {
                out ^= 1 << q;
            }
        }
        out
    }
}

/// Counts of observed bitstrings.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EmpiricalDistribution {
    n_qubits: usize,
    counts: BTreeMap<u64, u64>,
    total: u64,
}

#[derive(Serialize, Deserialize)]
struct DistributionRecord {
    n_qubits: usize,
    total: u64,
    counts: BTreeMap<String, u64>,
}

impl EmpiricalDistribution {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn from_shots(n_qubits: usize, shots: &[u64]) -> Self {
        let mut d = Self::new(n_qubits);
        for &s in shots {
            d.add(s, 1);
        }
        d
    }

    pub fn from_counts(n_qubits: usize, counts: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut d = Self::new(n_qubits);
        let mask = low_bits(n_qubits);
        for (b, c) in counts {
            if b & !mask != 0 {
                return Err(Error::OutOfRange {
                    index: b as usize,
                    limit: 1 << n_qubits.min(63),
                });
            }
            d.add(b, c);
        }
        Ok(d)
    }

    pub fn add(&mut self, bits: u64, count: u64) {
        if count > 0 {
            *self.counts.entry(bits).or_default() += count;
            self.total += count;
        }
    }

    pub fn merge(&mut self, other: &EmpiricalDistribution) {
        for (&b, &c) in &other.counts {
            self.add(b, c);
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_unique(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, bits: u64) -> u64 {
        self.counts.get(&bits).copied().unwrap_or(0)
    }

    pub fn frequency(&self, bits: u64) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(bits) as f64 / self.total as f64
        }
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&b, &c)| (b, c))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rec = DistributionRecord {
            n_qubits: self.n_qubits,
            total: self.total,
            counts: self
                .counts
                .iter()
                .map(|(&b, &c)| (index_to_bitstring(b, self.n_qubits), c))
                .collect(),
        };
        serde_json::to_value(rec).expect("serializable")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let rec: DistributionRecord = serde_json::from_value(v.clone())
            .map_err(|e| Error::InvalidArgument(format!("bad distribution JSON: {e}")))?;
        let mut counts = Vec::with_capacity(rec.counts.len());
        for (s, c) in rec.counts {
            if s.len() != rec.n_qubits {
                return Err(Error::SizeMismatch {
                    expected: rec.n_qubits,
                    found: s.len(),
                });
            }
            counts.push((bitstring_to_index(&s)?, c));
        }
        let d = Self::from_counts(rec.n_qubits, counts)?;
        if d.total != rec.total {
            return Err(Error::InvalidArgument(format!(
                "total {} does not match counts {}",
                rec.total, d.total
            )));
        }
        Ok(d)
    }
}

/// Draws `n_shots` indices from the probability vector `probs` (need not be
/// normalized) by inverse CDF, passing each through `noise`. Shot `k` always
/// comes from stream `k / SHOTS_PER_STREAM`, so a shorter run is a prefix of a
/// longer one under the same seed.
pub fn sample_indices(
    probs: &[f64],
    n_qubits: usize,
    n_shots: usize,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<Vec<u64>> {
    if n_shots == 0 {
        return Err(Error::InvalidArgument("need at least one shot".into()));
    }
    if probs.is_empty() {
        return Err(Error::Empty("probability vector"));
    }
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p.max(0.0);
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidArgument("probabilities sum to zero".into()));
    }
    let noise = noise.filter(|n| !n.is_noiseless());
    let last = probs.len() - 1;
    let n_streams = n_shots.div_ceil(SHOTS_PER_STREAM);
    let chunks: Vec<Vec<u64>> = (0..n_streams)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let len = SHOTS_PER_STREAM.min(n_shots - k * SHOTS_PER_STREAM);
            (0..len)
                .map(|_| {
                    let u = rng.random::<f64>() * acc;
                    let i = cdf.partition_point(|&c| c <= u).min(last) as u64;
                    match noise {
                        Some(n) => n.apply(i, n_qubits, &mut rng),
                        None => i,
                    }
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Ordered list of measured bitstrings from `s`.
pub fn sample_shots(
    s: &StateVector,
    n_shots: usize,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<Vec<u64>> {
    sample_indices(&s.probabilities(), s.n_qubits(), n_shots, noise, seed)
}

/// Measures `s` in the computational basis `n_shots` times.
pub fn sample_bitstrings(
    s: &StateVector,
    n_shots: usize,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<EmpiricalDistribution> {
    let shots = sample_shots(s, n_shots, noise, seed)?;
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for b in shots {
        *counts.entry(b).or_default() += 1;
    }
    EmpiricalDistribution::from_counts(s.n_qubits(), counts)
}

fn check_qubits(d: &EmpiricalDistribution, n_orb: usize) -> Result<()> {
    if d.n_qubits() != 2 * n_orb {
        return Err(Error::SizeMismatch {
            expected: 2 * n_orb,
            found: d.n_qubits(),
        });
    }
    Ok(())
}

fn in_sector(bits: u64, n_orb: usize, n_alpha: usize, n_beta: usize) -> bool {
    let mask = low_bits(n_orb);
    (bits & mask).count_ones() as usize == n_alpha && (bits >> n_orb).count_ones() as usize == n_beta
}

/// Splits a distribution into the part in the (n_alpha, n_beta) sector and the
/// rest.
pub fn split_by_sector(
    d: &EmpiricalDistribution,
    n_orb: usize,
    n_alpha: usize,
    n_beta: usize,
) -> Result<(EmpiricalDistribution, EmpiricalDistribution)> {
    check_qubits(d, n_orb)?;
    let mut valid = EmpiricalDistribution::new(d.n_qubits());
    let mut invalid = EmpiricalDistribution::new(d.n_qubits());
    for (b, c) in d.iter() {
        if in_sector(b, n_orb, n_alpha, n_beta) {
            valid.add(b, c);
        } else {
            invalid.add(b, c);
        }
    }
    Ok((valid, invalid))
}

/// Keeps bitstrings with the right α and β popcounts; returns them and the
/// number of discarded shots.
pub fn symmetry_filter(
    d: &EmpiricalDistribution,
    n_orb: usize,
    n_alpha: usize,
    n_beta: usize,
) -> Result<(EmpiricalDistribution, u64)> {
    let (valid, invalid) = split_by_sector(d, n_orb, n_alpha, n_beta)?;
    Ok((valid, invalid.total()))
}

/// Unique α and β halves of the valid bitstrings, sorted.
pub fn spin_pools(
    d: &EmpiricalDistribution,
    n_orb: usize,
    n_alpha: usize,
    n_beta: usize,
) -> Result<(Vec<u64>, Vec<u64>)> {
    check_qubits(d, n_orb)?;
    let mask = low_bits(n_orb);
    let mut ua = BTreeSet::new();
    let mut ub = BTreeSet::new();
    for (b, _) in d.iter() {
        if in_sector(b, n_orb, n_alpha, n_beta) {
            ua.insert(b & mask);
            ub.insert(b >> n_orb);
        }
    }
    Ok((ua.into_iter().collect(), ub.into_iter().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::determinant::combinations;
    use num_complex::Complex64;
    use rand::Rng;
    use proptest::prelude::*;

    fn bits(s: &str) -> u64 {
        bitstring_to_index(s).unwrap()
    }

    #[test]
    fn basis_state_is_deterministic() {
        let s = StateVector::basis(4, 0b0110).unwrap();
        let d = sample_bitstrings(&s, 1000, None, 3).unwrap();
        assert_eq!(d.total(), 1000);
        assert_eq!(d.count(0b0110), 1000);
    }

    #[test]
    fn uniform_chi_square() {
        let amp = Complex64::new(0.5, 0.0);
        let s = StateVector::new(2, vec![amp; 4]).unwrap();
        let d = sample_bitstrings(&s, 100_000, None, 11).unwrap();
        let e = 25_000.0;
        let chi2: f64 = (0..4)
            .map(|b| (d.count(b) as f64 - e).powi(2) / e)
            .sum();
        // chi-square critical value, 3 dof, alpha = 0.01
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }

    #[test]
    fn noise_flips_at_requested_rate() {
        let s = StateVector::basis(8, 0b1111_0000).unwrap();
        let noise = NoiseModel::new(0.05, 0.2).unwrap();
        let shots = sample_shots(&s, 50_000, Some(&noise), 5).unwrap();
        let (mut up, mut down) = (0u64, 0u64);
        for b in shots {
            up += (b & 0x0f).count_ones() as u64;
            down += (!b & 0xf0).count_ones() as u64;
        }
        let n = 50_000.0 * 4.0;
        assert!((up as f64 / n - 0.05).abs() < 0.003);
        assert!((down as f64 / n - 0.2).abs() < 0.005);
        assert!(NoiseModel::new(1.5, 0.0).is_err());
    }

    #[test]
    fn filter_and_pools() {
        let d = EmpiricalDistribution::from_shots(4, &[bits("1001"), bits("1010"), bits("1110")]);
        let (valid, n_invalid) = symmetry_filter(&d, 2, 1, 1).unwrap();
        assert_eq!(valid.n_unique(), 2);
        assert_eq!(n_invalid, 1);
        let (ua, ub) = spin_pools(&d, 2, 1, 1).unwrap();
        assert_eq!(ua, vec![bits("10")]);
        let mut expected = vec![bits("10"), bits("01")];
        expected.sort();
        assert_eq!(ub, expected);
        assert!(symmetry_filter(&d, 3, 1, 1).is_err());

        let empty = EmpiricalDistribution::new(4);
        assert_eq!(spin_pools(&empty, 2, 1, 1).unwrap(), (vec![], vec![]));
    }

    #[test]
    fn three_alpha_bits_filtered_when_four_expected() {
        let b = 0b0111u64 | 0b1111 << 6;
        let d = EmpiricalDistribution::from_shots(12, &[b]);
        let (valid, n_invalid) = symmetry_filter(&d, 6, 4, 4).unwrap();
        assert!(valid.is_empty());
        assert_eq!(n_invalid, 1);
    }

    #[test]
    fn json_round_trip() {
        let d = EmpiricalDistribution::from_shots(4, &[bits("1001"), bits("1001"), bits("0110")]);
        let v = d.to_json();
        assert_eq!(v["counts"]["1001"], 2);
        assert_eq!(v["total"], 3);
        assert_eq!(EmpiricalDistribution::from_json(&v).unwrap(), d);
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = stream_rng(seed, 99);
        let amps: Vec<Complex64> = (0..1usize << n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        StateVector::normalized(n, amps).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reproducible_and_prefix_monotone(seed in 0u64..1000, short in 1usize..20_000, extra in 0usize..20_000) {
            let s = random_state(4, seed);
            let noise = NoiseModel::default();
            let a = sample_shots(&s, short, Some(&noise), seed).unwrap();
            let b = sample_shots(&s, short + extra, Some(&noise), seed).unwrap();
            prop_assert_eq!(&a[..], &b[..short]);
            let seen_a: BTreeSet<u64> = a.iter().copied().collect();
            let seen_b: BTreeSet<u64> = b.iter().copied().collect();
            prop_assert!(seen_a.is_subset(&seen_b));
            prop_assert_eq!(
                sample_bitstrings(&s, short, None, seed).unwrap(),
                sample_bitstrings(&s, short, None, seed).unwrap()
            );
        }

        #[test]
        fn sector_pure_states_never_leave_sector(seed in 0u64..1000, na in 0usize..4, nb in 0usize..4) {
            let n_orb = 3;
            let mut amps = vec![Complex64::default(); 1 << 6];
            let mut rng = stream_rng(seed, 1);
            for a in combinations(n_orb, na) {
                for b in combinations(n_orb, nb) {
                    amps[(a | b << n_orb) as usize] = Complex64::new(rng.random::<f64>() + 0.01, 0.0);
                }
            }
            let s = StateVector::normalized(6, amps).unwrap();
            let d = sample_bitstrings(&s, 2000, None, seed).unwrap();
            let (_, n_invalid) = symmetry_filter(&d, n_orb, na, nb).unwrap();
            prop_assert_eq!(n_invalid, 0);
            let (ua, ub) = spin_pools(&d, n_orb, na, nb).unwrap();
            prop_assert!(ua.len() <= combinations(n_orb, na).len());
            prop_assert!(ub.len() <= combinations(n_orb, nb).len());
        }
    }
}
