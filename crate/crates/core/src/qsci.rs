//! Quantum-selected configuration interaction.
//!
//! The subspace is the cross product of the unique α and β halves seen in
//! valid samples, which conserves particle number and S_z by construction.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::determinant::{low_bits, project_hamiltonian};
use crate::eigen::lowest_eigenpair;
use crate::sampling::{split_by_sector, spin_pools};
use crate::{Determinant, EmpiricalDistribution, Error, MolecularIntegrals, Result, Subspace};

/// Coefficients are left out of JSON exports above this subspace size.
pub const COEFFICIENT_EXPORT_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsciResult {
    /// Includes the core energy.
    pub energy: f64,
    pub subspace_size: usize,
    /// Unique α and β strings spanned by the subspace.
    pub pool_sizes: (usize, usize),
    #[serde(skip)]
    pub subspace: Subspace,
    /// Aligned with `subspace`, unit norm.
    pub coefficients: Vec<f64>,
}

impl QsciResult {
    pub fn to_json(&self, coefficient_limit: usize) -> serde_json::Value {
        let mut v = serde_json::json!({
            "energy": self.energy,
            "subspace_size": self.subspace_size,
            "pool_sizes": [self.pool_sizes.0, self.pool_sizes.1],
        });
        if self.subspace_size <= coefficient_limit {
            v["coefficients"] = serde_json::json!(self.coefficients);
        }
        v
    }
}

fn uniform_popcount(pool: &[u64], name: &'static str) -> Result<u32> {
    let first = pool.first().ok_or(Error::Empty(name))?;
    let k = first.count_ones();
    if pool.iter().any(|s| s.count_ones() != k) {
        return Err(Error::InvalidArgument(format!(
            "{name} mixes strings with different electron counts"
        )));
    }
    Ok(k)
}

/// All |α_i β_j⟩ pairs.
pub fn qsci_subspace(u_alpha: &[u64], u_beta: &[u64]) -> Result<Subspace> {
    uniform_popcount(u_alpha, "alpha pool")?;
    uniform_popcount(u_beta, "beta pool")?;
    let mut dets = Vec::with_capacity(u_alpha.len() * u_beta.len());
    for &a in u_alpha {
        for &b in u_beta {
            dets.push(Determinant::new(a, b));
        }
    }
    Ok(Subspace::new(dets))
}

/// Pool sizes of a subspace: unique α and unique β strings.
pub fn pool_sizes(s: &Subspace) -> (usize, usize) {
    let a: BTreeSet<u64> = s.iter().map(|d| d.alpha).collect();
    let b: BTreeSet<u64> = s.iter().map(|d| d.beta).collect();
    (a.len(), b.len())
}

/// Lowest eigenpair of the Hamiltonian projected onto `s`.
///
/// The eigenvector sign is fixed so that the first determinant (canonical
/// order) with a nonzero coefficient has a positive one.
pub fn qsci_energy(s: &Subspace, ints: &MolecularIntegrals) -> Result<QsciResult> {
    if s.is_empty() {
        return Err(Error::Empty("subspace"));
    }
    s.sector()?;
    let h = project_hamiltonian(s, ints)?;
    let pair = lowest_eigenpair(&h)?;
    let mut coefficients = pair.vector;
    if let Some(c) = coefficients.iter().find(|c| c.abs() > 1e-12) {
        if *c < 0.0 {
            coefficients.iter_mut().for_each(|c| *c = -*c);
        }
    }
    Ok(QsciResult {
        energy: pair.value + ints.core_energy(),
        subspace_size: s.len(),
        pool_sizes: pool_sizes(s),
        subspace: s.clone(),
        coefficients,
    })
}

/// Spin pools from the valid samples, cross product, diagonalization.
pub fn qsci_from_distribution(d: &EmpiricalDistribution, ints: &MolecularIntegrals) -> Result<QsciResult> {
    let (ua, ub) = spin_pools(d, ints.n_orbitals(), ints.n_alpha(), ints.n_beta())?;
    let s = qsci_subspace(&ua, &ub)?;
    qsci_energy(&s, ints)
}

/// Plain selection: the `r` most frequent valid bitstrings (ties broken by
/// lower index).
pub fn qsci_raw_subspace(
    d: &EmpiricalDistribution,
    n_orb: usize,
    n_alpha: usize,
    n_beta: usize,
    r: usize,
) -> Result<Subspace> {
    let (valid, _) = split_by_sector(d, n_orb, n_alpha, n_beta)?;
    let mut entries: Vec<(u64, u64)> = valid.iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mask = low_bits(n_orb);
    let dets: Vec<Determinant> = entries
        .into_iter()
        .take(r)
        .map(|(bits, _)| Determinant::new(bits & mask, bits >> n_orb))
        .collect();
    if dets.is_empty() {
        return Err(Error::Empty("valid samples"));
    }
    Ok(Subspace::new(dets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::determinant::{bitstring_to_index, combinations, enumerate_fci_space};
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn half(s: &str) -> u64 {
        bitstring_to_index(s).unwrap()
    }

    #[test]
    fn worked_example() {
        let s = qsci_subspace(&[half("10")], &[half("10"), half("01")]).unwrap();
        let shown: BTreeSet<String> = s.iter().map(|d| d.to_bitstring(2)).collect();
        let expected: BTreeSet<String> = ["1010", "1001"].iter().map(|b| b.to_string()).collect();
        assert_eq!(shown, expected);
        assert_eq!(qsci_subspace(&[1], &[2]).unwrap().len(), 1);
        assert!(qsci_subspace(&[], &[1]).is_err());
        assert!(qsci_subspace(&[1, 3], &[1]).is_err());
    }

    #[test]
    fn full_pools_give_full_space() {
        let a = combinations(6, 4);
        let s = qsci_subspace(&a, &a).unwrap();
        assert_eq!(s.len(), 225);
        assert_eq!(s, enumerate_fci_space(6, 4, 4).unwrap());
    }

    #[test]
    fn raw_mode_keeps_most_frequent() {
        let d = EmpiricalDistribution::from_counts(
            4,
            [(half("1010"), 5), (half("1001"), 3), (half("0110"), 3), (half("1110"), 9)],
        )
        .unwrap();
        let s = qsci_raw_subspace(&d, 2, 1, 1, 2).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.contains(&Determinant::from_bitstring("1010").unwrap()));
        assert!(s.contains(&Determinant::from_bitstring("0110").unwrap()));
    }

    #[test]
    fn json_omits_large_coefficients() {
        let mut rng = stream_rng(1, 0);
        let ints = MolecularIntegrals::random(3, 1, 1, &mut rng).unwrap();
        let r = qsci_energy(&enumerate_fci_space(3, 1, 1).unwrap(), &ints).unwrap();
        assert!(r.to_json(100)["coefficients"].is_array());
        assert!(r.to_json(3).get("coefficients").is_none());
        assert_eq!(r.to_json(3)["pool_sizes"], serde_json::json!([3, 3]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn variational_and_monotone(seed in 0u64..500, ka in 1usize..7, kb in 1usize..7) {
            let mut rng = stream_rng(seed, 1);
            let ints = MolecularIntegrals::random(4, 2, 2, &mut rng).unwrap();
            let all = combinations(4, 2);
            let ua: Vec<u64> = all.iter().copied().take(ka).collect();
            let ub: Vec<u64> = all.iter().copied().skip(6 - kb).collect();
            let small = qsci_energy(&qsci_subspace(&ua[..1], &ub).unwrap(), &ints).unwrap();
            let big = qsci_energy(&qsci_subspace(&ua, &ub).unwrap(), &ints).unwrap();
            let fci = qsci_energy(&qsci_subspace(&all, &all).unwrap(), &ints).unwrap();
            prop_assert!(big.energy <= small.energy + 1e-10);
            prop_assert!(big.energy >= fci.energy - 1e-9);
            prop_assert_eq!(big.subspace_size, ka * kb);
            let norm: f64 = big.coefficients.iter().map(|c| c * c).sum();
            prop_assert!((norm - 1.0).abs() < 1e-10);
            prop_assert!(big.subspace.iter().all(|d| d.is_valid(4, 2, 2)));
        }
    }
}
