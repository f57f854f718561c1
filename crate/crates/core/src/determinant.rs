//! Bitmask Slater determinants, Slater–Condon matrix elements and projection
//! of the electronic Hamiltonian onto determinant subspaces.
//!
//! Fermionic order is blocked: α spin orbitals ascending, then β spin
//! orbitals ascending. This is the same order the Jordan–Wigner mapping uses
//! for qubits, so matrix elements here agree entry for entry with the qubit
//! Hamiltonian restricted to the sector.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, MolecularIntegrals, Result};

/// Subspaces up to this dimension are stored densely.
pub const DENSE_STORAGE_LIMIT: usize = 512;

/// An (α, β) occupation pair. Bit `p` of a mask is spatial orbital `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Determinant {
    pub alpha: u64,
    pub beta: u64,
}

impl Determinant {
    pub const fn new(alpha: u64, beta: u64) -> Self {
        Self { alpha, beta }
    }

    /// Lowest-orbital filling for a sector.
    pub fn hartree_fock(n_alpha: usize, n_beta: usize) -> Self {
        Self::new(low_bits(n_alpha), low_bits(n_beta))
    }

    /// Splits a basis-state index over `2*n_orb` qubits.
    pub fn from_index(index: u64, n_orb: usize) -> Self {
        Self::new(index & low_bits(n_orb), index >> n_orb)
    }

    /// Basis-state index of this determinant on `2*n_orb` qubits.
    pub fn index(&self, n_orb: usize) -> u64 {
        self.alpha | (self.beta << n_orb)
    }

    pub fn n_alpha(&self) -> u32 {
        self.alpha.count_ones()
    }

    pub fn n_beta(&self) -> u32 {
        self.beta.count_ones()
    }

    pub fn is_valid(&self, n_orb: usize, n_alpha: usize, n_beta: usize) -> bool {
        let mask = low_bits(n_orb);
        self.alpha & !mask == 0
            && self.beta & !mask == 0
            && self.n_alpha() as usize == n_alpha
            && self.n_beta() as usize == n_beta
    }

    /// Display form: α occupations of orbitals `0..n_orb`, then β.
    pub fn to_bitstring(&self, n_orb: usize) -> String {
        index_to_bitstring(self.index(n_orb), 2 * n_orb)
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        if !s.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "bitstring '{s}' has odd length"
            )));
        }
        let index = bitstring_to_index(s)?;
        Ok(Self::from_index(index, s.len() / 2))
    }
}

/// Mask with the lowest `n` bits set.
#[inline]
pub fn low_bits(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Renders a basis-state index with qubit 0 as the leftmost character.
pub fn index_to_bitstring(index: u64, n_qubits: usize) -> String {
    (0..n_qubits)
        .map(|q| if index >> q & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn bitstring_to_index(s: &str) -> Result<u64> {
    if s.len() > 64 {
        return Err(Error::TooLarge {
            dim: s.len(),
            limit: 64,
        });
    }
    s.chars().enumerate().try_fold(0u64, |acc, (q, c)| match c {
        '0' => Ok(acc),
        '1' => Ok(acc | 1 << q),
        _ => Err(Error::InvalidArgument(format!("bad bitstring '{s}'"))),
    })
}

/// Excitation degree per spin sector.
pub fn excitation_degree(d1: &Determinant, d2: &Determinant) -> (u32, u32) {
    (
        (d1.alpha ^ d2.alpha).count_ones() / 2,
        (d1.beta ^ d2.beta).count_ones() / 2,
    )
}

/// Bits strictly between orbitals `i` and `j`.
#[inline]
fn between(i: u32, j: u32) -> u64 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    low_bits(hi as usize) & !low_bits(lo as usize + 1)
}

/// Sign of moving an electron from `from` to `to` in `mask`.
#[inline]
fn hop_sign(mask: u64, from: u32, to: u32) -> f64 {
    if (mask & between(from, to)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn occupied(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let p = m.trailing_zeros();
            m &= m - 1;
            Some(p as usize)
        }
    })
}

fn diagonal(d: &Determinant, ints: &MolecularIntegrals) -> f64 {
    let mut e = 0.0;
    let occ_a: Vec<usize> = occupied(d.alpha).collect();
    let occ_b: Vec<usize> = occupied(d.beta).collect();
    for &i in occ_a.iter().chain(&occ_b) {
        e += ints.h1(i, i);
    }
    for same in [&occ_a, &occ_b] {
        for (k, &i) in same.iter().enumerate() {
            for &j in &same[..k] {
                e += ints.eri(i, i, j, j) - ints.eri(i, j, j, i);
            }
        }
    }
    for &i in &occ_a {
        for &j in &occ_b {
            e += ints.eri(i, i, j, j);
        }
    }
    e
}

/// ⟨D1|a†_a a_i|D2⟩-weighted single excitation within one sector. `same`
/// and `other` are the masks of D2 in the excited and the spectator sector.
fn single(i: usize, a: usize, same: u64, other: u64, ints: &MolecularIntegrals) -> f64 {
    let mut v = ints.h1(a, i);
    for j in occupied(same) {
        v += ints.eri(a, i, j, j) - ints.eri(a, j, j, i);
    }
    for j in occupied(other) {
        v += ints.eri(a, i, j, j);
    }
    v * hop_sign(same, i as u32, a as u32)
}

fn lowest_two(mask: u64) -> (u32, u32) {
    let first = mask.trailing_zeros();
    let second = (mask & (mask - 1)).trailing_zeros();
    (first, second)
}

/// Matrix element ⟨d1|H|d2⟩ of the electronic Hamiltonian without the core
/// energy, from the Slater–Condon rules.
pub fn slater_condon_element(
    d1: &Determinant,
    d2: &Determinant,
    ints: &MolecularIntegrals,
) -> Result<f64> {
    if d1.n_alpha() != d2.n_alpha() || d1.n_beta() != d2.n_beta() {
        return Err(Error::SectorMismatch(
            d1.n_alpha(),
            d1.n_beta(),
            d2.n_alpha(),
            d2.n_beta(),
        ));
    }
    Ok(element_unchecked(d1, d2, ints))
}

fn element_unchecked(d1: &Determinant, d2: &Determinant, ints: &MolecularIntegrals) -> f64 {
    let (da, db) = excitation_degree(d1, d2);
    match (da, db) {
        (0, 0) => diagonal(d1, ints),
        (1, 0) => {
            let i = (d2.alpha & !d1.alpha).trailing_zeros() as usize;
            let a = (d1.alpha & !d2.alpha).trailing_zeros() as usize;
            single(i, a, d2.alpha, d2.beta, ints)
        }
        (0, 1) => {
            let i = (d2.beta & !d1.beta).trailing_zeros() as usize;
            let a = (d1.beta & !d2.beta).trailing_zeros() as usize;
            single(i, a, d2.beta, d2.alpha, ints)
        }
        (1, 1) => {
            let i = (d2.alpha & !d1.alpha).trailing_zeros();
            let a = (d1.alpha & !d2.alpha).trailing_zeros();
            let j = (d2.beta & !d1.beta).trailing_zeros();
            let b = (d1.beta & !d2.beta).trailing_zeros();
            let sign = hop_sign(d2.alpha, i, a) * hop_sign(d2.beta, j, b);
            sign * ints.eri(a as usize, i as usize, b as usize, j as usize)
        }
        (2, 0) | (0, 2) => {
            let (m1, m2) = if da == 2 {
                (d1.alpha, d2.alpha)
            } else {
                (d1.beta, d2.beta)
            };
            let (i, j) = lowest_two(m2 & !m1);
            let (a, b) = lowest_two(m1 & !m2);
            // Sequential hops i→a then j→b give the sign of a†_a a†_b a_j a_i.
            let after_first = m2 & !(1 << i) | (1 << a);
            let sign = hop_sign(m2, i, a) * hop_sign(after_first, j, b);
            let (i, j, a, b) = (i as usize, j as usize, a as usize, b as usize);
            sign * (ints.eri(a, i, b, j) - ints.eri(a, j, b, i))
        }
        _ => 0.0,
    }
}

/// Ordered, duplicate-free list of determinants.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Subspace {
    determinants: Vec<Determinant>,
}

impl Subspace {
    /// Sorts and deduplicates.
    pub fn new(mut determinants: Vec<Determinant>) -> Self {
        determinants.sort_unstable();
        determinants.dedup();
        Self { determinants }
    }

    pub fn len(&self) -> usize {
        self.determinants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.determinants.is_empty()
    }

    pub fn determinants(&self) -> &[Determinant] {
        &self.determinants
    }

    pub fn position(&self, d: &Determinant) -> Option<usize> {
        self.determinants.binary_search(d).ok()
    }

    pub fn contains(&self, d: &Determinant) -> bool {
        self.position(d).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Determinant> {
        self.determinants.iter()
    }

    /// Common (N_α, N_β) of every member, or an error on mixed sectors.
    pub fn sector(&self) -> Result<Option<(u32, u32)>> {
        let mut it = self.determinants.iter();
        let Some(first) = it.next() else {
            return Ok(None);
        };
        let s = (first.n_alpha(), first.n_beta());
        for d in it {
            if (d.n_alpha(), d.n_beta()) != s {
                return Err(Error::SectorMismatch(s.0, s.1, d.n_alpha(), d.n_beta()));
            }
        }
        Ok(Some(s))
    }
}

/// All strings of `n_orb` bits with `k` set, ascending.
pub fn combinations(n_orb: usize, k: usize) -> Vec<u64> {
    if k > n_orb {
        return Vec::new();
    }
    if k == 0 {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut v = low_bits(k);
    let limit = 1u64 << n_orb;
    while v < limit {
        out.push(v);
        // Gosper's hack: next integer with the same popcount.
        let c = v & v.wrapping_neg();
        let r = v + c;
        v = (((r ^ v) >> 2) / c) | r;
    }
    out
}

/// Every determinant of the (n_alpha, n_beta) sector in canonical order.
pub fn enumerate_fci_space(n_orb: usize, n_alpha: usize, n_beta: usize) -> Result<Subspace> {
    if n_alpha > n_orb || n_beta > n_orb || n_orb > 32 {
        return Err(Error::InvalidSector {
            n_orb,
            n_alpha,
            n_beta,
        });
    }
    let betas = combinations(n_orb, n_beta);
    let dets = combinations(n_orb, n_alpha)
        .into_iter()
        .flat_map(|a| betas.iter().map(move |&b| Determinant::new(a, b)))
        .collect();
    Ok(Subspace { determinants: dets })
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    /// Row-compressed (column, value) lists; both triangles stored.
    Sparse(Vec<Vec<(u32, f64)>>),
}

/// Hamiltonian projected onto a subspace, excluding the core energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedHamiltonian {
    dim: usize,
    diagonal: Vec<f64>,
    storage: Storage,
}

impl ProjectedHamiltonian {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[i * self.dim + j],
            Storage::Sparse(rows) => rows[i]
                .iter()
                .find(|(c, _)| *c as usize == j)
                .map_or(0.0, |(_, v)| *v),
        }
    }

    /// Number of stored nonzero entries (both triangles).
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.iter().filter(|v| **v != 0.0).count(),
            Storage::Sparse(rows) => rows.iter().map(Vec::len).sum(),
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(rows) => {
                let mut m = vec![0.0; self.dim * self.dim];
                for (i, row) in rows.iter().enumerate() {
                    for &(j, v) in row {
                        m[i * self.dim + j as usize] = v;
                    }
                }
                m
            }
        }
    }

    /// y = H x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim;
        match &self.storage {
            Storage::Dense(m) => {
                y.par_iter_mut().enumerate().for_each(|(i, yi)| {
                    *yi = m[i * n..(i + 1) * n]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum();
                });
            }
            Storage::Sparse(rows) => {
                y.par_iter_mut().zip(rows).for_each(|(yi, row)| {
                    *yi = row.iter().map(|&(j, v)| v * x[j as usize]).sum();
                });
            }
        }
    }
}

/// Projects the electronic Hamiltonian (without core energy) onto `s`.
///
/// Pairs more than doubly excited are skipped without evaluation. Rows are
/// filled in parallel; each entry depends only on its pair, so the result
/// does not depend on scheduling.
pub fn project_hamiltonian(s: &Subspace, ints: &MolecularIntegrals) -> Result<ProjectedHamiltonian> {
    project_with_limit(s, ints, DENSE_STORAGE_LIMIT)
}

/// As [`project_hamiltonian`] with an explicit dense-storage threshold.
pub fn project_with_limit(
    s: &Subspace,
    ints: &MolecularIntegrals,
    dense_limit: usize,
) -> Result<ProjectedHamiltonian> {
    s.sector()?;
    let mask = low_bits(ints.n_orbitals());
    if let Some(d) = s.iter().find(|d| d.alpha & !mask != 0 || d.beta & !mask != 0) {
        return Err(Error::InvalidArgument(format!(
            "determinant {:?} uses orbitals beyond {}",
            d,
            ints.n_orbitals()
        )));
    }
    let dets = s.determinants();
    let dim = dets.len();
    let rows: Vec<Vec<(u32, f64)>> = dets
        .par_iter()
        .map(|di| {
            dets.iter()
                .enumerate()
                .filter_map(|(j, dj)| {
                    let bits = (di.alpha ^ dj.alpha).count_ones() + (di.beta ^ dj.beta).count_ones();
                    if bits > 4 {
                        return None;
                    }
                    let v = element_unchecked(di, dj, ints);
                    (v != 0.0 || bits == 0).then_some((j as u32, v))
                })
                .collect()
        })
        .collect();
    let diagonal: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .find(|(j, _)| *j as usize == i)
                .map_or(0.0, |(_, v)| *v)
        })
        .collect();
    let storage = if dim <= dense_limit {
        let mut m = vec![0.0; dim * dim];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                m[i * dim + j as usize] = v;
            }
        }
        Storage::Dense(m)
    } else {
        Storage::Sparse(rows)
    };
    Ok(ProjectedHamiltonian {
        dim,
        diagonal,
        storage,
    })
}

impl fmt::Display for Determinant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "α{:b}/β{:b}", self.alpha, self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_ints(n: usize, na: usize, nb: usize, seed: u64) -> MolecularIntegrals {
        MolecularIntegrals::random(n, na, nb, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn degrees() {
        let d = Determinant::new(0b0011, 0b0011);
        assert_eq!(excitation_degree(&d, &d), (0, 0));
        assert_eq!(
            excitation_degree(&d, &Determinant::new(0b0101, 0b0011)),
            (1, 0)
        );
        assert_eq!(
            excitation_degree(&d, &Determinant::new(0b1100, 0b1100)),
            (2, 2)
        );
    }

    #[test]
    fn triple_excitation_is_zero() {
        let ints = random_ints(6, 3, 3, 1);
        let d1 = Determinant::new(0b000111, 0b000111);
        let d2 = Determinant::new(0b111000, 0b000111);
        assert_eq!(slater_condon_element(&d1, &d2, &ints).unwrap(), 0.0);
        let d3 = Determinant::new(0b001110, 0b110001);
        assert_eq!(excitation_degree(&d1, &d3), (1, 2));
        assert_eq!(slater_condon_element(&d1, &d3, &ints).unwrap(), 0.0);
    }

    #[test]
    fn sector_mismatch() {
        let ints = random_ints(3, 1, 1, 2);
        let r = slater_condon_element(
            &Determinant::new(0b1, 0b1),
            &Determinant::new(0b11, 0b1),
            &ints,
        );
        assert!(matches!(r, Err(Error::SectorMismatch(..))));
        let s = Subspace::new(vec![Determinant::new(0b1, 0b1), Determinant::new(0b11, 0)]);
        assert!(project_hamiltonian(&s, &ints).is_err());
    }

    #[test]
    fn fci_space_sizes() {
        assert_eq!(enumerate_fci_space(2, 1, 1).unwrap().len(), 4);
        assert_eq!(enumerate_fci_space(4, 2, 2).unwrap().len(), 36);
        assert_eq!(enumerate_fci_space(6, 4, 4).unwrap().len(), 225);
        assert_eq!(enumerate_fci_space(5, 0, 2).unwrap().len(), 10);
        assert!(enumerate_fci_space(3, 4, 1).is_err());
        let s = enumerate_fci_space(5, 2, 3).unwrap();
        assert!(s.determinants().windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|d| d.is_valid(5, 2, 3)));
    }

    #[test]
    fn bitstring_convention() {
        // α in orbital 0, β in orbital 1.
        let d = Determinant::from_bitstring("1001").unwrap();
        assert_eq!(d, Determinant::new(0b01, 0b10));
        assert_eq!(d.to_bitstring(2), "1001");
        assert_eq!(d.index(2), 0b1001);
        assert!(Determinant::from_bitstring("10x1").is_err());
    }

    #[test]
    fn hermitian_and_sparse_matches_dense() {
        let ints = random_ints(5, 2, 2, 7);
        let s = enumerate_fci_space(5, 2, 2).unwrap();
        let dense = project_with_limit(&s, &ints, usize::MAX).unwrap();
        let sparse = project_with_limit(&s, &ints, 0).unwrap();
        assert!(dense.is_dense() && !sparse.is_dense());
        assert_eq!(dense.to_dense(), sparse.to_dense());
        let n = s.len();
        let m = dense.to_dense();
        for i in 0..n {
            for j in 0..n {
                assert!((m[i * n + j] - m[j * n + i]).abs() < 1e-12);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (mut y1, mut y2) = (vec![0.0; n], vec![0.0; n]);
        dense.apply(&x, &mut y1);
        sparse.apply(&x, &mut y2);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(dense.diagonal(), sparse.diagonal());
    }

    #[test]
    fn combinations_counts() {
        assert_eq!(combinations(6, 4).len(), 15);
        assert_eq!(combinations(4, 0), vec![0]);
        assert_eq!(combinations(3, 3), vec![0b111]);
        assert!(combinations(2, 3).is_empty());
    }
}
