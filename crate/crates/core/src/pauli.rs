//! Pauli strings, Jordan–Wigner mapping and measurement planning.
//!
//! A [`PauliString`] is stored as two bitmasks: qubit `q` carries X when only
//! its x-bit is set, Z when only its z-bit is set and Y when both are. Text
//! form lists qubit 0 first, so `"XZI"` is X on qubit 0 and Z on qubit 1.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, MolecularIntegrals, Result};

/// Default coefficient cutoff when building qubit Hamiltonians.
pub const DEFAULT_CUTOFF: f64 = 1e-12;
/// Largest imaginary residue tolerated on a Hamiltonian coefficient.
pub const IMAG_TOL: f64 = 1e-10;
/// Pauli strings are limited to 64 qubits by their mask width.
pub const MAX_QUBITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// One of {1, i, −1, −i}, stored as a power of i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn power(self) -> u8 {
        self.0
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: u32,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn new(n_qubits: usize, x: u64, z: u64) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::TooLarge {
                dim: n_qubits,
                limit: MAX_QUBITS,
            });
        }
        let mask = crate::determinant::low_bits(n_qubits);
        if (x | z) & !mask != 0 {
            return Err(Error::InvalidArgument(format!(
                "Pauli masks exceed {n_qubits} qubits"
            )));
        }
        Ok(Self {
            n_qubits: n_qubits as u32,
            x,
            z,
        })
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self {
            n_qubits: n_qubits as u32,
            x: 0,
            z: 0,
        }
    }

    /// Single-qubit operator `p` on `qubit`.
    pub fn single(n_qubits: usize, qubit: usize, p: Pauli) -> Result<Self> {
        if qubit >= n_qubits {
            return Err(Error::OutOfRange {
                index: qubit,
                limit: n_qubits,
            });
        }
        let b = 1u64 << qubit;
        let (x, z) = match p {
            Pauli::I => (0, 0),
            Pauli::X => (b, 0),
            Pauli::Y => (b, b),
            Pauli::Z => (0, b),
        };
        Self::new(n_qubits, x, z)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits as usize
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.support() == 0
    }

    /// Only I and Z letters.
    pub fn is_diagonal(&self) -> bool {
        self.x == 0
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        Pauli::from_bits(self.x >> qubit & 1 == 1, self.z >> qubit & 1 == 1)
    }

    /// Number of Y letters.
    pub fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()).is_multiple_of(2)
    }

    /// On every qubit the letters agree or one of them is I.
    pub fn qubitwise_commutes(&self, other: &PauliString) -> bool {
        let overlap = self.support() & other.support();
        ((self.x ^ other.x) | (self.z ^ other.z)) & overlap == 0
    }

    pub fn label(&self) -> String {
        (0..self.n_qubits())
            .map(|q| self.get(q).letter())
            .collect()
    }

    fn letter_code(&self, q: usize) -> u8 {
        match self.get(q) {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }
}

/// Canonical order: lexicographic on the text form with I < X < Y < Z.
impl Ord for PauliString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n_qubits.cmp(&other.n_qubits).then_with(|| {
            let diff = (self.x ^ other.x) | (self.z ^ other.z);
            if diff == 0 {
                Ordering::Equal
            } else {
                let q = diff.trailing_zeros() as usize;
                self.letter_code(q).cmp(&other.letter_code(q))
            }
        })
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mut x, mut z) = (0u64, 0u64);
        let n = s.chars().count();
        if n > MAX_QUBITS {
            return Err(Error::TooLarge {
                dim: n,
                limit: MAX_QUBITS,
            });
        }
        for (q, c) in s.chars().enumerate() {
            let b = 1u64 << q;
            match c.to_ascii_uppercase() {
                'I' => {}
                'X' => x |= b,
                'Y' => {
                    x |= b;
                    z |= b
                }
                'Z' => z |= b,
                _ => return Err(Error::InvalidArgument(format!("bad Pauli label '{s}'"))),
            }
        }
        PauliString::new(n, x, z)
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Product of two Pauli strings as (phase, string).
pub fn pauli_multiply(a: &PauliString, b: &PauliString) -> Result<(Phase, PauliString)> {
    if a.n_qubits != b.n_qubits {
        return Err(Error::SizeMismatch {
            expected: a.n_qubits(),
            found: b.n_qubits(),
        });
    }
    Ok(multiply_unchecked(a, b))
}

fn multiply_unchecked(a: &PauliString, b: &PauliString) -> (Phase, PauliString) {
    let mut power = 0u8;
    let mut both = a.support() & b.support();
    while both != 0 {
        let q = both.trailing_zeros() as usize;
        both &= both - 1;
        let (pa, pb) = (a.get(q), b.get(q));
        if pa == pb {
            continue;
        }
        // XY = iZ, YZ = iX, ZX = iY; reversed order gives −i.
        let cyclic = matches!(
            (pa, pb),
            (Pauli::X, Pauli::Y) | (Pauli::Y, Pauli::Z) | (Pauli::Z, Pauli::X)
        );
        power += if cyclic { 1 } else { 3 };
    }
    (
        Phase(power % 4),
        PauliString {
            n_qubits: a.n_qubits,
            x: a.x ^ b.x,
            z: a.z ^ b.z,
        },
    )
}

/// Complex-weighted sum of Pauli strings, used for symbolic operator algebra.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PauliSum {
    n_qubits: usize,
    terms: BTreeMap<PauliString, Complex64>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n_qubits: usize) -> Self {
        let mut s = Self::zero(n_qubits);
        s.add_term(Complex64::new(1.0, 0.0), PauliString::identity(n_qubits));
        s
    }

    pub fn from_terms(n_qubits: usize, terms: impl IntoIterator<Item = (Complex64, PauliString)>) -> Self {
        let mut s = Self::zero(n_qubits);
        for (c, p) in terms {
            s.add_term(c, p);
        }
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn add_term(&mut self, c: Complex64, p: PauliString) {
        *self.terms.entry(p).or_default() += c;
    }

    pub fn add(&mut self, other: &PauliSum) {
        for (p, c) in &other.terms {
            self.add_term(*c, *p);
        }
    }

    pub fn scaled(&self, c: Complex64) -> PauliSum {
        PauliSum {
            n_qubits: self.n_qubits,
            terms: self.terms.iter().map(|(p, v)| (*p, v * c)).collect(),
        }
    }

    /// Drops terms with |c| ≤ tol.
    pub fn simplify(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.norm() > tol);
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, p: &PauliString) -> Complex64 {
        self.terms.get(p).copied().unwrap_or_default()
    }
}

impl Mul for &PauliSum {
    type Output = PauliSum;

    fn mul(self, rhs: &PauliSum) -> PauliSum {
        let mut out = PauliSum::zero(self.n_qubits);
        for (pa, ca) in &self.terms {
            for (pb, cb) in &rhs.terms {
                let (phase, p) = multiply_unchecked(pa, pb);
                out.add_term(ca * cb * phase.to_complex(), p);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create,
    Annihilate,
}

/// Jordan–Wigner image of a fermionic ladder operator on mode `p`:
/// a_p ↦ ½(X_p + iY_p) Z_0…Z_{p−1} and a_p† ↦ ½(X_p − iY_p) Z_0…Z_{p−1}.
pub fn jw_ladder(p: usize, n: usize, kind: Ladder) -> Result<Vec<(Complex64, PauliString)>> {
    if p >= n || n > MAX_QUBITS {
        return Err(Error::OutOfRange { index: p, limit: n });
    }
    let chain = crate::determinant::low_bits(p);
    let b = 1u64 << p;
    let x = PauliString::new(n, b, chain)?;
    let y = PauliString::new(n, b, chain | b)?;
    let sign = match kind {
        Ladder::Annihilate => 1.0,
        Ladder::Create => -1.0,
    };
    Ok(vec![
        (Complex64::new(0.5, 0.0), x),
        (Complex64::new(0.0, 0.5 * sign), y),
    ])
}

fn ladder_sum(p: usize, n: usize, kind: Ladder) -> PauliSum {
    PauliSum::from_terms(n, jw_ladder(p, n, kind).expect("mode in range"))
}

/// Real-weighted Pauli decomposition of a qubit Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitHamiltonian {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    coeff: f64,
    string: PauliString,
}

impl QubitHamiltonian {
    /// Merges duplicate strings and drops coefficients with |w| < `cutoff`.
    /// Terms are kept in canonical string order.
    pub fn new(
        n_qubits: usize,
        terms: impl IntoIterator<Item = (f64, PauliString)>,
        cutoff: f64,
    ) -> Result<Self> {
        let mut merged: BTreeMap<PauliString, f64> = BTreeMap::new();
        for (c, p) in terms {
            if p.n_qubits() != n_qubits {
                return Err(Error::SizeMismatch {
                    expected: n_qubits,
                    found: p.n_qubits(),
                });
            }
            *merged.entry(p).or_default() += c;
        }
        Ok(Self {
            n_qubits,
            terms: merged
                .into_iter()
                .filter(|(_, c)| c.abs() >= cutoff)
                .map(|(p, c)| (c, p))
                .collect(),
        })
    }

    /// Converts a complex Pauli sum, rejecting imaginary residues above
    /// [`IMAG_TOL`].
    pub fn from_pauli_sum(sum: &PauliSum, cutoff: f64) -> Result<Self> {
        let mut terms = Vec::with_capacity(sum.len());
        for (p, c) in sum.terms() {
            if c.im.abs() > IMAG_TOL {
                return Err(Error::ComplexCoefficient {
                    string: p.label(),
                    imag: c.im,
                });
            }
            terms.push((c.re, *p));
        }
        Self::new(sum.n_qubits(), terms, cutoff)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn identity_coefficient(&self) -> f64 {
        self.terms
            .iter()
            .find(|(_, p)| p.is_identity())
            .map_or(0.0, |(c, _)| *c)
    }

    /// Σ|w_i| over non-identity terms.
    pub fn one_norm(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(_, p)| !p.is_identity())
            .map(|(c, _)| c.abs())
            .sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let recs: Vec<TermRecord> = self
            .terms
            .iter()
            .map(|(c, p)| TermRecord {
                coeff: *c,
                string: *p,
            })
            .collect();
        serde_json::to_value(recs).expect("serializable")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let recs: Vec<TermRecord> = serde_json::from_value(v.clone())
            .map_err(|e| Error::InvalidArgument(format!("bad Hamiltonian JSON: {e}")))?;
        let n = recs
            .first()
            .map(|r| r.string.n_qubits())
            .ok_or(Error::Empty("Hamiltonian"))?;
        Self::new(n, recs.into_iter().map(|r| (r.coeff, r.string)), 0.0)
    }

    /// Dense row-major matrix, for small systems and tests.
    pub fn to_dense(&self) -> Result<Vec<Complex64>> {
        if self.n_qubits > 14 {
            return Err(Error::TooLarge {
                dim: self.n_qubits,
                limit: 14,
            });
        }
        let dim = 1usize << self.n_qubits;
        let mut m = vec![Complex64::default(); dim * dim];
        for (c, p) in &self.terms {
            let base = Phase(p.y_count() as u8 % 4).to_complex() * c;
            for col in 0..dim as u64 {
                let row = col ^ p.x_mask();
                let sign = if (col & p.z_mask()).count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                m[row as usize * dim + col as usize] += base * sign;
            }
        }
        Ok(m)
    }
}

/// Jordan–Wigner qubit Hamiltonian of the electronic Hamiltonian
///
/// H = E_core + Σ_{pq,σ} h_pq a†_{pσ} a_{qσ}
///       + ½ Σ_{pqrs,στ} (pq|rs) a†_{pσ} a†_{rτ} a_{sτ} a_{qσ}.
///
/// Qubits `0..n` are α orbitals and `n..2n` β orbitals.
pub fn build_qubit_hamiltonian(ints: &MolecularIntegrals, cutoff: f64) -> Result<QubitHamiltonian> {
    let n = ints.n_orbitals();
    let nq = 2 * n;
    if nq > MAX_QUBITS {
        return Err(Error::TooLarge {
            dim: nq,
            limit: MAX_QUBITS,
        });
    }
    let create: Vec<PauliSum> = (0..nq).map(|k| ladder_sum(k, nq, Ladder::Create)).collect();
    let annihilate: Vec<PauliSum> = (0..nq)
        .map(|k| ladder_sum(k, nq, Ladder::Annihilate))
        .collect();
    let pair = |a: &PauliSum, b: &PauliSum| {
        let mut s = a * b;
        s.simplify(0.0);
        s
    };
    // a†_P a†_R and a_S a_Q for every spin-orbital pair.
    let mut cc = vec![PauliSum::zero(nq); nq * nq];
    let mut aa = vec![PauliSum::zero(nq); nq * nq];
    for i in 0..nq {
        for j in 0..nq {
            if i != j {
                cc[i * nq + j] = pair(&create[i], &create[j]);
                aa[i * nq + j] = pair(&annihilate[i], &annihilate[j]);
            }
        }
    }

    let mut acc: HashMap<PauliString, Complex64> = HashMap::new();
    let mut add = |scale: f64, s: &PauliSum| {
        for (p, c) in s.terms() {
            *acc.entry(*p).or_default() += c * scale;
        }
    };
    add(ints.core_energy(), &PauliSum::identity(nq));
    for spin in 0..2 {
        let off = spin * n;
        for p in 0..n {
            for q in 0..n {
                let h = ints.h1(p, q);
                if h != 0.0 {
                    add(h, &(&create[off + p] * &annihilate[off + q]));
                }
            }
        }
    }
    for sigma in 0..2 {
        for tau in 0..2 {
            let (os, ot) = (sigma * n, tau * n);
            for p in 0..n {
                for q in 0..n {
                    for r in 0..n {
                        for s in 0..n {
                            let v = ints.eri(p, q, r, s);
                            let (pp, qq, rr, ss) = (os + p, os + q, ot + r, ot + s);
                            if v == 0.0 || pp == rr || qq == ss {
                                continue;
                            }
                            // a†_P a†_R a_S a_Q
                            let op = &cc[pp * nq + rr] * &aa[ss * nq + qq];
                            add(0.5 * v, &op);
                        }
                    }
                }
            }
        }
    }
    let mut sum = PauliSum::zero(nq);
    for (p, c) in acc {
        sum.add_term(c, p);
    }
    QubitHamiltonian::from_pauli_sum(&sum, cutoff)
}

/// Per-qubit measurement basis of a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    Z,
    Free,
}

/// Terms of a Hamiltonian that can be read off one set of single-qubit
/// measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementGroup {
    /// Indices into [`QubitHamiltonian::terms`].
    pub members: Vec<usize>,
    pub basis: Vec<Basis>,
}

impl MeasurementGroup {
    /// Basis as a Pauli string (Free shown as I).
    pub fn basis_string(&self) -> PauliString {
        let (mut x, mut z) = (0u64, 0u64);
        for (q, b) in self.basis.iter().enumerate() {
            match b {
                Basis::X => x |= 1 << q,
                Basis::Y => {
                    x |= 1 << q;
                    z |= 1 << q
                }
                Basis::Z => z |= 1 << q,
                Basis::Free => {}
            }
        }
        PauliString {
            n_qubits: self.basis.len() as u32,
            x,
            z,
        }
    }
}

/// Greedy first-fit partition of the non-identity terms into qubit-wise
/// commuting groups, visiting terms by descending |w| (ties in canonical
/// string order).
pub fn qubitwise_commuting_groups(h: &QubitHamiltonian) -> Vec<MeasurementGroup> {
    let mut order: Vec<usize> = (0..h.len())
        .filter(|&i| !h.terms[i].1.is_identity())
        .collect();
    order.sort_by(|&a, &b| {
        let (ca, pa) = &h.terms[a];
        let (cb, pb) = &h.terms[b];
        cb.abs().total_cmp(&ca.abs()).then_with(|| pa.cmp(pb))
    });
    // (members, union string) per group
    let mut groups: Vec<(Vec<usize>, PauliString)> = Vec::new();
    for i in order {
        let p = h.terms[i].1;
        match groups.iter_mut().find(|(_, g)| g.qubitwise_commutes(&p)) {
            Some((members, g)) => {
                members.push(i);
                g.x |= p.x;
                g.z |= p.z;
            }
            None => groups.push((vec![i], p)),
        }
    }
    groups
        .into_iter()
        .map(|(members, g)| MeasurementGroup {
            members,
            basis: (0..h.n_qubits())
                .map(|q| match g.get(q) {
                    Pauli::I => Basis::Free,
                    Pauli::X => Basis::X,
                    Pauli::Y => Basis::Y,
                    Pauli::Z => Basis::Z,
                })
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    Uniform,
    Weight,
    WeightSqrtVariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotAllocation {
    /// Aligned with the Hamiltonian's terms; the identity term gets 0.
    pub shots: Vec<u64>,
    /// Σ w_i² V_i / N_i, with V_i = 1 when no variances were supplied.
    pub predicted_mse: f64,
}

/// Splits `total` shots over the non-identity terms.
///
/// Shares follow the mode (1, |w_i| or |w_i|·√V_i), are rounded by largest
/// remainder so they sum to `total` exactly, and every term gets at least one
/// shot.
pub fn allocate_shots(
    h: &QubitHamiltonian,
    total: u64,
    mode: AllocationMode,
    variances: Option<&[f64]>,
) -> Result<ShotAllocation> {
    let active: Vec<usize> = (0..h.len())
        .filter(|&i| !h.terms[i].1.is_identity())
        .collect();
    if active.is_empty() {
        return Err(Error::Empty("Hamiltonian has no non-identity terms"));
    }
    if (total as usize) < active.len() {
        return Err(Error::TooFewShots {
            total,
            terms: active.len(),
        });
    }
    let var = |i: usize| -> Result<f64> {
        match variances {
            Some(v) if v.len() == h.len() => Ok(v[i].max(0.0)),
            Some(v) => Err(Error::SizeMismatch {
                expected: h.len(),
                found: v.len(),
            }),
            None => Ok(1.0),
        }
    };
    if mode == AllocationMode::WeightSqrtVariance && variances.is_none() {
        return Err(Error::InvalidArgument(
            "variance-weighted allocation needs variances".into(),
        ));
    }
    let mut weights = Vec::with_capacity(active.len());
    for &i in &active {
        let w = h.terms[i].0.abs();
        weights.push(match mode {
            AllocationMode::Uniform => 1.0,
            AllocationMode::Weight => w,
            AllocationMode::WeightSqrtVariance => w * var(i)?.sqrt(),
        });
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    let wsum: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| total as f64 * w / wsum).collect();
    let mut alloc: Vec<u64> = ideal.iter().map(|t| t.floor() as u64).collect();
    let assigned: u64 = alloc.iter().sum();
    let mut by_remainder: Vec<usize> = (0..alloc.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in by_remainder.iter().take((total - assigned) as usize) {
        alloc[k] += 1;
    }
    while let Some(k) = alloc.iter().position(|&n| n == 0) {
        let donor = (0..alloc.len())
            .max_by(|&a, &b| alloc[a].cmp(&alloc[b]).then(b.cmp(&a)))
            .expect("nonempty");
        alloc[donor] -= 1;
        alloc[k] += 1;
    }
    let mut shots = vec![0u64; h.len()];
    let mut mse = 0.0;
    for (&i, &n) in active.iter().zip(&alloc) {
        shots[i] = n;
        mse += h.terms[i].0.powi(2) * var(i)? / n as f64;
    }
    Ok(ShotAllocation {
        shots,
        predicted_mse: mse,
    })
}

/// Total shots the optimal allocation N_i ∝ |w_i|√V_i needs for root
/// mean-squared error `eps`: (Σ|w_i|√V_i)² / ε².
pub fn optimal_total_shots(h: &QubitHamiltonian, eps: f64, variances: &[f64]) -> Result<f64> {
    if variances.len() != h.len() {
        return Err(Error::SizeMismatch {
            expected: h.len(),
            found: variances.len(),
        });
    }
    let s: f64 = h
        .terms
        .iter()
        .zip(variances)
        .filter(|((_, p), _)| !p.is_identity())
        .map(|((c, _), v)| c.abs() * v.max(0.0).sqrt())
        .sum();
    Ok((s / eps).powi(2))
}

/// Worst-case bound (Σ|w_i| / ε)² on the optimal total.
pub fn global_shot_bound(h: &QubitHamiltonian, eps: f64) -> f64 {
    (h.one_norm() / eps).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn multiplication_table() {
        assert_eq!(pauli_multiply(&ps("X"), &ps("X")).unwrap(), (Phase::ONE, ps("I")));
        assert_eq!(pauli_multiply(&ps("X"), &ps("Y")).unwrap(), (Phase::I, ps("Z")));
        assert_eq!(pauli_multiply(&ps("Y"), &ps("X")).unwrap(), (Phase::MINUS_I, ps("Z")));
        assert_eq!(pauli_multiply(&ps("Z"), &ps("X")).unwrap(), (Phase::I, ps("Y")));
        assert_eq!(
            pauli_multiply(&ps("XZ"), &ps("YZ")).unwrap(),
            (Phase::I, ps("ZI"))
        );
        assert!(pauli_multiply(&ps("X"), &ps("XX")).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let p = ps("XZIY");
        assert_eq!(p.label(), "XZIY");
        assert_eq!(p.get(0), Pauli::X);
        assert_eq!(p.get(3), Pauli::Y);
        assert_eq!(p.weight(), 3);
        assert!("XQ".parse::<PauliString>().is_err());
        assert!(PauliString::new(2, 0b100, 0).is_err());
    }

    #[test]
    fn canonical_order() {
        let mut v = vec![ps("ZI"), ps("XY"), ps("IZ"), ps("XI")];
        v.sort();
        assert_eq!(v, vec![ps("IZ"), ps("XI"), ps("XY"), ps("ZI")]);
    }

    #[test]
    fn ladder_strings() {
        let a = jw_ladder(0, 1, Ladder::Annihilate).unwrap();
        assert_eq!(a, vec![(c(0.5, 0.0), ps("X")), (c(0.0, 0.5), ps("Y"))]);
        let cr = jw_ladder(2, 3, Ladder::Create).unwrap();
        assert_eq!(cr[0].1, ps("ZZX"));
        assert_eq!(cr[1].1, ps("ZZY"));
        assert_eq!(cr[1].0, c(0.0, -0.5));
        assert!(jw_ladder(3, 3, Ladder::Create).is_err());
    }

    #[test]
    fn number_operator() {
        for p in 0..3 {
            let mut n = &ladder_sum(p, 3, Ladder::Create) * &ladder_sum(p, 3, Ladder::Annihilate);
            n.simplify(0.0);
            let mut expected = PauliSum::identity(3).scaled(c(0.5, 0.0));
            expected.add_term(c(-0.5, 0.0), PauliString::single(3, p, Pauli::Z).unwrap());
            assert_eq!(n, expected);
        }
    }

    #[test]
    fn canonical_anticommutation() {
        let n = 4;
        for p in 0..n {
            for q in 0..n {
                let ap = ladder_sum(p, n, Ladder::Annihilate);
                let aq = ladder_sum(q, n, Ladder::Annihilate);
                let cq = ladder_sum(q, n, Ladder::Create);
                let mut acomm = &ap * &cq;
                acomm.add(&(&cq * &ap));
                acomm.simplify(0.0);
                let expected = if p == q {
                    PauliSum::identity(n)
                } else {
                    PauliSum::zero(n)
                };
                assert_eq!(acomm, expected, "{{a_{p}, a_{q}†}}");
                let mut aa = &ap * &aq;
                aa.add(&(&aq * &ap));
                aa.simplify(0.0);
                assert!(aa.is_empty(), "{{a_{p}, a_{q}}}");
            }
        }
    }

    #[test]
    fn grouping_examples() {
        let h = QubitHamiltonian::new(
            2,
            vec![(0.5, ps("ZZ")), (0.3, ps("ZI")), (0.2, ps("XI")), (1.0, ps("II"))],
            0.0,
        )
        .unwrap();
        let groups = qubitwise_commuting_groups(&h);
        assert_eq!(groups.len(), 2);
        let label = |i: usize| h.terms()[i].1.label();
        let g0: Vec<String> = groups[0].members.iter().map(|&i| label(i)).collect();
        assert_eq!(g0, vec!["ZZ", "ZI"]);
        assert_eq!(groups[1].members.iter().map(|&i| label(i)).collect::<Vec<_>>(), vec!["XI"]);
        assert_eq!(groups[0].basis, vec![Basis::Z, Basis::Z]);
        assert_eq!(groups[1].basis, vec![Basis::X, Basis::Free]);
    }

    #[test]
    fn all_z_single_group() {
        let terms: Vec<(f64, PauliString)> = (1u64..32)
            .map(|z| (z as f64 * 0.1, PauliString::new(5, 0, z).unwrap()))
            .collect();
        let h = QubitHamiltonian::new(5, terms, 0.0).unwrap();
        assert_eq!(qubitwise_commuting_groups(&h).len(), 1);
    }

    #[test]
    fn allocation_examples() {
        let h = QubitHamiltonian::new(1, vec![(1.0, ps("X")), (-1.0, ps("Z"))], 0.0).unwrap();
        let a = allocate_shots(&h, 100, AllocationMode::Weight, None).unwrap();
        assert_eq!(a.shots, vec![50, 50]);
        let h = QubitHamiltonian::new(1, vec![(3.0, ps("X")), (1.0, ps("Z"))], 0.0).unwrap();
        let a = allocate_shots(&h, 100, AllocationMode::Weight, None).unwrap();
        assert_eq!(a.shots, vec![75, 25]);
        assert!((a.predicted_mse - (9.0 / 75.0 + 1.0 / 25.0)).abs() < 1e-15);
        assert!(matches!(
            allocate_shots(&h, 1, AllocationMode::Uniform, None),
            Err(Error::TooFewShots { .. })
        ));
        assert!(allocate_shots(&h, 10, AllocationMode::WeightSqrtVariance, None).is_err());
        // zero variance still gets a shot
        let a = allocate_shots(&h, 10, AllocationMode::WeightSqrtVariance, Some(&[1.0, 0.0]))
            .unwrap();
        assert_eq!(a.shots, vec![9, 1]);
    }

    fn arb_hamiltonian() -> impl Strategy<Value = QubitHamiltonian> {
        prop::collection::vec((-2.0f64..2.0, 0u64..64, 0u64..64), 1..30).prop_map(|terms| {
            QubitHamiltonian::new(
                6,
                terms
                    .into_iter()
                    .map(|(c, x, z)| (c, PauliString::new(6, x, z).unwrap())),
                1e-12,
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn groups_are_sound(h in arb_hamiltonian()) {
            let groups = qubitwise_commuting_groups(&h);
            let mut seen = vec![0; h.len()];
            for g in &groups {
                let basis = g.basis_string();
                for (k, &i) in g.members.iter().enumerate() {
                    seen[i] += 1;
                    let p = h.terms()[i].1;
                    prop_assert!(basis.qubitwise_commutes(&p));
                    for &j in &g.members[..k] {
                        prop_assert!(p.qubitwise_commutes(&h.terms()[j].1));
                    }
                }
            }
            for (i, (_, p)) in h.terms().iter().enumerate() {
                prop_assert_eq!(seen[i], if p.is_identity() { 0 } else { 1 });
            }
        }

        #[test]
        fn allocation_conserves_total(h in arb_hamiltonian(), extra in 0u64..10_000, mode in 0..3usize) {
            let k = h.terms().iter().filter(|(_, p)| !p.is_identity()).count() as u64;
            prop_assume!(k > 0);
            let total = k + extra;
            let variances: Vec<f64> = (0..h.len()).map(|i| (i as f64 * 0.37).sin().abs()).collect();
            let mode = [AllocationMode::Uniform, AllocationMode::Weight, AllocationMode::WeightSqrtVariance][mode];
            let a = allocate_shots(&h, total, mode, Some(&variances)).unwrap();
            prop_assert_eq!(a.shots.iter().sum::<u64>(), total);
            for ((_, p), n) in h.terms().iter().zip(&a.shots) {
                prop_assert!(p.is_identity() || *n >= 1);
            }
        }

        #[test]
        fn optimal_shots_respect_global_bound(h in arb_hamiltonian(), eps in 1e-3f64..1.0, seed in 0u64..1000) {
            let variances: Vec<f64> = (0..h.len())
                .map(|i| ((i as u64 + seed) as f64 * 0.7).cos().powi(2))
                .collect();
            let n_opt = optimal_total_shots(&h, eps, &variances).unwrap();
            prop_assert!(n_opt <= global_shot_bound(&h, eps) * (1.0 + 1e-12));
            // The optimal allocation reaches eps² at that total (up to rounding).
            let total = n_opt.ceil() as u64;
            let k = h.terms().iter().filter(|(_, p)| !p.is_identity()).count() as u64;
            prop_assume!(total >= 100 * k && total < 1_000_000_000);
            let a = allocate_shots(&h, total, AllocationMode::WeightSqrtVariance, Some(&variances)).unwrap();
            prop_assert!(a.predicted_mse <= eps * eps * 1.05);
        }
    }
}
