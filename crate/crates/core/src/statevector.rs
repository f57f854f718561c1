//! Dense statevector simulation.
//!
//! Rotations follow e^{−iθP} = cos θ − i sin θ P. Bit `q` of an amplitude
//! index is qubit `q`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::determinant::{enumerate_fci_space, project_hamiltonian};
use crate::eigen::lowest_eigenpair;
use crate::pauli::{jw_ladder, Basis, Ladder, Phase, PauliSum};
use crate::rng::derive_seed;
use crate::sampling::{sample_shots, NoiseModel};
use crate::{
    Determinant, Error, MeasurementGroup, MolecularIntegrals, PauliString, QubitHamiltonian,
    Result, Subspace,
};

/// Norm tolerance for constructed states.
pub const NORM_TOL: f64 = 1e-10;
/// Largest simulated register.
pub const MAX_STATE_QUBITS: usize = 26;
/// Default cap on the full-CI dimension.
pub const FCI_DIM_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_qubits(n: usize) -> Result<()> {
    if n > MAX_STATE_QUBITS {
        return Err(Error::TooLarge {
            dim: n,
            limit: MAX_STATE_QUBITS,
        });
    }
    Ok(())
}

/// i^{#Y} (−1)^{popcount(i & z)}: the phase P picks up on |i⟩.
#[inline]
fn pauli_phase(y_phase: Complex64, z: u64, i: u64) -> Complex64 {
    if (i & z).count_ones().is_multiple_of(2) {
        y_phase
    } else {
        -y_phase
    }
}

impl StateVector {
    /// Takes amplitudes that must already be normalized.
    pub fn new(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_qubits(n_qubits)?;
        if amps.len() != 1 << n_qubits {
            return Err(Error::SizeMismatch {
                expected: 1 << n_qubits,
                found: amps.len(),
            });
        }
        let s = Self { n_qubits, amps };
        let norm = s.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "state norm² {norm} differs from 1"
            )));
        }
        Ok(s)
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(n_qubits: usize, mut amps: Vec<Complex64>) -> Result<Self> {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("zero state".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Self::new(n_qubits, amps)
    }

    /// Computational basis state |bits⟩.
    pub fn basis(n_qubits: usize, bits: u64) -> Result<Self> {
        check_qubits(n_qubits)?;
        if bits >> n_qubits != 0 {
            return Err(Error::OutOfRange {
                index: bits as usize,
                limit: 1 << n_qubits,
            });
        }
        let mut amps = vec![Complex64::default(); 1 << n_qubits];
        amps[bits as usize] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: u64) -> Complex64 {
        self.amps[index as usize]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.check_size(other.n_qubits)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    fn check_size(&self, n: usize) -> Result<()> {
        if n != self.n_qubits {
            return Err(Error::SizeMismatch {
                expected: self.n_qubits,
                found: n,
            });
        }
        Ok(())
    }

    /// P|s⟩.
    pub fn apply_pauli(&self, p: &PauliString) -> Result<StateVector> {
        self.check_size(p.n_qubits())?;
        let y = Phase::I_POWERS[(p.y_count() % 4) as usize];
        let mut out = vec![Complex64::default(); self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let i = i as u64;
            out[(i ^ p.x_mask()) as usize] = pauli_phase(y, p.z_mask(), i) * a;
        }
        Ok(StateVector {
            n_qubits: self.n_qubits,
            amps: out,
        })
    }

    /// In-place e^{−iθP}.
    pub fn apply_pauli_rotation(&mut self, p: &PauliString, theta: f64) -> Result<()> {
        self.check_size(p.n_qubits())?;
        let (c, s) = (theta.cos(), theta.sin());
        let y = Phase::I_POWERS[(p.y_count() % 4) as usize];
        let (x, z) = (p.x_mask(), p.z_mask());
        let mis = Complex64::new(0.0, -s);
        if x == 0 {
            for (i, a) in self.amps.iter_mut().enumerate() {
                *a = *a * c + mis * pauli_phase(y, z, i as u64) * *a;
            }
            return Ok(());
        }
        let top = 1u64 << (63 - x.leading_zeros());
        for i in 0..self.amps.len() as u64 {
            if i & top != 0 {
                continue;
            }
            let j = i ^ x;
            let (ai, aj) = (self.amps[i as usize], self.amps[j as usize]);
            // (P s)[j] = phase(i) s[i], (P s)[i] = phase(j) s[j]
            self.amps[i as usize] = ai * c + mis * pauli_phase(y, z, j) * aj;
            self.amps[j as usize] = aj * c + mis * pauli_phase(y, z, i) * ai;
        }
        Ok(())
    }

    /// In-place 2×2 unitary `m` (row-major) on `qubit`.
    pub fn apply_single_qubit(&mut self, qubit: usize, m: [[Complex64; 2]; 2]) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::OutOfRange {
                index: qubit,
                limit: self.n_qubits,
            });
        }
        let b = 1usize << qubit;
        for i in 0..self.amps.len() {
            if i & b == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | b]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | b] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
        Ok(())
    }

    /// ⟨s|P|s⟩.
    pub fn expectation_pauli(&self, p: &PauliString) -> Result<Complex64> {
        self.check_size(p.n_qubits())?;
        let y = Phase::I_POWERS[(p.y_count() % 4) as usize];
        let (x, z) = (p.x_mask(), p.z_mask());
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let i = i as u64;
                self.amps[(i ^ x) as usize].conj() * pauli_phase(y, z, i) * a
            })
            .sum())
    }

    /// Σ w_i ⟨s|P_i|s⟩; the imaginary residue is discarded.
    pub fn expectation(&self, h: &QubitHamiltonian) -> Result<f64> {
        self.check_size(h.n_qubits())?;
        let parts: Result<Vec<f64>> = h
            .terms()
            .par_iter()
            .map(|(w, p)| Ok(w * self.expectation_pauli(p)?.re))
            .collect();
        Ok(parts?.iter().sum())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let pairs: Vec<[f64; 2]> = self.amps.iter().map(|a| [a.re, a.im]).collect();
        serde_json::json!(pairs)
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let pairs: Vec<[f64; 2]> = serde_json::from_value(v.clone())
            .map_err(|e| Error::InvalidArgument(format!("bad state JSON: {e}")))?;
        if !pairs.len().is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "state length {} is not a power of two",
                pairs.len()
            )));
        }
        let n = pairs.len().trailing_zeros() as usize;
        Self::new(n, pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect())
    }
}

impl Phase {
    const I_POWERS: [Complex64; 4] = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
}

/// Hamiltonian regrouped by X-mask with its diagonal factors tabulated, for
/// repeated exact expectations on one register size.
#[derive(Debug, Clone)]
pub struct CompiledHamiltonian {
    n_qubits: usize,
    constant: f64,
    blocks: Vec<(u64, Vec<Complex64>)>,
}

impl CompiledHamiltonian {
    pub fn new(h: &QubitHamiltonian) -> Result<Self> {
        check_qubits(h.n_qubits())?;
        let dim = 1usize << h.n_qubits();
        let mut by_x: std::collections::BTreeMap<u64, Vec<(f64, PauliString)>> = Default::default();
        let mut constant = 0.0;
        for (w, p) in h.terms() {
            if p.is_identity() {
                constant += w;
            } else {
                by_x.entry(p.x_mask()).or_default().push((*w, *p));
            }
        }
        let blocks = by_x
            .into_par_iter()
            .map(|(x, terms)| {
                let mut d = vec![Complex64::default(); dim];
                for (w, p) in terms {
                    let y = Phase::I_POWERS[(p.y_count() % 4) as usize] * w;
                    for (i, v) in d.iter_mut().enumerate() {
                        *v += pauli_phase(y, p.z_mask(), i as u64);
                    }
                }
                (x, d)
            })
            .collect();
        Ok(Self {
            n_qubits: h.n_qubits(),
            constant,
            blocks,
        })
    }

    pub fn expectation(&self, s: &StateVector) -> Result<f64> {
        s.check_size(self.n_qubits)?;
        let a = &s.amps;
        // Collected before summing so the reduction order never depends on
        // thread scheduling.
        let parts: Vec<f64> = self
            .blocks
            .par_iter()
            .map(|(x, d)| {
                a.iter()
                    .zip(d)
                    .enumerate()
                    .map(|(i, (ai, di))| (a[i ^ *x as usize].conj() * di * ai).re)
                    .sum::<f64>()
            })
            .collect();
        Ok(self.constant + parts.iter().sum::<f64>())
    }
}

/// Full-CI ground state in the determinant basis and embedded on qubits.
#[derive(Debug, Clone)]
pub struct FciGroundState {
    /// Includes the core energy.
    pub energy: f64,
    pub space: Subspace,
    /// Aligned with `space`; the Hartree–Fock coefficient is non-negative.
    pub coefficients: Vec<f64>,
    pub state: StateVector,
}

pub fn fci_ground_state(ints: &MolecularIntegrals) -> Result<FciGroundState> {
    fci_ground_state_with_limit(ints, FCI_DIM_LIMIT)
}

pub fn fci_ground_state_with_limit(ints: &MolecularIntegrals, limit: usize) -> Result<FciGroundState> {
    let n = ints.n_orbitals();
    check_qubits(2 * n)?;
    let space = enumerate_fci_space(n, ints.n_alpha(), ints.n_beta())?;
    if space.len() > limit {
        return Err(Error::TooLarge {
            dim: space.len(),
            limit,
        });
    }
    let h = project_hamiltonian(&space, ints)?;
    let pair = lowest_eigenpair(&h)?;
    let mut coefficients = pair.vector;
    let hf = Determinant::hartree_fock(ints.n_alpha(), ints.n_beta());
    if let Some(k) = space.position(&hf) {
        if coefficients[k] < 0.0 {
            coefficients.iter_mut().for_each(|c| *c = -*c);
        }
    }
    let mut amps = vec![Complex64::default(); 1 << (2 * n)];
    for (d, c) in space.iter().zip(&coefficients) {
        amps[d.index(n) as usize] = Complex64::new(*c, 0.0);
    }
    Ok(FciGroundState {
        energy: pair.value + ints.core_energy(),
        space,
        coefficients,
        state: StateVector::normalized(2 * n, amps)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationKind {
    SingleAlpha,
    SingleBeta,
    DoubleAlpha,
    DoubleBeta,
    DoubleAlphaBeta,
}

/// Excitation between spin orbitals (qubit indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excitation {
    pub kind: ExcitationKind,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
}

/// JW image of i(T − T†) for one excitation operator T.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub excitation: Excitation,
    pub terms: Vec<(f64, PauliString)>,
    /// All strings commute, so the exponential factorizes exactly. Otherwise
    /// it is applied as a first-order product in term order.
    pub commuting: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    pub generators: Vec<Generator>,
    pub params: Vec<f64>,
}

impl Ansatz {
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Applies e^{−iθ_k G_k} for k = 0, 1, … in order.
    pub fn apply(&self, s: &mut StateVector) -> Result<()> {
        self.apply_range(s, 0, self.len())
    }

    fn apply_range(&self, s: &mut StateVector, start: usize, end: usize) -> Result<()> {
        for k in start..end {
            self.apply_one(s, k, self.params[k])?;
        }
        Ok(())
    }

    fn apply_one(&self, s: &mut StateVector, k: usize, theta: f64) -> Result<()> {
        if theta != 0.0 {
            for (c, p) in &self.generators[k].terms {
                s.apply_pauli_rotation(p, theta * c)?;
            }
        }
        Ok(())
    }
}

fn ladder(p: usize, n: usize, kind: Ladder) -> PauliSum {
    PauliSum::from_terms(n, jw_ladder(p, n, kind).expect("mode in range"))
}

fn generator(n_qubits: usize, excitation: Excitation) -> Result<Generator> {
    // T = a†_to… a_from… with creators in ascending order, annihilators in
    // descending order.
    let mut t = PauliSum::identity(n_qubits);
    for &a in &excitation.to {
        t = &t * &ladder(a, n_qubits, Ladder::Create);
    }
    for &i in excitation.from.iter().rev() {
        t = &t * &ladder(i, n_qubits, Ladder::Annihilate);
    }
    let mut td = PauliSum::identity(n_qubits);
    for &i in &excitation.from {
        td = &td * &ladder(i, n_qubits, Ladder::Create);
    }
    for &a in excitation.to.iter().rev() {
        td = &td * &ladder(a, n_qubits, Ladder::Annihilate);
    }
    let mut g = t;
    g.add(&td.scaled(Complex64::new(-1.0, 0.0)));
    let mut g = g.scaled(Complex64::new(0.0, 1.0));
    g.simplify(1e-14);
    let h = QubitHamiltonian::from_pauli_sum(&g, 1e-14)?;
    let terms = h.terms().to_vec();
    let commuting = terms
        .iter()
        .enumerate()
        .all(|(i, (_, p))| terms[..i].iter().all(|(_, q)| p.commutes_with(q)));
    Ok(Generator {
        excitation,
        terms,
        commuting,
    })
}

/// Spin-preserving singles and doubles out of the Hartree–Fock determinant,
/// with all parameters zero. Order: α singles, β singles, αα doubles, ββ
/// doubles, αβ doubles, each ascending in (occupied, virtual) indices.
pub fn uccsd_excitations(n_orb: usize, n_alpha: usize, n_beta: usize) -> Result<Ansatz> {
    if n_alpha > n_orb || n_beta > n_orb {
        return Err(Error::InvalidSector {
            n_orb,
            n_alpha,
            n_beta,
        });
    }
    let nq = 2 * n_orb;
    let occ = |ne: usize, off: usize| (0..ne).map(move |i| i + off);
    let virt = |ne: usize, off: usize| (ne..n_orb).map(move |a| a + off);
    let mut ex = Vec::new();
    for (kind, ne, off) in [
        (ExcitationKind::SingleAlpha, n_alpha, 0),
        (ExcitationKind::SingleBeta, n_beta, n_orb),
    ] {
        for i in occ(ne, off) {
            for a in virt(ne, off) {
                ex.push(Excitation {
                    kind,
                    from: vec![i],
                    to: vec![a],
                });
            }
        }
    }
    for (kind, ne, off) in [
        (ExcitationKind::DoubleAlpha, n_alpha, 0),
        (ExcitationKind::DoubleBeta, n_beta, n_orb),
    ] {
        for i in occ(ne, off) {
            for j in occ(ne, off).filter(|&j| j > i) {
                for a in virt(ne, off) {
                    for b in virt(ne, off).filter(|&b| b > a) {
                        ex.push(Excitation {
                            kind,
                            from: vec![i, j],
                            to: vec![a, b],
                        });
                    }
                }
            }
        }
    }
    for i in occ(n_alpha, 0) {
        for j in occ(n_beta, n_orb) {
            for a in virt(n_alpha, 0) {
                for b in virt(n_beta, n_orb) {
                    ex.push(Excitation {
                        kind: ExcitationKind::DoubleAlphaBeta,
                        from: vec![i, j],
                        to: vec![a, b],
                    });
                }
            }
        }
    }
    let generators: Vec<Generator> = ex
        .into_par_iter()
        .map(|e| generator(nq, e))
        .collect::<Result<_>>()?;
    let params = vec![0.0; generators.len()];
    Ok(Ansatz { generators, params })
}

#[derive(Debug, Clone, Copy)]
pub struct VqeOptions {
    pub max_sweeps: usize,
    /// Stop once a full sweep lowers the energy by less than this.
    pub tol: f64,
}

impl Default for VqeOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 3,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeResult {
    pub params: Vec<f64>,
    pub energy: f64,
    pub initial_energy: f64,
    /// Energy after each completed sweep.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Coefficients (a0, a1, b1, a2, b2) of
/// E(t) = a0 + a1 cos t + b1 sin t + a2 cos 2t + b2 sin 2t
/// from samples at t_j = 2πj/5.
fn fit_trig2(e: &[f64; 5]) -> [f64; 5] {
    let mut c = [0.0; 5];
    for (j, v) in e.iter().enumerate() {
        let t = 2.0 * std::f64::consts::PI * j as f64 / 5.0;
        c[0] += v / 5.0;
        c[1] += 2.0 * v * t.cos() / 5.0;
        c[2] += 2.0 * v * t.sin() / 5.0;
        c[3] += 2.0 * v * (2.0 * t).cos() / 5.0;
        c[4] += 2.0 * v * (2.0 * t).sin() / 5.0;
    }
    c
}

fn trig2(c: &[f64; 5], t: f64) -> f64 {
    c[0] + c[1] * t.cos() + c[2] * t.sin() + c[3] * (2.0 * t).cos() + c[4] * (2.0 * t).sin()
}

/// Global minimizer of a degree-two trigonometric polynomial on [−π, π).
fn argmin_trig2(c: &[f64; 5]) -> f64 {
    let grid = 720;
    let mut best = 0.0;
    let mut best_e = trig2(c, 0.0);
    for k in 0..grid {
        let t = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / grid as f64;
        let e = trig2(c, t);
        if e < best_e {
            best_e = e;
            best = t;
        }
    }
    let mut t = best;
    for _ in 0..30 {
        let d1 = -c[1] * t.sin() + c[2] * t.cos() - 2.0 * c[3] * (2.0 * t).sin()
            + 2.0 * c[4] * (2.0 * t).cos();
        let d2 = -c[1] * t.cos() - c[2] * t.sin() - 4.0 * c[3] * (2.0 * t).cos()
            - 4.0 * c[4] * (2.0 * t).sin();
        if d2 <= 0.0 {
            break;
        }
        let step = d1 / d2;
        t -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    if trig2(c, t) <= best_e {
        t
    } else {
        best
    }
}

/// Sequential single-parameter minimization. The energy as a function of one
/// generator angle is a trigonometric polynomial of degree two; it is
/// sampled at five equally spaced angles, fitted exactly and the parameter
/// is moved to its minimizer.
pub fn vqe_optimize(
    h: &QubitHamiltonian,
    ansatz: &Ansatz,
    reference: &StateVector,
    opts: &VqeOptions,
) -> Result<VqeResult> {
    if opts.max_sweeps == 0 {
        return Err(Error::InvalidArgument("need at least one sweep".into()));
    }
    if ansatz.params.len() != ansatz.generators.len() {
        return Err(Error::SizeMismatch {
            expected: ansatz.generators.len(),
            found: ansatz.params.len(),
        });
    }
    let ch = CompiledHamiltonian::new(h)?;
    let mut work = ansatz.clone();
    let energy_of = |a: &Ansatz| -> Result<f64> {
        let mut s = reference.clone();
        a.apply(&mut s)?;
        ch.expectation(&s)
    };
    let initial_energy = energy_of(&work)?;
    let mut energy = initial_energy;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_sweeps {
        let start = energy;
        let mut prefix = reference.clone();
        for k in 0..work.len() {
            let theta0 = work.params[k];
            let mut e = [energy, 0.0, 0.0, 0.0, 0.0];
            for (j, ej) in e.iter_mut().enumerate().skip(1) {
                let t = theta0 + 2.0 * std::f64::consts::PI * j as f64 / 5.0;
                let mut s = prefix.clone();
                work.apply_one(&mut s, k, t)?;
                work.apply_range(&mut s, k + 1, work.len())?;
                *ej = ch.expectation(&s)?;
            }
            let c = fit_trig2(&e);
            let dt = argmin_trig2(&c);
            if trig2(&c, dt) < energy {
                work.params[k] = theta0 + dt;
                let mut s = prefix.clone();
                work.apply_range(&mut s, k, work.len())?;
                energy = ch.expectation(&s)?;
            }
            work.apply_one(&mut prefix, k, work.params[k])?;
        }
        trace.push(energy);
        if start - energy < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(VqeResult {
        params: work.params,
        energy,
        initial_energy,
        trace,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledEnergy {
    pub energy: f64,
    pub stderr: f64,
}

fn rotate_to_basis(s: &mut StateVector, basis: &[Basis]) -> Result<()> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let h = [
        [Complex64::new(r, 0.0), Complex64::new(r, 0.0)],
        [Complex64::new(r, 0.0), Complex64::new(-r, 0.0)],
    ];
    // H·S†
    let hs = [
        [Complex64::new(r, 0.0), Complex64::new(0.0, -r)],
        [Complex64::new(r, 0.0), Complex64::new(0.0, r)],
    ];
    for (q, b) in basis.iter().enumerate() {
        match b {
            Basis::X => s.apply_single_qubit(q, h)?,
            Basis::Y => s.apply_single_qubit(q, hs)?,
            Basis::Z | Basis::Free => {}
        }
    }
    Ok(())
}

/// Shot-based energy estimate. Each group's basis rotation is applied to a
/// copy of `s`, `shots_per_group` bitstrings are drawn (through `noise` if
/// given), and each member string is estimated by its mean parity over its
/// support. The standard error combines the per-term sample variances as if
/// the estimates were independent.
pub fn estimate_energy_by_sampling(
    s: &StateVector,
    h: &QubitHamiltonian,
    groups: &[MeasurementGroup],
    shots_per_group: usize,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<SampledEnergy> {
    s.check_size(h.n_qubits())?;
    let mut covered = vec![false; h.len()];
    for g in groups {
        for &i in &g.members {
            if i >= h.len() {
                return Err(Error::OutOfRange {
                    index: i,
                    limit: h.len(),
                });
            }
            covered[i] = true;
        }
    }
    if let Some(i) = (0..h.len()).find(|&i| !covered[i] && !h.terms()[i].1.is_identity()) {
        return Err(Error::InvalidArgument(format!(
            "term {} is not covered by any measurement group",
            h.terms()[i].1
        )));
    }
    let n = shots_per_group;
    let parts: Vec<(f64, f64)> = groups
        .par_iter()
        .enumerate()
        .map(|(gi, g)| -> Result<(f64, f64)> {
            let mut rotated = s.clone();
            rotate_to_basis(&mut rotated, &g.basis)?;
            let shots = sample_shots(&rotated, n, noise, derive_seed(seed, gi as u64))?;
            let (mut e, mut var) = (0.0, 0.0);
            for &i in &g.members {
                let (w, p) = &h.terms()[i];
                let support = p.support();
                let plus = shots
                    .iter()
                    .filter(|&&b| (b & support).count_ones() % 2 == 0)
                    .count();
                let mean = (2 * plus) as f64 / n as f64 - 1.0;
                e += w * mean;
                if n > 1 {
                    let sample_var = (1.0 - mean * mean) * n as f64 / (n - 1) as f64;
                    var += w * w * sample_var / n as f64;
                }
            }
            Ok((e, var))
        })
        .collect::<Result<_>>()?;
    let energy = h.identity_coefficient() + parts.iter().map(|p| p.0).sum::<f64>();
    let stderr = parts.iter().map(|p| p.1).sum::<f64>().sqrt();
    Ok(SampledEnergy { energy, stderr })
}
