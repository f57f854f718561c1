//! Sample-based quantum diagonalization toolkit.
//!
//! The crate covers the whole pipeline used to study sampling-based
//! ground-state estimation for small molecules:
//!
//! * [`fcidump`] reads active-space integrals (the only chemistry input).
//! * [`determinant`] holds bitmask Slater determinants, Slater–Condon matrix
//!   elements and subspace projection.
//! * [`pauli`] maps the Hamiltonian to qubits (Jordan–Wigner), groups
//!   qubit-wise commuting terms and allocates shots.
//! * [`statevector`] is a dense simulator with Pauli rotations, exact and
//!   shot-based expectations, a UCCSD ansatz and a sequential optimizer.
//! * [`sampling`] draws computational-basis shots, injects readout flips and
//!   filters symmetry-violating strings.
//! * [`qsci`] and [`sqd`] build subspaces from samples and diagonalize them.
//! * [`eigen`] provides dense and Davidson lowest-eigenpair solvers.
//! * [`coupon`] estimates how many shots it takes to see every determinant.
//!
//! # Conventions
//!
//! Spin orbitals are ordered in blocks: qubits `0..n_orb` are the α orbitals
//! and qubits `n_orb..2*n_orb` the β orbitals. Bit `q` of a basis-state index
//! is qubit `q`. Bitstrings are displayed with qubit 0 first, so `"1001"` for
//! two orbitals means α in orbital 0 and β in orbital 1.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupon;
pub mod determinant;
pub mod eigen;
mod error;
pub mod fcidump;
pub mod pauli;
pub mod qsci;
pub mod rng;
pub mod sampling;
pub mod sqd;
pub mod statevector;

pub use determinant::{Determinant, ProjectedHamiltonian, Subspace};
pub use error::{Error, Result};
pub use fcidump::MolecularIntegrals;
pub use pauli::{MeasurementGroup, PauliString, QubitHamiltonian};
pub use sampling::{EmpiricalDistribution, NoiseModel};
pub use statevector::StateVector;

/// Chemical accuracy threshold in Hartree.
pub const CHEMICAL_ACCURACY: f64 = 1.6e-3;
