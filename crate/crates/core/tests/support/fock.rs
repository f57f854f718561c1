//! Brute-force occupation-number oracle shared by integration tests.

use sqdkit::determinant::{enumerate_fci_space, project_hamiltonian};
use sqdkit::pauli::{build_qubit_hamiltonian, DEFAULT_CUTOFF};
use sqdkit::MolecularIntegrals;

/// Applies a_q (create = false) or a†_q to |occ⟩ with the Jordan–Wigner sign
/// (−1)^{occupied modes below q}.
pub fn ladder(occ: u64, q: usize, create: bool) -> Option<(f64, u64)> {
    let occupied = occ >> q & 1 == 1;
    if occupied == create {
        return None;
    }
    let sign = if (occ & ((1u64 << q) - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((sign, occ ^ 1 << q))
}

/// Dense Fock-space matrix of H built by acting with second-quantized
/// operators on every occupation vector.
pub fn fock_matrix(ints: &MolecularIntegrals) -> Vec<f64> {
    let n = ints.n_orbitals();
    let nq = 2 * n;
    let dim = 1usize << nq;
    let mut m = vec![0.0; dim * dim];
    for col in 0..dim as u64 {
        m[col as usize * dim + col as usize] += ints.core_energy();
        for s in 0..2 {
            for p in 0..n {
                for q in 0..n {
                    let h = ints.h1(p, q);
                    if h == 0.0 {
                        continue;
                    }
                    let Some((s1, k1)) = ladder(col, s * n + q, false) else { continue };
                    let Some((s2, k2)) = ladder(k1, s * n + p, true) else { continue };
                    m[k2 as usize * dim + col as usize] += h * s1 * s2;
                }
            }
        }
        for sg in 0..2 {
            for tau in 0..2 {
                for p in 0..n {
                    for q in 0..n {
                        for r in 0..n {
                            for s in 0..n {
                                let v = ints.eri(p, q, r, s);
                                if v == 0.0 {
                                    continue;
                                }
                                // a†_p a†_r a_s a_q, rightmost first
                                let Some((s1, k1)) = ladder(col, sg * n + q, false) else { continue };
                                let Some((s2, k2)) = ladder(k1, tau * n + s, false) else { continue };
                                let Some((s3, k3)) = ladder(k2, tau * n + r, true) else { continue };
                                let Some((s4, k4)) = ladder(k3, sg * n + p, true) else { continue };
                                m[k4 as usize * dim + col as usize] += 0.5 * v * s1 * s2 * s3 * s4;
                            }
                        }
                    }
                }
            }
        }
    }
    m
}

/// Largest entrywise gap between the Jordan–Wigner matrix and the Fock
/// oracle, and between the Slater–Condon projection (plus core energy) and
/// the matching sector block of the Jordan–Wigner matrix.
pub fn max_deviation(ints: &MolecularIntegrals) -> f64 {
    let n = ints.n_orbitals();
    let dim = 1usize << (2 * n);
    let h = build_qubit_hamiltonian(ints, DEFAULT_CUTOFF).unwrap();
    let jw = h.to_dense().unwrap();
    let fock = fock_matrix(ints);
    let mut worst: f64 = 0.0;
    for (a, b) in jw.iter().zip(&fock) {
        worst = worst.max((a.re - b).abs()).max(a.im.abs());
    }
    let space = enumerate_fci_space(n, ints.n_alpha(), ints.n_beta()).unwrap();
    let proj = project_hamiltonian(&space, ints).unwrap();
    for (i, di) in space.iter().enumerate() {
        for (j, dj) in space.iter().enumerate() {
            let core = if i == j { ints.core_energy() } else { 0.0 };
            let e = jw[di.index(n) as usize * dim + dj.index(n) as usize];
            worst = worst.max((proj.get(i, j) + core - e.re).abs()).max(e.im.abs());
        }
    }
    worst
}
