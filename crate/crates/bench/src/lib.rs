//! Shared inputs for the benchmarks.

use sqdkit::fcidump::read_fcidump;
use sqdkit::MolecularIntegrals;

/// Integrals from `fixtures/` at the workspace root.
pub fn fixture(name: &str) -> MolecularIntegrals {
    read_fcidump(format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR")))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn water() -> MolecularIntegrals {
    fixture("h2o_sto3g_8e6o.fcidump")
}
