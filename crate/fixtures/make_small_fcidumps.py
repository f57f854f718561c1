"""Generate the small FCIDUMP fixtures used by the test suites.

Requires PySCF. Run: python3 fixtures/make_small_fcidumps.py
"""
from pyscf import gto, scf, mcscf, fci
from pyscf.tools import fcidump


def dump(name, atom, ncas, nelec, spin=0, charge=0):
    mol = gto.M(atom=atom, basis="sto-3g", spin=spin, charge=charge, verbose=0)
    mf = (scf.RHF(mol) if spin == 0 else scf.ROHF(mol)).run(conv_tol=1e-12)
    cas = mcscf.CASCI(mf, ncas, nelec)
    h1, ecore = cas.get_h1eff()
    h2 = cas.get_h2eff()
    fcidump.from_integrals(name, h1, h2, ncas, nelec, nuc=ecore, ms=spin, tol=1e-15)
    e, _ = fci.direct_spin1.kernel(h1, h2, ncas, nelec, ecore=ecore)
    print(f"{name}: E_HF={mf.e_tot:.10f} E_FCI={e:.10f}")


dump("h2_sto3g.fcidump", "H 0 0 0; H 0 0 0.74", 2, 2)
dump("h4_chain_sto3g.fcidump", "H 0 0 0; H 0 0 1.0; H 0 0 2.0; H 0 0 3.0", 4, 4)
dump("lihp_sto3g_3e4o.fcidump", "Li 0 0 0; H 0 0 1.6", 4, (2, 1), spin=1, charge=1)
