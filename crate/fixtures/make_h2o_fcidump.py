"""Generate the H2O active-space FCIDUMP fixture (STO-3G, O 1s frozen, 8e/6o).

Requires PySCF. Run: python3 fixtures/make_h2o_fcidump.py
"""
from pyscf import gto, scf, mcscf, fci
from pyscf.tools import fcidump

mol = gto.M(
    atom="O 0.0000 0.0000 0.1125; H 0.0000 0.7938 -0.4500; H 0.0000 -0.7938 -0.4500",
    basis="sto-3g",
    unit="Angstrom",
    symmetry=False,
)
mf = scf.RHF(mol)
mf.conv_tol = 1e-12
mf.kernel()
print("E_HF (RHF canonical) =", mf.e_tot)

cas = mcscf.CASCI(mf, 6, 8)
h1, ecore = cas.get_h1eff()
h2 = cas.get_h2eff()
fcidump.from_integrals("h2o_sto3g_8e6o.fcidump", h1, h2, 6, 8, nuc=ecore, ms=0, tol=1e-15)
e, _ = fci.direct_spin1.kernel(h1, h2, 6, 8, ecore=ecore)
print("E_FCI(8e,6o) =", e)
