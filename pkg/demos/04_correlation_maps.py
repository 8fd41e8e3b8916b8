"""Connected spin-hole-magnon correlations of the 37-site triangular ground state.

Nearest neighbours are bunched (positive), next-nearest are suppressed.
"""
import numpy as np

from _common import shipped
from rydberg_tj.hamiltonian import build_tJ
from rydberg_tj.observables import com_distribution, relative_correlation_map
from rydberg_tj.spectra import lowest_eigenpairs

cfg = shipped("triangular37_ground.json")
psi = lowest_eigenpairs(build_tJ(cfg.geometry, cfg.basis, cfg.couplings), 1).state(0)
table = relative_correlation_map(psi, cfg.basis, cfg.geometry, connected=True)
r = np.array([np.hypot(*k) for k in table.keys]) / cfg.geometry.a
for shell in sorted(set(np.round(r, 3)))[:4]:
    v = table.values[np.isclose(r, shell, atol=1e-3)]
    print(f"|d|/a = {shell:.3f}: mean C = {v.mean():+.2e} over {len(v)} displacements")
print("COM total weight:", round(com_distribution(psi, cfg.basis, cfg.geometry).total, 12))
