"""Spin order around a single hole on a 13-site cluster.

With t > 0 the hole favours 120-degree order (peak at K); reversing the
hopping sign gives ferromagnetic order (peak at Gamma).
"""
import numpy as np

from rydberg_tj.geometry import brillouin_grid, build_triangular2d
from rydberg_tj.hamiltonian import CouplingSet, build_tJ
from rydberg_tj.hilbert import SectorBasis
from rydberg_tj.observables import hole_frame_nn, structure_factor, sx_correlation_matrix
from rydberg_tj.spectra import lowest_eigenpairs

c7 = build_triangular2d(7, 1.0).positions
ang = np.pi / 6 + np.arange(6) * np.pi / 3
g = build_triangular2d(13, 1.0, np.vstack([c7, np.sqrt(3) * np.c_[np.cos(ang), np.sin(ang)]]))
b = SectorBasis(13, 1, 6)
grid = brillouin_grid(1.0)
for mode in ("frustrated", "reversed"):
    psi = lowest_eigenpairs(build_tJ(g, b, CouplingSet(a_ref=1.0, sign_mode=mode)), 1).state(0)
    S = structure_factor(sx_correlation_matrix(psi, b), g, grid)
    print(f"{mode:>10}: S(Gamma) {S[grid.index_of('Γ')[0]]:.3f}  S(K) {S[grid.index_of('K')].mean():.3f}"
          f"  hole-frame nn x {hole_frame_nn(psi, b, g, 'x'):+.4f}")
