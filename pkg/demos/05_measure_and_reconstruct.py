"""Snapshot sampling in three imaging bases and recovery of pair correlators.

Each basis images one species; combining the three recovers spin-spin and
hole-spin correlations up to a single undetermined direction.
"""
import numpy as np

from rydberg_tj.hilbert import SectorBasis
from rydberg_tj.measurement import ErrorChannel, derive_error_matrix, pair_outcomes, sample_shots
from rydberg_tj.reconstruction import BASIS_ORDER, build_system, measured_pair_vector, reconstruct_pair_combos

np.set_printoptions(precision=3, suppress=True)
print("error matrix (rows down, up, hole, ground; columns L, g, S, P, S'):")
print(derive_error_matrix())

sys_ = build_system()
print("rank", sys_.rank, "null vector", sys_.null_vector + 0.0)

rng = np.random.default_rng(0)
b = SectorBasis(6, 1, 2)
psi = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
psi /= np.linalg.norm(psi)
per = {t: pair_outcomes(sample_shots(psi, b, t, n=20_000, seed=1), 1, 2) for t in BASIS_ORDER}
print(reconstruct_pair_combos(measured_pair_vector(per)))
noisy = sample_shots(psi, b, "hole", ErrorChannel(), n=5, seed=1)
print("five noisy hole-basis shots:\n", noisy.bits)
