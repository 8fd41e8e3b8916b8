"""Three-site plaquette checks built from the full operator machinery.

One hole on an equilateral triangle with hopping only. In a polarized
background the hole is a free particle with ``eps(k) = 2 t cos k``; with one
magnon the six states split into a spin triplet with the same band and a
spin singlet with the reversed band ``-2 t cos k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import build_triangular2d
from .hamiltonian import CouplingSet, build_tJ
from .hilbert import HOLE, SectorBasis

__all__ = [
    "PlaquetteReport",
    "plaquette_geometry",
    "plaquette_spectrum",
    "total_spin_squared",
    "effective_tunneling_sign",
    "MOMENTA",
]

MOMENTA = (0.0, 2 * np.pi / 3, -2 * np.pi / 3)
_SECTORS = ("polarized", "triplet", "singlet")


@dataclass(frozen=True)
class PlaquetteReport:
    sector: str
    momenta: tuple
    energies: np.ndarray  # numerical, sorted
    analytic: np.ndarray  # sorted
    max_error: float
    block_leak: float = 0.0


def plaquette_geometry(a: float = 1.0):
    pos = a * np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    return build_triangular2d(3, a, pos)


def _hopping(t, a=1.0):
    return CouplingSet(t_up=t, t_dn=t, J_perp=0.0, J_z=0.0, a_ref=a)


def total_spin_squared(basis: SectorBasis, a: float = 1.0) -> np.ndarray:
    """``S^2 = (3/4) N_spin + 2 sum_{i<j} S_i.S_j`` on the plaquette."""
    g = plaquette_geometry(a)
    heis = build_tJ(g, basis, CouplingSet(t_up=0.0, t_dn=0.0, J_perp=1.0, J_z=1.0, a_ref=a))
    n_spin = basis.n_sites - basis.n_holes
    return 0.75 * n_spin * np.eye(basis.dim) + 2 * heis.toarray()


def plaquette_spectrum(t: float, sector: str) -> PlaquetteReport:
    """Numerical plaquette energies in one sector, matched to ``+-2 t cos k``."""
    if sector not in _SECTORS:
        raise ValueError(f"sector must be one of {_SECTORS}")
    g = plaquette_geometry()
    band = np.array([2 * t * np.cos(k) for k in MOMENTA])
    if sector == "polarized":
        basis = SectorBasis(3, 1, 0)
        e = np.linalg.eigvalsh(build_tJ(g, basis, _hopping(t)).toarray())
        ana, leak = band, 0.0
    else:
        basis = SectorBasis(3, 1, 1)
        H = build_tJ(g, basis, _hopping(t)).toarray()
        S2 = total_spin_squared(basis)
        s2w, s2v = np.linalg.eigh(S2)
        target = 2.0 if sector == "triplet" else 0.0
        P = s2v[:, np.abs(s2w - target) < 1e-9]
        Q = s2v[:, np.abs(s2w - target) >= 1e-9]
        leak = float(np.abs(P.T @ H @ Q).max()) if Q.size else 0.0
        e = np.linalg.eigvalsh(P.T @ H @ P)
        ana = band if sector == "triplet" else -band
    e = np.sort(e)
    ana = np.sort(ana)
    return PlaquetteReport(sector, MOMENTA, e, ana, float(np.abs(e - ana).max()), leak)


def _hole_pair_state(basis, hole, pair):
    """``|h>_hole |pair>_{jk}`` with ``(j, k)`` in cyclic order after the hole."""
    j, k = (hole + 1) % 3, (hole + 2) % 3
    v = np.zeros(basis.dim)
    for sj, sk, amp in pair:
        c = np.empty(3, dtype=np.int8)
        c[hole], c[j], c[k] = HOLE, sj, sk
        v[basis.rank(c)] += amp
    return v


def effective_tunneling_sign(spin_pair: str, t: float = 1.0) -> float:
    """``<h_i, pair| H_t |h_i', pair'>`` for neighboring hole positions.

    The spin pair sits on the two other corners taken in cyclic order. The
    triplet ``|T0>`` returns ``+t``, the singlet returns ``-t``.
    """
    r = 1 / np.sqrt(2)
    if spin_pair == "triplet":
        pair = [(1, 0, r), (0, 1, r)]
    elif spin_pair == "singlet":
        pair = [(1, 0, r), (0, 1, -r)]
    else:
        raise ValueError("spin_pair must be 'singlet' or 'triplet'")
    basis = SectorBasis(3, 1, 1)
    H = build_tJ(plaquette_geometry(), basis, _hopping(t)).toarray()
    bra = _hole_pair_state(basis, 0, pair)
    ket = _hole_pair_state(basis, 1, pair)
    return float(bra @ H @ ket)
