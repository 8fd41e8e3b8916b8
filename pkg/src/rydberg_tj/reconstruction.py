"""Reconstructable correlator combinations from single-basis statistics.

Each basis ``sigma`` in (up, hole, down) yields four two-site outcome
probabilities ``<ss>, <s~s>, <~ss>, <~s~s>``; stacked they form the 12-vector
``M = A C`` with ``C`` the nine density correlators ordered
``[uu, uh, ud, hu, hh, hd, du, dh, dd]``. ``A`` has rank 8, and its null
vector ``(0, 1, -1, -1, 0, 1, 1, -1, 0)`` leaves the printed combinations
unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measurement import ErrorChannel, imaging_probabilities, _basis

__all__ = [
    "BASIS_ORDER",
    "C_LABELS",
    "ReconstructionSystem",
    "build_system",
    "measured_pair_vector",
    "pair_vector_from_correlators",
    "reconstruct_pair_combos",
    "combos_from_correlators",
    "reconstruct_three_body",
    "consistency_residual",
    "least_squares_correlators",
    "error_dressed_system",
    "invert_error_model",
]

BASIS_ORDER = ("up", "hole", "down")
C_LABELS = ("uu", "uh", "ud", "hu", "hh", "hd", "du", "dh", "dd")
_STATE = {"u": 0, "h": 1, "d": 2}

_A = np.array([
    [1, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 1, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 1, 0, 0, 1, 0, 0],
    [0, 0, 0, 0, 1, 1, 0, 1, 1],
    [0, 0, 0, 0, 1, 0, 0, 0, 0],
    [0, 0, 0, 1, 0, 1, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0, 1, 0],
    [1, 0, 1, 0, 0, 0, 1, 0, 1],
    [0, 0, 0, 0, 0, 0, 0, 0, 1],
    [0, 0, 0, 0, 0, 0, 1, 1, 0],
    [0, 0, 1, 0, 0, 1, 0, 0, 0],
    [1, 1, 0, 1, 1, 0, 0, 0, 0],
], dtype=float)
_A.setflags(write=False)

# closed forms as coefficient rows over M
_COMBO_M = {
    "spin_spin": np.array([1, 0, 0, 1, -1, 0, 0, 0, 0, -1, -1, 0], dtype=float),
    "sym_hole_sz": np.array([-1, 0, 0, -1, 0, 0, 0, 0, 1, 0, 0, 1], dtype=float),
    "sym_hole_up": np.array([-1, 0, 0, 0, -1, 0, 0, 0, 0, 0, 0, 1], dtype=float),
}
# the same combinations over C
_COMBO_C = {
    "spin_spin": np.array([1, 0, -1, 0, 0, 0, -1, 0, 1], dtype=float),
    "sym_hole_sz": np.array([0, 1, 0, 1, 0, -1, 0, -1, 0], dtype=float),
    "sym_hole_up": np.array([0, 1, 0, 1, 0, 0, 0, 0, 0], dtype=float),
}


@dataclass(frozen=True)
class ReconstructionSystem:
    A: np.ndarray
    rank: int
    null_vector: np.ndarray
    combos: dict


def build_system() -> ReconstructionSystem:
    rank = int(np.linalg.matrix_rank(_A))
    _, _, vt = np.linalg.svd(_A)
    null = vt[-1] / np.max(np.abs(vt[-1]))
    null = null * np.sign(null[1])
    return ReconstructionSystem(_A, rank, null, dict(_COMBO_M))


def measured_pair_vector(per_basis: dict) -> np.ndarray:
    """Stack ``{basis: (ss, s~s, ~ss, ~s~s)}`` into the 12-vector ``M``."""
    missing = [b for b in BASIS_ORDER if b not in per_basis]
    if missing:
        raise ValueError(f"missing bases {missing}")
    return np.concatenate([np.asarray(per_basis[b], dtype=float).reshape(4) for b in BASIS_ORDER])


def pair_vector_from_correlators(C) -> np.ndarray:
    """``M = A C`` for a 9-vector or a 3x3 table ``C[s_i, s_j]`` in (u, h, d) order."""
    C = np.asarray(C, dtype=float).reshape(9)
    return _A @ C


def reconstruct_pair_combos(m) -> dict:
    """The three closed-form combinations from a 12-vector ``M``.

    ``spin_spin = 4<SzSz>``, ``sym_hole_sz = 2(<n^h Sz> + <Sz n^h>)``,
    ``sym_hole_up = <n^h n^u> + <n^u n^h>``.
    """
    m = np.asarray(m, dtype=float).reshape(12)
    return {k: float(v @ m) for k, v in _COMBO_M.items()}


def combos_from_correlators(C) -> dict:
    C = np.asarray(C, dtype=float).reshape(9)
    return {k: float(v @ C) for k, v in _COMBO_C.items()}


def reconstruct_three_body(m24: dict) -> float:
    """``4(<n^h Sz Sz> + <Sz n^h Sz> + <Sz Sz n^h>)`` from three-site outcomes.

    ``m24[basis][(o1, o2, o3)]`` is the probability of the pattern with 1 for
    ``sigma`` and 0 for not-``sigma``.
    """
    u, h, d = m24["up"], m24["hole"], m24["down"]
    g = lambda tab, key: float(tab.get(key, 0.0))  # noqa: E731
    return (
        g(u, (1, 1, 0)) + g(u, (1, 0, 1)) + g(u, (0, 1, 1)) + g(u, (0, 0, 0))
        - g(h, (1, 1, 1))
        - g(d, (1, 1, 1)) - g(d, (1, 0, 0)) - g(d, (0, 1, 0)) - g(d, (0, 0, 1))
    )


def consistency_residual(m) -> float:
    """Norm of the part of ``M`` outside the column space of ``A``."""
    m = np.asarray(m, dtype=float).reshape(12)
    coef, *_ = np.linalg.lstsq(_A, m, rcond=None)
    return float(np.linalg.norm(m - _A @ coef))


def least_squares_correlators(m, A=None) -> dict:
    """Minimum-norm ``C`` with ``A C ~ M``; one direction stays undetermined."""
    A = _A if A is None else A
    m = np.asarray(m, dtype=float).reshape(12)
    C, *_ = np.linalg.lstsq(A, m, rcond=None)
    return {
        "C": C,
        "labels": C_LABELS,
        "null_direction": build_system().null_vector,
        "note": "null-direction undetermined: C + x*null_direction fits equally well",
    }


def _detection_matrix(tag, channel):
    """2x3 ``P(outcome | true state)`` with outcomes (sigma, not sigma), states (u, h, d)."""
    mb = _basis(tag)
    p_img = imaging_probabilities(mb, channel)
    # local state codes: down 0, up 1, hole 2
    p_obs = np.array([p_img[1], p_img[2], p_img[0]])
    if mb.absent_means:
        p_obs = 1.0 - p_obs
    return np.vstack([p_obs, 1.0 - p_obs])


def error_dressed_system(channel: ErrorChannel | None) -> np.ndarray:
    """12x9 matrix mapping ideal correlators to outcome probabilities with detection errors."""
    blocks = []
    for tag in BASIS_ORDER:
        E = _detection_matrix(tag, channel)
        blocks.append(np.kron(E, E))
    return np.vstack(blocks)


def invert_error_model(m, channel: ErrorChannel | None = None) -> dict:
    """Undo per-site detection errors, then evaluate the combinations.

    Rows of the dressed system sum to one per column within each basis, so
    the null vector of ``A`` stays in its null space and the combinations
    are unaffected by the undetermined direction.
    """
    Aerr = error_dressed_system(channel if channel is not None else ErrorChannel())
    sol = least_squares_correlators(m, Aerr)
    return combos_from_correlators(sol["C"])
