"""Krylov time evolution under the t-J operator plus a ramped light shift."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .hamiltonian import LightShiftProgram, SparseOperator, light_shift_diagonals
from .hilbert import SectorBasis, config_from_string

__all__ = [
    "ToleranceError",
    "StateVector",
    "product_state",
    "EvolutionSchedule",
    "krylov_expmv",
    "RampedHamiltonian",
    "evolve",
    "overlap_trace",
    "save_snapshots",
    "load_snapshots",
]

DEFAULT_SNAPSHOTS = (0.0, 1.0, 2.0, 4.0, 5.0, 6.0)

# commutator-free fourth-order Magnus coefficients
_SQ3 = np.sqrt(3.0)
_C1, _C2 = 0.5 - _SQ3 / 6, 0.5 + _SQ3 / 6
_A1, _A2 = 0.25 + _SQ3 / 6, 0.25 - _SQ3 / 6


class ToleranceError(RuntimeError):
    """Local tolerance could not be met within the substep limit."""


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    basis: SectorBasis
    time: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (self.basis.dim,):
            raise ValueError(f"amplitudes have shape {a.shape}, basis dim is {self.basis.dim}")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.amplitudes / self.norm, self.basis, self.time)

    def overlap(self, other) -> complex:
        other = other.amplitudes if isinstance(other, StateVector) else np.asarray(other)
        return complex(np.vdot(other, self.amplitudes))


def product_state(basis: SectorBasis, config, time: float = 0.0) -> StateVector:
    """Basis state for a configuration (string like ``"dduhd"`` or int array)."""
    if isinstance(config, str):
        config = config_from_string(config)
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.rank(config)] = 1.0
    return StateVector(psi, basis, time)


@dataclass(frozen=True)
class EvolutionSchedule:
    """Time window, snapshot times and step control.

    ``method`` is ``"magnus4"`` (commutator-free fourth-order Magnus, two
    exponentials per step at Gauss nodes) or ``"midpoint"`` (one exponential
    with the Hamiltonian sampled at the substep midpoint).
    """

    t_start: float = 0.0
    t_end: float = 6.0
    snapshots: tuple | None = None
    max_step: float = 0.01
    krylov_dim: int = 20
    tol: float = 1e-10
    method: str = "magnus4"
    max_halvings: int = 12

    def __post_init__(self):
        if self.t_end < self.t_start:
            raise ValueError("t_end must not precede t_start")
        if self.max_step <= 0 or self.krylov_dim < 2 or self.tol <= 0:
            raise ValueError("max_step, krylov_dim and tol must be positive (krylov_dim >= 2)")
        if self.method not in ("magnus4", "midpoint"):
            raise ValueError("method must be 'magnus4' or 'midpoint'")
        if self.snapshots is None:
            snaps = [t for t in DEFAULT_SNAPSHOTS if self.t_start <= t <= self.t_end]
        else:
            snaps = sorted(float(t) for t in self.snapshots)
            if snaps and (snaps[0] < self.t_start or snaps[-1] > self.t_end):
                raise ValueError("snapshot times must lie within [t_start, t_end]")
        object.__setattr__(self, "snapshots", tuple(snaps))


def _tridiag_expm_e1(alpha, beta, tau):
    """``exp(-i tau T) e_1`` for the symmetric tridiagonal ``T``."""
    w, s = np.linalg.eigh(np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1))
    return s @ (np.exp(-1j * tau * w) * s[0].conj())


def krylov_expmv(matvec, v: np.ndarray, tau: float, m: int = 20):
    """Approximate ``exp(-i tau H) v`` in an ``m``-dimensional Krylov space.

    ``matvec`` is a callable or anything supporting ``@``. Returns
    ``(w, err)`` where ``err`` is the standard a-posteriori estimate
    ``|beta_m * tau * [exp(-i tau T)]_{m,1}| * ||v||``.
    """
    if not callable(matvec):
        op = matvec
        matvec = lambda x: op @ x  # noqa: E731
    v = np.asarray(v, dtype=complex)
    nrm = np.linalg.norm(v)
    if nrm == 0 or tau == 0:
        return v.copy(), 0.0
    m = min(m, len(v))
    V = np.empty((m + 1, len(v)), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v / nrm
    k_used = m
    for j in range(m):
        w = matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j]
        if j > 0:
            w = w - beta[j - 1] * V[j - 1]
        # full reorthogonalization keeps the basis clean for long steps
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-13 * max(1.0, abs(alpha[j])):
            k_used = j + 1
            y = _tridiag_expm_e1(alpha[:k_used], beta[: k_used - 1], tau)
            return nrm * (V[:k_used].T @ y), 0.0
        V[j + 1] = w / beta[j]
    y = _tridiag_expm_e1(alpha[:k_used], beta[: k_used - 1], tau)
    err = nrm * abs(beta[k_used - 1] * tau * y[-1])
    return nrm * (V[:k_used].T @ y), float(err)


class RampedHamiltonian:
    """``H(T) = H_tJ + delta_dn(T) D_dn + delta_up(T) D_up`` with cheap combinations."""

    def __init__(self, h0: SparseOperator, program: LightShiftProgram):
        self.h0 = h0
        self.basis = h0.basis
        self.program = program
        self.d_dn, self.d_up = light_shift_diagonals(h0.basis, program)

    @property
    def breakpoints(self) -> tuple:
        return self.program.breakpoints

    def diagonal_shift(self, T: float) -> np.ndarray:
        return self.program.delta_dn(T) * self.d_dn + self.program.delta_up(T) * self.d_up

    def __call__(self, T: float) -> SparseOperator:
        return SparseOperator(self.basis, self.h0.matrix + sp.diags(self.diagonal_shift(T)))

    def combine(self, weights, times):
        """Matvec for ``sum_k w_k H(t_k)``."""
        s = float(np.sum(weights))
        diag = sum(w * self.diagonal_shift(t) for w, t in zip(weights, times))
        m = self.h0.matrix
        return lambda x: s * (m @ x) + diag * x


def _generic_combine(builder):
    def combine(weights, times):
        mats = [builder(t) for t in times]
        acc = sum(w * (mm.matrix if isinstance(mm, SparseOperator) else sp.csr_matrix(mm))
                  for w, mm in zip(weights, mats))
        return lambda x: acc @ x
    return combine


def _step(combine, psi, t, h, sched):
    """One step of the chosen scheme; returns the new state and error estimate."""
    if sched.method == "midpoint":
        mv = combine([1.0], [t + 0.5 * h])
        return krylov_expmv(mv, psi, h, sched.krylov_dim)
    t1, t2 = t + _C1 * h, t + _C2 * h
    mv1 = combine([_A1, _A2], [t1, t2])
    mv2 = combine([_A2, _A1], [t1, t2])
    psi, e1 = krylov_expmv(mv1, psi, h, sched.krylov_dim)
    psi, e2 = krylov_expmv(mv2, psi, h, sched.krylov_dim)
    return psi, e1 + e2


def _advance(combine, psi, t, h, sched, depth=0):
    new, err = _step(combine, psi, t, h, sched)
    if err <= sched.tol:
        return new
    if depth >= sched.max_halvings:
        raise ToleranceError(
            f"Krylov error {err:.2e} above tol {sched.tol:.1e} at T={t:.6f} after {depth} halvings"
        )
    psi = _advance(combine, psi, t, 0.5 * h, sched, depth + 1)
    return _advance(combine, psi, t + 0.5 * h, 0.5 * h, sched, depth + 1)


def evolve(
    psi: StateVector,
    H_builder: Callable[[float], SparseOperator] | RampedHamiltonian,
    sched: EvolutionSchedule,
) -> list[tuple[float, StateVector]]:
    """Propagate ``psi`` from ``sched.t_start`` and return ``(time, state)`` snapshots.

    Substep boundaries are forced at every snapshot time and at the
    builder's ``breakpoints`` (the ramp knee), so the non-smooth point of
    the ramp never falls inside a step.
    """
    if abs(psi.norm - 1.0) > 1e-8:
        raise ValueError(f"initial state norm {psi.norm:.3e} is not 1")
    if abs(psi.time - sched.t_start) > 1e-12:
        psi = StateVector(psi.amplitudes, psi.basis, sched.t_start)
    basis = getattr(H_builder, "basis", None)
    if basis is not None and not basis.same_sector(psi.basis):
        raise ValueError("Hamiltonian and state live in different sectors")
    combine = getattr(H_builder, "combine", None) or _generic_combine(H_builder)
    cuts = {sched.t_start, sched.t_end, *sched.snapshots}
    cuts |= {b for b in getattr(H_builder, "breakpoints", ()) if sched.t_start < b < sched.t_end}
    cuts = sorted(cuts)
    snaps = set(sched.snapshots)
    out = []
    amp = np.array(psi.amplitudes)
    if sched.t_start in snaps:
        out.append((sched.t_start, StateVector(amp, psi.basis, sched.t_start)))
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        n = max(1, int(np.ceil((t1 - t0) / sched.max_step - 1e-9)))
        h = (t1 - t0) / n
        for k in range(n):
            amp = _advance(combine, amp, t0 + k * h, h, sched)
        if t1 in snaps:
            out.append((t1, StateVector(amp, psi.basis, t1)))
    return out


def overlap_trace(snapshots, targets: Sequence, manifold: int | None = None) -> dict:
    """Overlaps ``|<target|psi(T)>|^2`` and cumulative manifold projections.

    ``targets`` is a list of states or a ``(dim, k)`` array of column
    states (for example ``EigenReport.eigenstates``). ``projection[:, n]``
    is the weight in the span of the first ``n + 1`` targets; ``manifold``
    selects one column as ``"manifold"``.
    """
    if isinstance(targets, np.ndarray) and targets.ndim == 2:
        tmat = targets
    else:
        tmat = np.column_stack([
            t.amplitudes if isinstance(t, StateVector) else np.asarray(t) for t in targets
        ])
    times, rows = [], []
    for T, st in snapshots:
        if tmat.shape[0] != st.basis.dim:
            raise ValueError("targets and snapshots live in different sectors")
        times.append(T)
        rows.append(np.abs(tmat.conj().T @ st.amplitudes) ** 2)
    ov = np.clip(np.array(rows), 0.0, 1.0)
    proj = np.clip(np.cumsum(ov, axis=1), 0.0, 1.0)
    out = {"times": np.array(times), "overlaps": ov, "projection": proj}
    if manifold is not None:
        out["manifold"] = proj[:, manifold - 1]
    return out


def save_snapshots(path, snapshots, threshold: float = 0.0) -> None:
    """Write ``time  ordinal  real  imag`` rows (amplitudes above ``threshold``)."""
    with open(Path(path), "w") as fh:
        fh.write("# time\tordinal\treal\timag\n")
        for T, st in snapshots:
            a = st.amplitudes
            for k in np.flatnonzero(np.abs(a) > threshold):
                fh.write(f"{T:.10g}\t{k}\t{a[k].real:.17g}\t{a[k].imag:.17g}\n")


def load_snapshots(path, basis: SectorBasis) -> list[tuple[float, StateVector]]:
    data = np.loadtxt(path, comments="#", ndmin=2)
    out = []
    for T in np.unique(data[:, 0]):
        rows = data[data[:, 0] == T]
        amp = np.zeros(basis.dim, dtype=complex)
        amp[rows[:, 1].astype(np.int64)] = rows[:, 2] + 1j * rows[:, 3]
        out.append((float(T), StateVector(amp, basis, float(T))))
    return out
