"""Long-range bosonic t-J operator, addressing light shifts and the ramp program.

Units: hbar = 1, energies in rad/µs (``2*pi`` times the value in MHz), times
in µs, lengths in µm.

For every pair ``i < j`` the operator contains

* hopping ``+t_sigma (a_ref / r_ij)**3`` exchanging a hole with a spin
  ``sigma`` (bosonic, no fermionic sign; positive t frustrates triangles),
* flip-flop ``(J_perp / 2) (a_ref / r_ij)**6`` between ``up,down`` pairs,
* Ising ``J_z (a_ref / r_ij)**6 s_i s_j`` with ``s = +-1/2`` on spin sites.

All pairs are kept unless a cutoff is configured.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .geometry import LatticeGeometry
from .hilbert import DOWN, HOLE, UP, SectorBasis

__all__ = [
    "TWO_PI",
    "mhz",
    "CouplingSet",
    "RampProfile",
    "LightShiftProgram",
    "SparseOperator",
    "build_tJ",
    "build_light_shift",
    "light_shift_diagonals",
    "ramp_value",
]

TWO_PI = 2 * np.pi
SIGN_MODES = ("frustrated", "reversed", "negated")


def mhz(x: float) -> float:
    """Convert a frequency in MHz to an angular frequency in rad/µs."""
    return TWO_PI * x


@dataclass(frozen=True)
class CouplingSet:
    """Amplitudes at the reference distance ``a_ref`` (rad/µs).

    Defaults are the rung values of the equilateral ladder at ``a = 14.7 µm``:
    t_up = 2pi x 1.1, t_dn = 2pi x 1.2, J_perp = 2pi x 0.107, J_z = -2pi x 0.071.

    ``sign_mode``: ``"frustrated"`` (+t), ``"reversed"`` (hopping negated,
    t < 0) or ``"negated"`` (the whole operator negated). ``bond_overrides``
    maps ``(i, j)`` to explicit amplitudes for that bond, bypassing the power
    laws; keys absent from an override fall back to the scaled value.
    """

    t_up: float = mhz(1.1)
    t_dn: float = mhz(1.2)
    J_perp: float = mhz(0.107)
    J_z: float = mhz(-0.071)
    a_ref: float = 14.7
    hop_power: float = 3.0
    spin_power: float = 6.0
    sign_mode: str = "frustrated"
    cutoff: float | None = None
    bond_overrides: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.sign_mode not in SIGN_MODES:
            raise ValueError(f"sign_mode must be one of {SIGN_MODES}")
        vals = (self.t_up, self.t_dn, self.J_perp, self.J_z, self.a_ref)
        if not all(np.isfinite(vals)):
            raise ValueError("coupling amplitudes must be finite")
        if self.a_ref <= 0:
            raise ValueError("a_ref must be positive")
        norm = {}
        for key, val in dict(self.bond_overrides).items():
            if isinstance(key, str):
                i, j = (int(x) for x in key.split(","))
            else:
                i, j = key
            norm[(min(i, j), max(i, j))] = dict(val)
        object.__setattr__(self, "bond_overrides", norm)

    @property
    def t_mean(self) -> float:
        return 0.5 * (self.t_up + self.t_dn)

    def bond(self, i: int, j: int, r: float) -> tuple[float, float, float, float]:
        """``(t_up, t_dn, J_perp, J_z)`` on bond ``(i, j)`` at distance ``r``."""
        f_hop = (self.a_ref / r) ** self.hop_power
        f_spin = (self.a_ref / r) ** self.spin_power
        out = {
            "t_up": self.t_up * f_hop,
            "t_dn": self.t_dn * f_hop,
            "J_perp": self.J_perp * f_spin,
            "J_z": self.J_z * f_spin,
        }
        out.update(self.bond_overrides.get((min(i, j), max(i, j)), {}))
        return out["t_up"], out["t_dn"], out["J_perp"], out["J_z"]

    def hopping_at(self, r: float) -> float:
        """Spin-averaged hopping magnitude at distance ``r`` (ideal scaling)."""
        return abs(self.t_mean) * (self.a_ref / r) ** self.hop_power

    def spin_averaged(self) -> "CouplingSet":
        return replace(self, t_up=self.t_mean, t_dn=self.t_mean)

    def hopping_only(self) -> "CouplingSet":
        return replace(self, J_perp=0.0, J_z=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bond_overrides"] = {f"{i},{j}": v for (i, j), v in self.bond_overrides.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping, units: str = "rad/us") -> "CouplingSet":
        """Build from a mapping; ``units="MHz"`` multiplies amplitudes by 2pi."""
        d = dict(d)
        units = d.pop("units", units)
        if units not in ("rad/us", "MHz"):
            raise ValueError("units must be 'rad/us' or 'MHz'")
        if units == "MHz":
            for key in ("t_up", "t_dn", "J_perp", "J_z"):
                if key in d:
                    d[key] = mhz(d[key])
            d["bond_overrides"] = {
                k: {kk: mhz(vv) for kk, vv in v.items()}
                for k, v in d.get("bond_overrides", {}).items()
            }
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown coupling fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class RampProfile:
    """Light-shift magnitude versus time.

    Linear from ``delta0`` to ``delta_knee`` over ``[0, t_knee]``, then
    ``delta_knee * exp(-(T - t_knee) / tau)``; the result is multiplied by
    ``sign``. Defaults: 2pi x 25 -> 2pi x 5 rad/µs over 1 µs, tau = 1 µs.
    """

    delta0: float = mhz(25.0)
    delta_knee: float = mhz(5.0)
    t_knee: float = 1.0
    tau: float = 1.0
    sign: int = 1

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.t_knee < 0:
            raise ValueError("t_knee must be non-negative")
        if not self.delta0 >= self.delta_knee >= 0:
            raise ValueError("need delta0 >= delta_knee >= 0 (magnitudes)")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def value(self, T: float) -> float:
        if T < 0:
            raise ValueError("ramp time must be non-negative")
        if T <= self.t_knee and self.t_knee > 0:
            mag = self.delta0 + (self.delta_knee - self.delta0) * T / self.t_knee
        else:
            mag = self.delta_knee * np.exp(-(T - self.t_knee) / self.tau)
        return self.sign * mag


@dataclass(frozen=True)
class LightShiftProgram:
    """Site-resolved addressing light shifts.

    Magnon sites receive ``delta_dn * n_down``; hole sites receive
    ``delta_dn * n_down + delta_up * n_up``. Both shifts follow ``profile``
    unless ``up_profile`` is given.
    """

    magnon_sites: tuple = ()
    hole_sites: tuple = ()
    profile: RampProfile = field(default_factory=RampProfile)
    up_profile: RampProfile | None = None

    def __post_init__(self):
        object.__setattr__(self, "magnon_sites", tuple(int(s) for s in self.magnon_sites))
        object.__setattr__(self, "hole_sites", tuple(int(s) for s in self.hole_sites))
        if set(self.magnon_sites) & set(self.hole_sites):
            raise ValueError("a site cannot be both a magnon and a hole target")

    def delta_dn(self, T: float) -> float:
        return self.profile.value(T)

    def delta_up(self, T: float) -> float:
        return (self.up_profile or self.profile).value(T)

    @property
    def breakpoints(self) -> tuple:
        pts = {self.profile.t_knee}
        if self.up_profile is not None:
            pts.add(self.up_profile.t_knee)
        return tuple(sorted(pts))


def ramp_value(p, T: float) -> float:
    """Light-shift value at time ``T`` for a :class:`RampProfile` or program."""
    if isinstance(p, LightShiftProgram):
        return p.delta_dn(T)
    return p.value(T)


class SparseOperator:
    """Hermitian operator on a :class:`SectorBasis`, stored as CSR."""

    def __init__(self, basis: SectorBasis, matrix):
        m = sp.csr_matrix(matrix)
        if m.shape != (basis.dim, basis.dim):
            raise ValueError(f"matrix shape {m.shape} does not match basis dim {basis.dim}")
        m.sum_duplicates()
        m.eliminate_zeros()
        self.basis = basis
        self.matrix = m

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def dtype(self):
        return self.matrix.dtype

    def __matmul__(self, v):
        return self.matrix @ v

    def __add__(self, other):
        if isinstance(other, SparseOperator):
            if not self.basis.same_sector(other.basis):
                raise ValueError("operators act on different sectors")
            other = other.matrix
        return SparseOperator(self.basis, self.matrix + other)

    def __mul__(self, scalar):
        return SparseOperator(self.basis, self.matrix * scalar)

    __rmul__ = __mul__

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def norm_bound(self) -> float:
        """Max absolute row sum, an upper bound on the spectral norm."""
        if self.matrix.nnz == 0:
            return 0.0
        return float(abs(self.matrix).sum(axis=1).max())

    def hermiticity_error(self) -> float:
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0

    def entries(self):
        """Coordinate-format ``(rows, cols, values)``."""
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def save_text(self, path) -> None:
        rows, cols, vals = self.entries()
        vals = vals.astype(complex)
        with open(Path(path), "w") as fh:
            fh.write(f"# dim={self.basis.dim} n_sites={self.basis.n_sites} "
                     f"n_holes={self.basis.n_holes} n_up={self.basis.n_up}\n")
            fh.write("# row\tcol\treal\timag\n")
            for r, c, v in zip(rows, cols, vals):
                fh.write(f"{r}\t{c}\t{v.real:.17g}\t{v.imag:.17g}\n")


def build_tJ(g: LatticeGeometry, basis: SectorBasis, c: CouplingSet) -> SparseOperator:
    """Assemble the bosonic t-J operator in ``basis`` for geometry ``g``."""
    if g.n_sites != basis.n_sites:
        raise ValueError(f"geometry has {g.n_sites} sites but basis has {basis.n_sites}")
    configs = basis.configs
    dim, n = configs.shape
    hop_sign = -1.0 if c.sign_mode == "reversed" else 1.0
    overall = -1.0 if c.sign_mode == "negated" else 1.0
    rows, cols, vals = [], [], []
    diag = np.zeros(dim)
    idx = np.arange(dim, dtype=np.int64)
    for i in range(n):
        ci = configs[:, i]
        for j in range(i + 1, n):
            r = g.distances[i, j]
            if c.cutoff is not None and r > c.cutoff:
                continue
            t_up, t_dn, j_perp, j_z = c.bond(i, j, r)
            cj = configs[:, j]
            hole_i = ci == HOLE
            hole_j = cj == HOLE
            hop = hole_i ^ hole_j
            if hop.any() and (t_up != 0 or t_dn != 0):
                moved = np.where(hole_i, cj, ci)[hop]
                amp = np.where(moved == UP, t_up, t_dn) * hop_sign
                new = configs[hop].copy()
                new[:, [i, j]] = new[:, [j, i]]
                rows.append(basis.rank_many(new))
                cols.append(idx[hop])
                vals.append(amp)
            spins = ~hole_i & ~hole_j
            flip = spins & (ci != cj)
            if flip.any() and j_perp != 0:
                new = configs[flip].copy()
                new[:, [i, j]] = new[:, [j, i]]
                rows.append(basis.rank_many(new))
                cols.append(idx[flip])
                vals.append(np.full(int(flip.sum()), 0.5 * j_perp))
            if j_z != 0:
                si = np.where(ci == UP, 0.5, -0.5)
                sj = np.where(cj == UP, 0.5, -0.5)
                diag += np.where(spins, j_z * si * sj, 0.0)
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    r = np.concatenate(rows)
    cc = np.concatenate(cols)
    v = np.concatenate(vals) * overall
    m = sp.coo_matrix((v, (r, cc)), shape=(dim, dim)).tocsr()
    return SparseOperator(basis, m)


def light_shift_diagonals(basis: SectorBasis, p: LightShiftProgram) -> tuple[np.ndarray, np.ndarray]:
    """Per-configuration counts ``(n_down on addressed sites, n_up on hole sites)``."""
    for s in p.magnon_sites + p.hole_sites:
        if not 0 <= s < basis.n_sites:
            raise IndexError(f"light-shift site {s} outside 0..{basis.n_sites - 1}")
    configs = basis.configs
    addressed = list(p.magnon_sites) + list(p.hole_sites)
    d_dn = (configs[:, addressed] == DOWN).sum(axis=1).astype(float)
    if p.hole_sites:
        d_up = (configs[:, list(p.hole_sites)] == UP).sum(axis=1).astype(float)
    else:
        d_up = np.zeros(basis.dim)
    return d_dn, d_up


def build_light_shift(basis: SectorBasis, p: LightShiftProgram, T: float) -> SparseOperator:
    """Diagonal light-shift operator at time ``T``."""
    d_dn, d_up = light_shift_diagonals(basis, p)
    diag = p.delta_dn(T) * d_dn + p.delta_up(T) * d_up
    return SparseOperator(basis, sp.diags(diag, format="csr"))
