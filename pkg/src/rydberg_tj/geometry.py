"""Site layouts for triangular ladders and 2D triangular clusters.

Positions are in micrometers. Ladder sites use a single index that winds
along the zig-zag: site ``i`` sits at ``(i * a / 2, (i % 2) * h)``, so even
sites form one leg and odd sites the other.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "LatticeGeometry",
    "BrillouinGrid",
    "build_ladder",
    "build_triangular2d",
    "hexagonal_cluster_positions",
    "distance",
    "distance_matrix",
    "lattice_distance",
    "nearest_neighbor_bonds",
    "brillouin_grid",
    "geometry_to_dict",
    "geometry_from_dict",
    "save_geometry",
    "load_geometry",
]

_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LatticeGeometry:
    """Immutable set of site positions.

    ``a`` is the intra-leg spacing for ladders and the lattice constant for
    2D clusters. ``h`` is the inter-leg spacing (ladders only).
    """

    kind: str
    positions: np.ndarray
    a: float
    h: float | None = None
    explicit: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("ladder", "triangular2d"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        if self.a <= 0:
            raise ValueError("lattice spacing a must be positive")
        if len(pos) > 1:
            d = self.distances[np.triu_indices(len(pos), 1)]
            if d.min() <= 1e-9:
                raise ValueError("site positions must be distinct")

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    @cached_property
    def distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        r = np.linalg.norm(diff, axis=-1)
        r.setflags(write=False)
        return r

    @cached_property
    def nn_distance(self) -> float:
        """Shortest pairwise distance (nearest-neighbor spacing)."""
        if self.n_sites < 2:
            return float(self.a)
        return float(self.distances[np.triu_indices(self.n_sites, 1)].min())

    @cached_property
    def hop_distances(self) -> np.ndarray:
        """All-pairs lattice distance (see :func:`lattice_distance`)."""
        n = self.n_sites
        if self.kind == "ladder":
            idx = np.arange(n)
            return np.abs(idx[:, None] - idx[None, :])
        adj = [[] for _ in range(n)]
        for i, j in _bonds_at(self, self.a):
            adj[i].append(j)
            adj[j].append(i)
        out = np.full((n, n), -1, dtype=int)
        for src in range(n):
            out[src, src] = 0
            queue = deque([src])
            while queue:
                u = queue.popleft()
                for v in adj[u]:
                    if out[src, v] < 0:
                        out[src, v] = out[src, u] + 1
                        queue.append(v)
        return out

    def site_at(self, xy, tol: float = _TOL) -> int | None:
        """Index of the site at position ``xy`` or ``None``."""
        d = np.linalg.norm(self.positions - np.asarray(xy, dtype=float), axis=1)
        k = int(np.argmin(d))
        return k if d[k] < tol * max(1.0, self.a) else None


@dataclass(frozen=True, eq=False)
class BrillouinGrid:
    k_points: np.ndarray
    labels: tuple = ()

    def index_of(self, label: str) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab == label]


def build_ladder(n_sites: int, a: float, h: float) -> LatticeGeometry:
    """Zig-zag triangular ladder with intra-leg spacing ``a`` and leg gap ``h``.

    ``h = 0`` gives a 1D chain of pitch ``a / 2``.
    """
    if n_sites < 2:
        raise ValueError("a ladder needs at least two sites")
    if a <= 0:
        raise ValueError("intra-leg spacing a must be positive")
    if h < 0:
        raise ValueError("inter-leg spacing h must be non-negative")
    i = np.arange(n_sites)
    pos = np.column_stack([i * a / 2.0, (i % 2) * float(h)])
    return LatticeGeometry("ladder", pos, float(a), float(h))


def hexagonal_cluster_positions(radius: int, a: float = 1.0) -> np.ndarray:
    """Sites of a centered hexagon of the given shell radius, ordered row by row."""
    a1 = np.array([1.0, 0.0])
    a2 = np.array([0.5, np.sqrt(3) / 2])
    pts = [
        m * a1 + n * a2
        for m in range(-radius, radius + 1)
        for n in range(-radius, radius + 1)
        if abs(m + n) <= radius
    ]
    pts = np.array(pts) * a
    order = np.lexsort((np.round(pts[:, 0], 9), np.round(pts[:, 1], 9)))
    return pts[order]


def build_triangular2d(n_sites: int, a: float, positions=None) -> LatticeGeometry:
    """Hexagon-shaped triangular cluster centered on a site.

    ``n_sites`` must be a centered hexagonal number (1, 7, 19, 37, ...)
    unless explicit ``positions`` are supplied.
    """
    if a <= 0:
        raise ValueError("lattice spacing a must be positive")
    if positions is not None:
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        if len(pos) != n_sites:
            raise ValueError(f"got {len(pos)} positions for n_sites={n_sites}")
        return LatticeGeometry("triangular2d", pos, float(a), explicit=True)
    radius = 0
    while 3 * radius * (radius + 1) + 1 < n_sites:
        radius += 1
    if 3 * radius * (radius + 1) + 1 != n_sites:
        raise ValueError(
            f"{n_sites} sites is not a centered hexagonal cluster; pass positions"
        )
    return LatticeGeometry("triangular2d", hexagonal_cluster_positions(radius, a), float(a))


def _check_site(g: LatticeGeometry, i: int):
    if not 0 <= i < g.n_sites:
        raise IndexError(f"site {i} outside 0..{g.n_sites - 1}")


def distance(g: LatticeGeometry, i: int, j: int) -> float:
    """Euclidean distance between two distinct sites (µm)."""
    _check_site(g, i)
    _check_site(g, j)
    if i == j:
        raise ValueError("distance needs two distinct sites")
    return float(g.distances[i, j])


def distance_matrix(g: LatticeGeometry) -> np.ndarray:
    return g.distances


def lattice_distance(g: LatticeGeometry, i: int, j: int) -> int:
    """Index difference on ladders, hop count along nearest-neighbor bonds in 2D."""
    _check_site(g, i)
    _check_site(g, j)
    return int(g.hop_distances[i, j])


def _bonds_at(g: LatticeGeometry, r: float, rtol: float = _TOL):
    iu, ju = np.triu_indices(g.n_sites, 1)
    d = g.distances[iu, ju]
    mask = np.abs(d - r) <= rtol * r
    return list(zip(iu[mask].tolist(), ju[mask].tolist()))


def nearest_neighbor_bonds(g: LatticeGeometry, rtol: float = _TOL) -> list[tuple[int, int]]:
    """Unordered pairs ``i < j`` at the shortest pairwise distance."""
    if g.n_sites < 2:
        return []
    return _bonds_at(g, g.nn_distance, rtol)


def brillouin_grid(a: float, n: int = 25) -> BrillouinGrid:
    """Uniform ``n x n`` mesh clipped to the first Brillouin zone.

    The zone is the hexagon of the triangular lattice with primitive vectors
    ``(a, 0)`` and ``(a/2, a*sqrt(3)/2)``; its corners (K points) sit at
    ``|k| = 4*pi/(3a)``. Gamma and all six K points are always included.
    """
    kmax = 4 * np.pi / (3 * a)
    kx = np.linspace(-kmax, kmax, n)
    ky = np.linspace(-kmax * np.sqrt(3) / 2, kmax * np.sqrt(3) / 2, n)
    KX, KY = np.meshgrid(kx, ky)
    pts = np.column_stack([KX.ravel(), KY.ravel()])
    # hexagon with corners on the kx axis: |ky| <= sqrt3/2 kmax and the slanted edges
    inside = (np.abs(pts[:, 1]) <= np.sqrt(3) / 2 * kmax + 1e-12) & (
        np.sqrt(3) * np.abs(pts[:, 0]) + np.abs(pts[:, 1]) <= np.sqrt(3) * kmax + 1e-12
    )
    pts = pts[inside]
    corners = np.array(
        [[kmax * np.cos(k * np.pi / 3), kmax * np.sin(k * np.pi / 3)] for k in range(6)]
    )
    special = np.vstack([[[0.0, 0.0]], corners])
    keep = [p for p in pts if np.min(np.linalg.norm(special - p, axis=1)) > 1e-9 * kmax]
    allpts = np.vstack([special, np.array(keep).reshape(-1, 2)])
    labels = ("Γ",) + ("K",) * 6 + ("",) * len(keep)
    allpts.setflags(write=False)
    return BrillouinGrid(allpts, labels)


def geometry_to_dict(g: LatticeGeometry) -> dict:
    out = {"kind": g.kind, "n_sites": g.n_sites, "a": g.a}
    if g.h is not None:
        out["h"] = g.h
    if g.explicit:
        out["positions"] = g.positions.tolist()
    return out


def geometry_from_dict(d: dict) -> LatticeGeometry:
    kind = d.get("kind")
    n = d.get("n_sites")
    if not n:
        raise ValueError("geometry.n_sites must be a positive integer")
    if kind == "ladder":
        return build_ladder(int(n), float(d["a"]), float(d.get("h", 0.0)))
    if kind == "triangular2d":
        return build_triangular2d(int(n), float(d["a"]), d.get("positions"))
    raise ValueError(f"geometry.kind must be 'ladder' or 'triangular2d', got {kind!r}")


def save_geometry(g: LatticeGeometry, path) -> None:
    Path(path).write_text(json.dumps(geometry_to_dict(g), indent=2))


def load_geometry(path) -> LatticeGeometry:
    return geometry_from_dict(json.loads(Path(path).read_text()))
