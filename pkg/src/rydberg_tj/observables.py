"""Exact expectation values on sector states.

Species occupations are diagonal in the configuration basis, so most
quantities reduce to weighted sums over ``|psi|^2``. Transverse spin
components go through a global spin rotation: with ``U = R_y(pi/2)`` on
every spin, ``U S^x U^dag = -S^z``, so any even product of ``S^x`` becomes
the same product of ``S^z`` in the rotated state.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import BrillouinGrid, LatticeGeometry
from .hilbert import DOWN, HOLE, UP, SectorBasis

__all__ = [
    "SPECIES",
    "CorrelatorTable",
    "ComDistribution",
    "probabilities",
    "density",
    "densities",
    "pair_expectation",
    "sym_pair_matrix",
    "sym_connected_pair",
    "com_distribution",
    "relative_correlation_map",
    "distance_correlation",
    "fit_exponential",
    "rotate_spins",
    "three_body_hole_spin_spin",
    "hole_frame_sum",
    "hole_frame_nn",
    "sz_correlation_matrix",
    "sx_correlation_matrix",
    "structure_factor",
    "configuration_histogram",
]

SPECIES = {"down": DOWN, "up": UP, "hole": HOLE}
_SZ = np.array([-0.5, 0.5, 0.0, 0.0, 0.0])  # indexed by local state
_KEY_DIGITS = 6


def _amps(psi):
    return np.asarray(getattr(psi, "amplitudes", psi))


def probabilities(psi, basis: SectorBasis) -> np.ndarray:
    a = _amps(psi)
    if a.shape != (basis.dim,):
        raise ValueError(f"state of length {a.shape} does not match basis dim {basis.dim}")
    return np.abs(a) ** 2


def _species(s) -> int:
    if isinstance(s, str):
        try:
            return SPECIES[s]
        except KeyError:
            raise ValueError(f"species must be one of {list(SPECIES)}") from None
    return int(s)


def _site(basis, i):
    if not 0 <= i < basis.n_sites:
        raise IndexError(f"site {i} outside 0..{basis.n_sites - 1}")
    return i


@dataclass(frozen=True)
class CorrelatorTable:
    """Correlator values keyed by pair, displacement, distance or triple."""

    label: str
    scheme: str
    keys: tuple
    values: np.ndarray
    counts: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.keys, self.values.tolist()))

    def at(self, key) -> float:
        if isinstance(key, (tuple, list, np.ndarray)) and self.scheme == "displacement":
            key = tuple(round(float(x), _KEY_DIGITS) for x in key)
        elif self.scheme == "distance" and not isinstance(key, (int, np.integer)):
            key = round(float(key), _KEY_DIGITS)
        for k, v in zip(self.keys, self.values):
            if k == key:
                return float(v)
        raise KeyError(f"no pairs at {key!r} in table {self.label!r}")

    def save_text(self, path) -> None:
        with open(Path(path), "w") as fh:
            fh.write(f"# {self.label} ({self.scheme})\n")
            fh.write("# key\tvalue\tcount\n")
            for k, v, c in zip(self.keys, self.values, self.counts):
                ks = ",".join(str(x) for x in k) if isinstance(k, tuple) else str(k)
                fh.write(f"{ks}\t{v:.17g}\t{c}\n")


@dataclass(frozen=True)
class ComDistribution:
    midpoints: np.ndarray
    mass: np.ndarray

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def profile(self, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Mass summed over the other coordinate, by coordinate along ``axis``."""
        xs = np.round(self.midpoints[:, axis], _KEY_DIGITS)
        keys = np.unique(xs)
        return keys, np.array([self.mass[xs == k].sum() for k in keys])

    def cut(self, value: float, axis: int = 1, tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
        """Points with ``midpoint[axis] == value`` ordered along the other axis."""
        sel = np.abs(self.midpoints[:, axis] - value) < tol
        other = 1 - axis
        order = np.argsort(self.midpoints[sel, other])
        return self.midpoints[sel, other][order], self.mass[sel][order]


# ---------------------------------------------------------------- one and two point

def densities(psi, basis: SectorBasis) -> np.ndarray:
    """``(3, n_sites)`` array of down, up, hole densities."""
    p = probabilities(psi, basis)
    cfg = basis.configs
    return np.stack([p @ (cfg == s) for s in (DOWN, UP, HOLE)])


def density(psi, basis: SectorBasis, species, site: int) -> float:
    _site(basis, site)
    p = probabilities(psi, basis)
    return float(p @ (basis.configs[:, site] == _species(species)))


def pair_expectation(psi, basis: SectorBasis, alpha, beta) -> np.ndarray:
    """Matrix ``<n^alpha_i n^beta_j>`` (diagonal entries are ``<n^alpha_i n^beta_i>``)."""
    p = probabilities(psi, basis)
    cfg = basis.configs
    A = (cfg == _species(alpha)).astype(float)
    B = (cfg == _species(beta)).astype(float)
    return (A * p[:, None]).T @ B


def sym_pair_matrix(psi, basis: SectorBasis, connected: bool = True,
                    alpha="hole", beta="up") -> np.ndarray:
    """``(<n^a_i n^b_j> + <n^b_i n^a_j>)/2`` with the disconnected part optionally removed.

    The diagonal is set to zero: it is not a pair correlator.
    """
    ab = pair_expectation(psi, basis, alpha, beta)
    s = 0.5 * (ab + ab.T)
    if connected:
        d = densities(psi, basis)
        na, nb = d[_species(alpha)], d[_species(beta)]
        s = s - 0.5 * (np.outer(na, nb) + np.outer(nb, na))
    np.fill_diagonal(s, 0.0)
    return s


def sym_connected_pair(psi, basis: SectorBasis, i: int, j: int) -> float:
    """Symmetrized connected hole-up correlator between two distinct sites."""
    _site(basis, i)
    _site(basis, j)
    if i == j:
        raise ValueError("sym_connected_pair needs two distinct sites")
    p = probabilities(psi, basis)
    cfg = basis.configs
    hi, hj = cfg[:, i] == HOLE, cfg[:, j] == HOLE
    ui, uj = cfg[:, i] == UP, cfg[:, j] == UP
    c1 = p @ (hi & uj) - (p @ hi) * (p @ uj)
    c2 = p @ (ui & hj) - (p @ ui) * (p @ hj)
    return float(0.5 * (c1 + c2))


def com_distribution(psi, basis: SectorBasis, g: LatticeGeometry) -> ComDistribution:
    """Hole-magnon midpoint distribution.

    Each unordered pair ``{i, j}`` deposits ``<n^h_i n^u_j> + <n^u_i n^h_j>``
    at ``(r_i + r_j)/2``, which is the symmetrized non-connected correlator
    summed over both orderings; the total is 1 for a one-hole one-magnon state.
    """
    if basis.n_holes != 1:
        raise ValueError("COM distribution needs a one-hole sector")
    s = sym_pair_matrix(psi, basis, connected=False)
    iu, ju = np.triu_indices(basis.n_sites, 1)
    mid = 0.5 * (g.positions[iu] + g.positions[ju])
    mass = 2 * s[iu, ju]
    acc = defaultdict(float)
    for m, w in zip(map(tuple, np.round(mid, _KEY_DIGITS)), mass):
        acc[m] += w
    keys = sorted(acc)
    return ComDistribution(np.array(keys, dtype=float), np.array([acc[k] for k in keys]))


def relative_correlation_map(psi, basis: SectorBasis, g: LatticeGeometry,
                             connected: bool = True, pair_matrix=None) -> CorrelatorTable:
    """``C(d) = (1/N_d) sum_{r_i - r_j = d} <n^h_i n^u_j>^s`` over displacement vectors.

    ``pair_matrix`` may replace the state with a precomputed symmetric
    ``n x n`` table (for example from shot estimates).
    """
    s = pair_matrix if pair_matrix is not None else sym_pair_matrix(psi, basis, connected)
    n = g.n_sites
    acc, cnt = defaultdict(float), defaultdict(int)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = tuple(np.round(g.positions[i] - g.positions[j], _KEY_DIGITS) + 0.0)
            acc[d] += s[i, j]
            cnt[d] += 1
    keys = sorted(acc, key=lambda k: (np.hypot(*k), k))
    label = "C^{c,s}(d)" if connected else "C^s(d)"
    return CorrelatorTable(label, "displacement", tuple(keys),
                           np.array([acc[k] / cnt[k] for k in keys]),
                           np.array([cnt[k] for k in keys]))


def _metric_table(g: LatticeGeometry, metric: str | None):
    metric = metric or ("index" if g.kind == "ladder" else "manhattan")
    if metric == "index":
        if g.kind != "ladder":
            raise ValueError("index metric applies to ladders")
        return g.hop_distances, metric
    if metric == "manhattan":
        if g.kind != "triangular2d":
            raise ValueError("manhattan metric applies to 2D clusters")
        return g.hop_distances, metric
    if metric == "euclidean":
        return np.round(g.distances / g.a, _KEY_DIGITS), metric
    raise ValueError("metric must be 'index', 'manhattan' or 'euclidean'")


def distance_correlation(source, g: LatticeGeometry, metric: str | None = None,
                         basis: SectorBasis | None = None, connected: bool = False) -> CorrelatorTable:
    """Distance-averaged symmetrized hole-up correlator ``C^s(d)``.

    ``source`` is a state (with ``basis``) or a symmetric pair table. The
    value at ``d`` is the sum over ordered pairs at distance ``d`` divided by
    the number ``N_d`` of unordered pairs at that distance. Distances with no
    pairs are absent and :meth:`CorrelatorTable.at` raises for them.
    """
    if basis is not None:
        s = sym_pair_matrix(source, basis, connected)
    else:
        s = np.asarray(source, dtype=float)
        if s.shape != (g.n_sites, g.n_sites):
            raise ValueError("pair table must be n_sites x n_sites")
    D, metric = _metric_table(g, metric)
    iu, ju = np.triu_indices(g.n_sites, 1)
    dvals = D[iu, ju]
    keys = np.unique(dvals)
    vals, cnts = [], []
    for d in keys:
        sel = dvals == d
        vals.append((s[iu[sel], ju[sel]] + s[ju[sel], iu[sel]]).sum() / sel.sum())
        cnts.append(int(sel.sum()))
    keys = tuple(int(k) if metric != "euclidean" else float(k) for k in keys)
    return CorrelatorTable(f"C^s(d) [{metric}]", "distance", keys, np.array(vals), np.array(cnts))


def fit_exponential(table: CorrelatorTable, d_min: float = 1, floor: float = 0.0):
    """Fit ``A exp(-d / xi)`` by least squares on ``log C`` for ``d >= d_min``.

    Points at or below ``floor`` are excluded. Returns ``(A, xi)``.
    """
    d = np.array(table.keys, dtype=float)
    v = table.values
    sel = (d >= d_min) & (v > floor) & (v > 0)
    if sel.sum() < 2:
        raise ValueError("need at least two points above the noise floor for a fit")
    slope, icpt = np.polyfit(d[sel], np.log(v[sel]), 1)
    if slope >= 0:
        return float(np.exp(icpt)), float("inf")
    return float(np.exp(icpt)), float(-1.0 / slope)


# ---------------------------------------------------------------- spin rotation

def rotate_spins(psi, basis: SectorBasis, sign: int = 1) -> tuple[np.ndarray, SectorBasis]:
    """Apply ``R_y(sign * pi/2)`` to every spin, identity on holes.

    In the ``(up, down)`` basis ``R_y(pi/2) = [[1, -1], [1, 1]] / sqrt(2)``,
    so ``|+> -> |down>`` and ``|-> -> |up>``. The result lives in the
    all-magnetization basis with the same hole number.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    a = _amps(psi)
    full = SectorBasis(basis.n_sites, basis.n_holes, None, cap=max(basis.dim, 10**8))
    if basis.n_up is None:
        out = np.array(a, dtype=complex)
    else:
        out = np.zeros(full.dim, dtype=complex)
        out[full.rank_many(basis.configs)] = a
    cfg = full.configs
    holes_after = basis.n_holes - np.cumsum(cfg == HOLE, axis=1)
    r = 1 / np.sqrt(2)
    n = basis.n_sites
    for i in range(n):
        is_up = np.flatnonzero(cfg[:, i] == UP)
        # up and down at site i with identical remainder differ by a fixed completion count
        offset = full._completions(n - i - 1, holes_after[is_up, i], 0)
        is_dn = is_up - offset
        au, ad = out[is_up], out[is_dn]
        if sign == 1:
            out[is_up], out[is_dn] = r * (au - ad), r * (au + ad)
        else:
            out[is_up], out[is_dn] = r * (au + ad), r * (ad - au)
    return out, full


# ---------------------------------------------------------------- spin correlations

def sz_correlation_matrix(psi, basis: SectorBasis, connected: bool = True) -> np.ndarray:
    """``<S^z_i S^z_j>`` (connected by default), diagonal included."""
    p = probabilities(psi, basis)
    sz = _SZ[basis.configs]
    c = (sz * p[:, None]).T @ sz
    if connected:
        m = p @ sz
        c = c - np.outer(m, m)
    return c


def sx_correlation_matrix(psi, basis: SectorBasis, connected: bool = True,
                          method: str = "rotation") -> np.ndarray:
    """``<S^x_i S^x_j>`` with the diagonal ``<(S^x_i)^2> = <n^spin_i>/4``.

    ``method="rotation"`` evaluates ``S^z`` correlations after the global
    rotation (the measurement pathway); ``method="direct"`` applies
    ``S^+ S^-`` flip-flops in a fixed-magnetization sector.
    """
    if method == "rotation":
        rot, full = rotate_spins(psi, basis, 1)
        c = sz_correlation_matrix(rot, full, connected)
        return c
    if method != "direct":
        raise ValueError("method must be 'rotation' or 'direct'")
    if basis.n_up is None:
        raise ValueError("direct S^x evaluation needs a fixed-magnetization sector")
    a = _amps(psi)
    cfg = basis.configs
    n = basis.n_sites
    c = np.zeros((n, n))
    for i in range(n):
        c[i, i] = 0.25 * (np.abs(a) ** 2 @ (cfg[:, i] != HOLE))
        for j in range(i + 1, n):
            k = np.flatnonzero((cfg[:, i] == DOWN) & (cfg[:, j] == UP))
            if len(k) == 0:
                continue
            sw = cfg[k].copy()
            sw[:, [i, j]] = sw[:, [j, i]]
            amp = np.vdot(a[basis.rank_many(sw)], a[k])
            c[i, j] = c[j, i] = 0.5 * amp.real
    # <S^x_i> vanishes in a fixed-magnetization sector, so connected == plain
    return c


def structure_factor(C: np.ndarray, g: LatticeGeometry, grid: BrillouinGrid) -> np.ndarray:
    """``|S(k)|`` with ``S(k) = (1/N) sum_ij exp(i k.(r_i - r_j)) C_ij``.

    Positions are taken in units of ``g.a`` when the grid was built for
    ``a = 1`` and in micrometers otherwise; the caller keeps them consistent.
    """
    C = np.asarray(C)
    n = g.n_sites
    if C.shape != (n, n) or not np.all(np.isfinite(C)):
        raise ValueError("need a complete finite n_sites x n_sites correlation table")
    ph = np.exp(1j * grid.k_points @ g.positions.T)  # (nk, n)
    s = np.einsum("ki,ij,kj->k", ph, C, ph.conj()) / n
    return np.abs(s)


# ---------------------------------------------------------------- three-body

def _diag_mean(p, cfg, ops):
    """``sum_s p(s) prod_{(site, table)} table[s_site]``."""
    v = np.ones(len(p))
    for site, table in ops:
        v = v * table[cfg[:, site]]
    return float(p @ v)


_NH = np.array([0.0, 0.0, 1.0, 0.0, 0.0])


def _three_body_from_probs(p, cfg, sites, convention):
    a, b, c = sites
    terms = []
    for x, y, z in ((a, b, c), (b, a, c), (c, a, b)):
        n = _diag_mean(p, cfg, [(x, _NH)])
        A = _diag_mean(p, cfg, [(y, _SZ)])
        B = _diag_mean(p, cfg, [(z, _SZ)])
        nAB = _diag_mean(p, cfg, [(x, _NH), (y, _SZ), (z, _SZ)])
        AB = _diag_mean(p, cfg, [(y, _SZ), (z, _SZ)])
        nA = _diag_mean(p, cfg, [(x, _NH), (y, _SZ)])
        nB = _diag_mean(p, cfg, [(x, _NH), (z, _SZ)])
        terms.append((n, A, B, nAB, AB, nA, nB))
    t = np.array(terms)
    n, A, B, nAB, AB, nA, nB = t.T
    if convention == "cumulant":
        k = nAB - n * AB - A * nB - B * nA + 2 * n * A * B
        return float(k.mean())
    if convention == "conditional":
        w = n.sum()
        if w <= 1e-15:
            return 0.0
        return float((nAB.sum() - (n * AB).sum()) / w)
    raise ValueError("convention must be 'cumulant' or 'conditional'")


class _Prepared:
    """Probabilities over the (possibly rotated) basis, cached per axis."""

    def __init__(self, psi, basis, axis):
        if axis == "z":
            self.p, self.cfg = probabilities(psi, basis), basis.configs
        elif axis == "x":
            rot, full = rotate_spins(psi, basis, 1)
            self.p, self.cfg = np.abs(rot) ** 2, full.configs
        else:
            raise ValueError("axis must be 'x' or 'z'")


def three_body_hole_spin_spin(psi, basis: SectorBasis, sites, axis: str = "z",
                              convention: str = "cumulant", _prep=None) -> float:
    """Symmetrized connected ``<n^h S^a S^a>`` on three distinct sites.

    Symmetrization averages over which of the three sites carries ``n^h``.
    ``convention="cumulant"`` subtracts all lower-order products;
    ``"conditional"`` returns ``<n S S>/<n> - <S S>``, pooled over the three
    assignments with weights ``<n>`` (assignments without hole weight drop out).
    """
    sites = tuple(int(s) for s in sites)
    if len(set(sites)) != 3:
        raise ValueError("three-body correlator needs three distinct sites")
    for s in sites:
        _site(basis, s)
    prep = _prep or _Prepared(psi, basis, axis)
    return _three_body_from_probs(prep.p, prep.cfg, sites, convention)


def _displace(g: LatticeGeometry, r: int, d):
    if g.kind == "ladder":
        j = r + int(d)
        return j if 0 <= j < g.n_sites else None
    return g.site_at(g.positions[r] + np.asarray(d, dtype=float))


def hole_frame_sum(psi, basis: SectorBasis, g: LatticeGeometry, d_i, d_j,
                   axis: str = "z", convention: str = "cumulant", _prep=None) -> float:
    """``sum_r <n^h_r S_{r+d_i} S_{r+d_j}>_c^s`` over anchors where both sites exist.

    Displacements are index offsets on ladders and vectors (µm) in 2D.
    """
    prep = _prep or _Prepared(psi, basis, axis)
    total, used = 0.0, 0
    for r in range(g.n_sites):
        i, j = _displace(g, r, d_i), _displace(g, r, d_j)
        if i is None or j is None or len({r, i, j}) < 3:
            continue
        total += _three_body_from_probs(prep.p, prep.cfg, (r, i, j), convention)
        used += 1
    if used == 0:
        raise ValueError("no valid hole anchor for these displacements")
    return total


def hole_frame_nn(psi, basis: SectorBasis, g: LatticeGeometry, axis: str = "z",
                  convention: str = "cumulant") -> float:
    """Mean over nearest-neighbor triangles of the three-body correlator.

    Every elementary triangle contributes once; symmetrization already
    averages over which corner holds the hole.
    """
    from .geometry import nearest_neighbor_bonds

    bonds = set(nearest_neighbor_bonds(g))
    nbr = defaultdict(set)
    for i, j in bonds:
        nbr[i].add(j)
        nbr[j].add(i)
    tris = sorted({tuple(sorted((i, j, k))) for i, j in bonds for k in nbr[i] & nbr[j]})
    if not tris:
        raise ValueError("geometry has no nearest-neighbor triangles")
    prep = _Prepared(psi, basis, axis)
    return float(np.mean([_three_body_from_probs(prep.p, prep.cfg, t, convention) for t in tris]))


# ---------------------------------------------------------------- histograms

def _bits_from_state(psi, basis, which):
    p = probabilities(psi, basis)
    cfg = basis.configs
    absent = (cfg == UP) if which == "up" else (cfg != DOWN)
    return p, absent


def configuration_histogram(source, pattern: str, basis: SectorBasis | None = None) -> dict:
    """Normalized histogram of defect arrangements.

    ``pattern="magnon_pair"`` uses up-basis data and returns the index
    separation of the two magnons over records with exactly two. ``pattern=
    "three_defect"`` uses down-basis data and returns the gap tuple
    ``(i2 - i1, i3 - i2)`` over records with exactly three non-down sites.

    ``source`` is a state (with ``basis``) or a shot batch with ``tag`` and
    ``bits`` (1 = imaged).
    """
    if pattern == "magnon_pair":
        need, count = "up", 2
    elif pattern == "three_defect":
        need, count = "down", 3
    else:
        raise ValueError("pattern must be 'magnon_pair' or 'three_defect'")
    if basis is not None:
        w, absent = _bits_from_state(source, basis, need)
    else:
        tag = getattr(source, "tag", None)
        if tag != need:
            raise ValueError(f"pattern {pattern!r} needs {need}-basis shots, got {tag!r}")
        absent = np.asarray(source.bits) == 0
        w = np.ones(len(absent))
    sel = absent.sum(axis=1) == count
    hist = defaultdict(float)
    for weight, row in zip(w[sel], absent[sel]):
        if weight == 0:
            continue
        pos = np.flatnonzero(row)
        key = int(pos[1] - pos[0]) if count == 2 else (int(pos[1] - pos[0]), int(pos[2] - pos[1]))
        hist[key] += weight
    tot = sum(hist.values())
    if tot == 0:
        return {}
    return {k: v / tot for k, v in sorted(hist.items())}
