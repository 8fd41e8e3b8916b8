"""Five-state Boltzmann machine for correlated state-preparation errors.

Local states use the codes of :mod:`rydberg_tj.hilbert` (down, up, hole,
ground, lost). The energy is

    E(s) = - sum_{i<j in Omega} sum_a J^a_ij n^a_i n^a_j - sum_j sum_a h^a_j n^a_j

Sites in the region ``Omega`` are enumerated jointly over a restricted
space; sites outside it are independent five-state variables.
Expectations seen by the experiment are dressed by the 4x5 error matrix:
``<n^a_i> = sum_s p(s) eps[a, s_i]`` and
``<n^a_i n^a_j> = sum_s p(s) eps[a, s_i] eps[a, s_j]`` with rows
``a`` in (down, up, hole, ground).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .hilbert import DOWN, GROUND, HOLE, LOST, UP

__all__ = [
    "ROWS",
    "BoltzmannModel",
    "EmpiricalData",
    "FitSettings",
    "FitResult",
    "ProbabilityTable",
    "probabilities",
    "dressing_matrix",
    "dressed_expectations",
    "costs",
    "fit",
    "sample_initial_configurations",
    "empirical_from_shots",
    "SeededState",
    "seed_dynamics",
    "save_model",
    "load_model",
]

ROWS = ("down", "up", "hole", "ground")
N_LOCAL = 5
DEFAULT_SPACE_CAP = 2_000_000


def dressing_matrix(channel=None) -> np.ndarray:
    """``eps[a, state]``: rows (down, up, hole, ground), columns by local state code.

    ``channel=None`` gives the ideal indicator (ground counts as imaged in
    the down basis, exactly as in the error-free limit of the matrix).
    """
    from .measurement import ErrorChannel, derive_error_matrix

    if channel is None:
        channel = ErrorChannel.ideal()
    m = derive_error_matrix(channel)
    cols = [2, 4, 3, 1, 0]  # down->S, up->S', hole->P, ground->g, lost->L
    return m[:, cols]


@dataclass(frozen=True)
class BoltzmannModel:
    """Couplings ``J[pair, a]`` over region pairs and fields ``h[site, a]``."""

    n_sites: int
    region: tuple
    J: np.ndarray
    h: np.ndarray
    max_holes: int = 3
    sz_window: tuple | None = None
    max_ground: int = 2

    def __post_init__(self):
        region = tuple(sorted(int(r) for r in self.region))
        if len(set(region)) != len(region) or not all(0 <= r < self.n_sites for r in region):
            raise ValueError("region must hold distinct valid sites")
        object.__setattr__(self, "region", region)
        npair = len(region) * (len(region) - 1) // 2
        J = np.zeros((npair, N_LOCAL)) if self.J is None else np.array(self.J, dtype=float)
        h = np.zeros((self.n_sites, N_LOCAL)) if self.h is None else np.array(self.h, dtype=float)
        if J.shape != (npair, N_LOCAL) or h.shape != (self.n_sites, N_LOCAL):
            raise ValueError(f"J must be ({npair}, 5) and h ({self.n_sites}, 5)")
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(h))):
            raise ValueError("couplings and fields must be finite")
        J.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)
        if self.sz_window is None:
            object.__setattr__(self, "sz_window", (-len(region) / 2, 0.5))

    @classmethod
    def zeros(cls, n_sites, region, **kw) -> "BoltzmannModel":
        return cls(n_sites, tuple(region), None, None, **kw)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(combinations(self.region, 2))

    @property
    def outside(self) -> tuple:
        return tuple(j for j in range(self.n_sites) if j not in self.region)

    def energy(self, config) -> float:
        """``E(s)`` for one full configuration (no admissibility check)."""
        s = np.asarray(config)
        e = -self.h[np.arange(self.n_sites), s].sum()
        for k, (i, j) in enumerate(self.pairs):
            if s[i] == s[j]:
                e -= self.J[k, s[i]]
        return float(e)

    def with_params(self, theta) -> "BoltzmannModel":
        nJ = self.J.size
        return replace(self, J=np.asarray(theta[:nJ]).reshape(self.J.shape),
                       h=np.asarray(theta[nJ:]).reshape(self.h.shape))

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.J.ravel(), self.h.ravel()])


_SPACE_CACHE: dict = {}


def _region_space(model: BoltzmannModel, cap: int = DEFAULT_SPACE_CAP) -> np.ndarray:
    """Admissible region configurations, shape ``(M, |Omega|)``."""
    k = len(model.region)
    key = (k, model.max_holes, tuple(model.sz_window), model.max_ground)
    if key in _SPACE_CACHE:
        return _SPACE_CACHE[key]
    if N_LOCAL ** k > cap:
        raise ValueError(f"region of {k} sites spans 5^{k} configurations, above cap {cap}")
    if k == 0:
        grid = np.zeros((1, 0), dtype=np.int8)
    else:
        grid = np.indices((N_LOCAL,) * k).reshape(k, -1).T.astype(np.int8)
    nh = (grid == HOLE).sum(1)
    sz = 0.5 * ((grid == UP).sum(1) - (grid == DOWN).sum(1))
    ng = (grid == GROUND).sum(1)
    lo, hi = model.sz_window
    ok = (nh <= model.max_holes) & (sz >= lo - 1e-12) & (sz <= hi + 1e-12) & (ng <= model.max_ground)
    space = grid[ok]
    space.setflags(write=False)
    _SPACE_CACHE[key] = space
    return space


def _features(model, space):
    """Indicator features of the region: pair terms then field terms."""
    k = len(model.region)
    M = len(space)
    onehot = np.zeros((M, k, N_LOCAL))
    onehot[np.arange(M)[:, None], np.arange(k)[None, :], space] = 1.0
    idx = {s: n for n, s in enumerate(model.region)}
    pair_feat = np.stack([onehot[:, idx[i]] * onehot[:, idx[j]] for i, j in model.pairs], axis=1) \
        if model.pairs else np.zeros((M, 0, N_LOCAL))
    return pair_feat.reshape(M, -1), onehot.reshape(M, -1)


@dataclass(frozen=True)
class ProbabilityTable:
    """Joint region distribution plus independent marginals outside it."""

    model: BoltzmannModel
    region_configs: np.ndarray
    region_p: np.ndarray
    outside_p: np.ndarray  # (n_outside, 5)

    def prob(self, config) -> float:
        s = np.asarray(config)
        reg = s[list(self.model.region)]
        hit = np.flatnonzero((self.region_configs == reg).all(axis=1))
        if len(hit) == 0:
            return 0.0
        p = self.region_p[hit[0]]
        for n, j in enumerate(self.model.outside):
            p *= self.outside_p[n, s[j]]
        return float(p)

    def site_marginals(self) -> np.ndarray:
        """``(n_sites, 5)`` bare single-site probabilities."""
        out = np.zeros((self.model.n_sites, N_LOCAL))
        for n, j in enumerate(self.model.region):
            out[j] = np.bincount(self.region_configs[:, n], weights=self.region_p, minlength=N_LOCAL)
        for n, j in enumerate(self.model.outside):
            out[j] = self.outside_p[n]
        return out


def _softmax_rows(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def probabilities(model: BoltzmannModel, cap: int = DEFAULT_SPACE_CAP) -> ProbabilityTable:
    """Exact ``p(s) = exp(-E(s)) / Z`` by enumeration of the restricted region space."""
    space = _region_space(model, cap)
    pf, ff = _features(model, space)
    hreg = model.h[list(model.region)].ravel()
    logw = pf @ model.J.ravel() + ff @ hreg
    logw -= logw.max()
    w = np.exp(logw)
    p = w / w.sum()
    out_p = _softmax_rows(model.h[list(model.outside)]) if model.outside else np.zeros((0, N_LOCAL))
    return ProbabilityTable(model, space, p, out_p)


def dressed_expectations(model: BoltzmannModel, channel=None, table: ProbabilityTable | None = None) -> dict:
    """Dressed one-point ``(4, n_sites)`` and region two-point ``(4, |Omega|, |Omega|)`` arrays."""
    eps = dressing_matrix(channel)
    t = table or probabilities(model)
    one = t.site_marginals() @ eps.T  # (n_sites, 4)
    k = len(model.region)
    two = np.zeros((4, k, k))
    for a in range(4):
        E = eps[a][t.region_configs]
        two[a] = (E * t.region_p[:, None]).T @ E
    return {"one": one.T, "two": two, "region": model.region}


@dataclass(frozen=True)
class EmpiricalData:
    """Measured one-point ``(4, n_sites)`` and region two-point ``(4, k, k)`` data."""

    one: np.ndarray
    two: np.ndarray
    region: tuple

    def __post_init__(self):
        one = np.asarray(self.one, dtype=float)
        two = np.asarray(self.two, dtype=float)
        if one.size == 0 or two.size == 0:
            raise ValueError("empirical data is empty")
        k = len(self.region)
        if one.ndim != 2 or one.shape[0] != 4 or two.shape != (4, k, k):
            raise ValueError(f"need one-point (4, n) and two-point (4, {k}, {k}) arrays")
        object.__setattr__(self, "one", one)
        object.__setattr__(self, "two", two)
        object.__setattr__(self, "region", tuple(self.region))

    @classmethod
    def from_model(cls, model, channel=None) -> "EmpiricalData":
        d = dressed_expectations(model, channel)
        return cls(d["one"], d["two"], model.region)


@dataclass(frozen=True)
class FitSettings:
    w_one: float = 1.0
    w_two: float = 1.0
    w_lost: float = 0.0
    w_target: float = 0.0
    target: tuple | None = None
    max_iter: int = 3000
    restarts: int = 3
    seed: int = 0
    method: str = "lbfgs"
    init_scale: float = 0.1
    gtol: float = 1e-12
    cost_tol: float = 1e-7  # stop a restart once cost^fit drops below this

    def __post_init__(self):
        for k in ("w_one", "w_two", "w_lost", "w_target"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be non-negative")
        if self.method not in ("lbfgs", "coordinate"):
            raise ValueError("method must be 'lbfgs' or 'coordinate'")
        if self.w_target > 0 and self.target is None:
            raise ValueError("w_target > 0 needs a target configuration")


@dataclass(frozen=True)
class FitResult:
    model: BoltzmannModel
    cost_fit: float
    cost_true: float
    trace: tuple
    converged: bool


def costs(model: BoltzmannModel, data: EmpiricalData, channel=None,
          settings: FitSettings | None = None) -> dict:
    """All cost contributions for a model against data."""
    settings = settings or FitSettings()
    t = probabilities(model)
    d = dressed_expectations(model, channel, t)
    iu = np.triu_indices(len(model.region), 1)
    e_one = float(((d["one"] - data.one) ** 2).sum())
    e_two = float(((d["two"][:, iu[0], iu[1]] - data.two[:, iu[0], iu[1]]) ** 2).sum())
    e_lost = float(t.site_marginals()[:, LOST].sum())
    e_target = 1.0 - t.prob(settings.target) if settings.target is not None else 0.0
    fit_c = (settings.w_one * e_one + settings.w_two * e_two
             + settings.w_lost * e_lost + settings.w_target * e_target)
    return {"one": e_one, "two": e_two, "lost": e_lost, "target": e_target,
            "fit": fit_c, "true": e_one + e_two}


class _Objective:
    """cost^fit and its exact gradient (covariances of Gibbs features)."""

    def __init__(self, model, data, channel, settings):
        self.model = model
        self.data = data
        self.s = settings
        self.eps = dressing_matrix(channel)
        self.space = _region_space(model)
        self.pf, self.ff = _features(model, self.space)
        self.phi = np.hstack([self.pf, self.ff])
        self.reg = list(model.region)
        self.out = list(model.outside)
        self.k = len(self.reg)
        self.iu = np.triu_indices(self.k, 1)
        self.nJ = model.J.size
        # dressed region observables per configuration: one (4k), two (4 * npairs)
        E = np.stack([self.eps[a][self.space] for a in range(4)], axis=1)  # (M, 4, k)
        self.obs_one = E.reshape(len(self.space), -1)
        self.obs_two = (E[:, :, self.iu[0]] * E[:, :, self.iu[1]]).reshape(len(self.space), -1)
        self.tgt_one = data.one[:, self.reg].ravel()
        self.tgt_two = data.two[:, self.iu[0], self.iu[1]].ravel()
        if settings.target is not None:
            tg = np.asarray(settings.target)
            hit = np.flatnonzero((self.space == tg[self.reg]).all(axis=1))
            self.tgt_idx = int(hit[0]) if len(hit) else None
            self.tgt_out = tg[self.out]
        else:
            self.tgt_idx = None

    def __call__(self, theta):
        s = self.s
        J = theta[: self.nJ]
        h = theta[self.nJ:].reshape(-1, N_LOCAL)
        # region block
        logw = self.phi @ np.concatenate([J, h[self.reg].ravel()])
        logw -= logw.max()
        p = np.exp(logw)
        p /= p.sum()
        phi = self.phi
        mphi = p @ phi
        grad_J = np.zeros(self.nJ)
        grad_h = np.zeros_like(h)

        def accumulate(weights):
            # d<f>/dtheta = Cov(f, phi); weights contract f first
            g = (p * weights) @ phi - (p @ weights) * mphi
            grad_J[:] += g[: self.nJ]
            grad_h[self.reg] += g[self.nJ:].reshape(self.k, N_LOCAL)

        one_r = p @ self.obs_one
        r1 = one_r - self.tgt_one
        two_r = p @ self.obs_two
        r2 = two_r - self.tgt_two
        cost = s.w_one * (r1 @ r1) + s.w_two * (r2 @ r2)
        w = 2 * s.w_one * (self.obs_one @ r1) + 2 * s.w_two * (self.obs_two @ r2)
        if s.w_lost:
            lost = (self.space == LOST).sum(axis=1).astype(float)
            cost += s.w_lost * (p @ lost)
            w = w + s.w_lost * lost
        accumulate(w)
        # outside sites: independent softmax
        if self.out:
            q = _softmax_rows(h[self.out])  # (n_out, 5)
            one_o = q @ self.eps.T  # (n_out, 4)
            ro = one_o - self.data.one[:, self.out].T
            cost += s.w_one * (ro ** 2).sum()
            # d one_o[n, a] / d h[n, g] = q[n, g] (eps[a, g] - one_o[n, a])
            dfa = 2 * s.w_one * ro  # (n_out, 4)
            contrib = q * (dfa @ self.eps - (dfa * one_o).sum(1, keepdims=True))
            if s.w_lost:
                cost += s.w_lost * q[:, LOST].sum()
                ind = np.zeros(N_LOCAL)
                ind[LOST] = 1.0
                contrib += s.w_lost * q * (ind - q[:, LOST:LOST + 1])
            grad_h[self.out] += contrib
        if s.w_target and s.target is not None:
            if self.tgt_idx is None:
                ptarget, dlog_reg = 0.0, None
            else:
                ptarget = p[self.tgt_idx]
                dlog_reg = phi[self.tgt_idx] - mphi
            if self.out and ptarget > 0:
                q = _softmax_rows(h[self.out])
                qt = q[np.arange(len(self.out)), self.tgt_out]
                ptarget *= qt.prod()
                oh = np.zeros_like(q)
                oh[np.arange(len(self.out)), self.tgt_out] = 1.0
                grad_h[self.out] += -s.w_target * ptarget * (oh - q)
            cost += s.w_target * (1 - ptarget)
            if dlog_reg is not None and ptarget > 0:
                grad_J[:] += -s.w_target * ptarget * dlog_reg[: self.nJ]
                grad_h[self.reg] += (-s.w_target * ptarget * dlog_reg[self.nJ:]).reshape(self.k, N_LOCAL)
        # the dressed one-point cost for region sites is already inside r1
        grad = np.concatenate([grad_J, grad_h.ravel()])
        if s.w_two == 0:
            grad[: self.nJ] = 0.0  # couplings frozen: independent per-site budget
        return float(cost), grad


def _coordinate_search(fun, x0, max_evals, step0=0.5, min_step=1e-7, cost_tol=0.0):
    x = x0.copy()
    fx = fun(x)[0]
    step = np.full_like(x, step0)
    evals = 1
    trace = [fx]
    while evals < max_evals and step.max() > min_step and fx >= cost_tol:
        improved = False
        for k in range(len(x)):
            if step[k] <= min_step:
                continue
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[k] += sgn * step[k]
                fy = fun(y)[0]
                evals += 1
                if fy < fx:
                    x, fx = y, fy
                    step[k] *= 2.0
                    improved = True
                    break
            else:
                step[k] *= 0.5
            if evals >= max_evals:
                break
        trace.append(fx)
        if not improved and step.max() <= min_step:
            break
    return x, fx, trace, step.max() <= min_step


def fit(data: EmpiricalData, settings: FitSettings | None = None, channel=None,
        n_sites: int | None = None, start: BoltzmannModel | None = None) -> FitResult:
    """Fit couplings and fields to dressed data; best restart under cost^true wins.

    The default optimizer is L-BFGS with the exact covariance gradient;
    ``settings.method="coordinate"`` runs an adaptive derivative-free
    coordinate search. With ``w_two = 0`` the couplings stay at zero and the
    fit is an independent per-site error budget.
    """
    settings = settings or FitSettings()
    if data is None:
        raise ValueError("no empirical data")
    n_sites = n_sites or data.one.shape[1]
    base = start or BoltzmannModel.zeros(n_sites, data.region)
    obj = _Objective(base, data, channel, settings)
    rng = np.random.default_rng(settings.seed)
    best = None
    for r in range(max(1, settings.restarts)):
        x0 = base.theta.copy()
        if r > 0:
            x0 = x0 + settings.init_scale * rng.standard_normal(x0.size)
        if settings.w_two == 0:
            x0[: obj.nJ] = 0.0
        if settings.method == "lbfgs":
            trace = []

            def callback(intermediate_result):
                trace.append(float(intermediate_result.fun))
                if intermediate_result.fun < settings.cost_tol:
                    raise StopIteration

            res = minimize(obj, x0, jac=True, method="L-BFGS-B", callback=callback,
                           options={"maxiter": settings.max_iter, "gtol": settings.gtol,
                                    "ftol": 1e-16, "maxcor": 30})
            x = res.x
            conv = bool(res.success) or float(res.fun) < settings.cost_tol
        else:
            x, fx, trace, conv = _coordinate_search(obj, x0, settings.max_iter * len(x0),
                                                    cost_tol=settings.cost_tol)
            conv = conv or fx < settings.cost_tol
        model = base.with_params(x)
        c = costs(model, data, channel, settings)
        cand = FitResult(model, c["fit"], c["true"], tuple(trace), conv)
        if best is None or cand.cost_true < best.cost_true:
            best = cand
    return best


def sample_initial_configurations(model: BoltzmannModel, n: int, seed: int = 0) -> np.ndarray:
    """``n`` i.i.d. five-state configurations, shape ``(n, n_sites)``."""
    t = probabilities(model)
    rng = np.random.default_rng(seed)
    out = np.empty((n, model.n_sites), dtype=np.int8)
    idx = rng.choice(len(t.region_p), size=n, p=t.region_p)
    out[:, list(model.region)] = t.region_configs[idx]
    for k, j in enumerate(model.outside):
        out[:, j] = rng.choice(N_LOCAL, size=n, p=t.outside_p[k])
    return out


def empirical_from_shots(batches: dict, region) -> EmpiricalData:
    """Build data from shot batches keyed by the four basis tags."""
    from .measurement import estimate_density, estimate_pair

    missing = [r for r in ROWS if r not in batches]
    if missing:
        raise ValueError(f"missing shot batches for bases {missing}")
    region = tuple(sorted(region))
    one = np.stack([estimate_density(batches[r]) for r in ROWS])
    two = np.stack([estimate_pair(batches[r])[np.ix_(region, region)] for r in ROWS])
    return EmpiricalData(one, two, region)


def save_model(model: BoltzmannModel, path) -> None:
    doc = {
        "n_sites": model.n_sites,
        "region": list(model.region),
        "pairs": [list(p) for p in model.pairs],
        "J": model.J.tolist(),
        "h": model.h.tolist(),
        "constraints": {"max_holes": model.max_holes, "sz_window": list(model.sz_window),
                        "max_ground": model.max_ground},
        "states": ["down", "up", "hole", "ground", "lost"],
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_model(path) -> BoltzmannModel:
    d = json.loads(Path(path).read_text())
    c = d.get("constraints", {})
    return BoltzmannModel(d["n_sites"], tuple(d["region"]), np.array(d["J"]), np.array(d["h"]),
                          max_holes=c.get("max_holes", 3),
                          sz_window=tuple(c["sz_window"]) if "sz_window" in c else None,
                          max_ground=c.get("max_ground", 2))


@dataclass(frozen=True)
class SeededState:
    """Product state for one drawn configuration, restricted to active sites."""

    geometry: object
    basis: object
    state: object
    active: tuple  # indices into the full geometry
    inert: tuple  # ground / lost sites left out of the Hamiltonian


def seed_dynamics(config, geometry) -> SeededState:
    """Turn a sampled five-state configuration into a dynamics initial state.

    Ground and lost sites leave the interacting manifold: they are dropped
    from the geometry, so they neither hop nor interact. The remaining
    down/up/hole pattern fixes the sector directly, so extra or missing holes
    and flipped spins land in whatever sector they imply.
    """
    from .dynamics import product_state
    from .geometry import LatticeGeometry
    from .hilbert import SectorBasis

    c = np.asarray(config, dtype=np.int8)
    if c.shape != (geometry.n_sites,):
        raise ValueError("configuration length does not match the geometry")
    active = np.flatnonzero(c < GROUND)
    inert = np.flatnonzero(c >= GROUND)
    if len(active) == 0:
        raise ValueError("configuration has no active sites")
    sub = LatticeGeometry(geometry.kind, geometry.positions[active], geometry.a, geometry.h,
                          explicit=True)
    ca = c[active]
    basis = SectorBasis(len(active), int((ca == HOLE).sum()), int((ca == UP).sum()))
    return SeededState(sub, basis, product_state(basis, ca), tuple(active.tolist()),
                       tuple(inert.tolist()))
