"""Shot pipeline: sampling from ``|psi|^2``, basis mapping and detection errors.

Every site ends in a binary outcome, 1 when an atom is imaged and 0 when it
is absent. A measurement basis decides which true local states are imaged:

========== ======================= ==========================
tag        imaged true states      estimator of
========== ======================= ==========================
down       down, ground            ``n^down`` (imaged)
up         down, hole, ground      ``n^up`` (absent)
hole       down, up, ground        ``n^hole`` (absent)
ground     ground                  ``n^g`` (imaged)
up_presence up, ground             ``n^up`` (imaged)
x_plus     down after +pi/2        ``n^+`` (imaged)
x_minus    down after -pi/2        ``n^-`` (imaged)
========== ======================= ==========================

With an :class:`ErrorChannel` the deterministic map is replaced by an
independent Bernoulli draw per site with the channel's imaging probability.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dynamics import StateVector
from .hilbert import DOWN, GROUND, HOLE, LOST, UP, SectorBasis
from .observables import rotate_spins

__all__ = [
    "BASIS_TAGS",
    "MeasurementBasis",
    "ErrorChannel",
    "derive_error_matrix",
    "imaging_probabilities",
    "ShotBatch",
    "sample_shots",
    "shots_from_configurations",
    "rotate_for_x",
    "outcome_distribution",
    "estimate_density",
    "estimate_pair",
    "pair_outcomes",
    "save_shots",
    "load_shots",
]

# column of the error matrix for each local state (L, g, S, P, S')
_COLUMN = {LOST: 0, GROUND: 1, DOWN: 2, HOLE: 3, UP: 4}
_ROW = {"down": 0, "up": 1, "hole": 2, "ground": 3}


@dataclass(frozen=True)
class MeasurementBasis:
    """Map from true local state to imaged (1) or absent (0)."""

    tag: str
    imaged: tuple  # indexed by local state code down, up, hole, ground, lost
    rotation: int = 0  # +-1 for the global pi/2 pulse before readout
    absent_means: bool = False  # estimator counts absences

    def ideal_probabilities(self) -> np.ndarray:
        return np.array(self.imaged, dtype=float)


BASIS_TAGS = {
    "down": MeasurementBasis("down", (1, 0, 0, 1, 0)),
    "up": MeasurementBasis("up", (1, 0, 1, 1, 0), absent_means=True),
    "hole": MeasurementBasis("hole", (1, 1, 0, 1, 0), absent_means=True),
    "ground": MeasurementBasis("ground", (0, 0, 0, 1, 0)),
    "up_presence": MeasurementBasis("up_presence", (0, 1, 0, 1, 0)),
    "x_plus": MeasurementBasis("x_plus", (1, 0, 0, 1, 0), rotation=1),
    "x_minus": MeasurementBasis("x_minus", (1, 0, 0, 1, 0), rotation=-1),
}


def _basis(tag) -> MeasurementBasis:
    if isinstance(tag, MeasurementBasis):
        return tag
    try:
        return BASIS_TAGS[tag]
    except KeyError:
        raise ValueError(f"unknown measurement basis {tag!r}; choose from {sorted(BASIS_TAGS)}") from None


@dataclass(frozen=True)
class ErrorChannel:
    """Primitive first-order error rates (probabilities)."""

    eps_m: float = 0.002
    eps_S: float = 0.055
    eps_G: float = 0.013
    eps_Pp: float = 0.026
    eps_GPp: float = 0.02
    eps_BBR_Sp: float = 0.02
    eps_BBR_P: float = 0.02
    eps_deex: float = 0.02

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"error rate {k}={v} outside [0, 1]")

    @classmethod
    def ideal(cls) -> "ErrorChannel":
        return cls(**{k: 0.0 for k in cls.__dataclass_fields__})

    @property
    def matrix(self) -> np.ndarray:
        return derive_error_matrix(self)

    def up_presence_row(self) -> np.ndarray:
        """Imaging probabilities (L, g, S, P, S') for the magnon-to-presence readout.

        Derived from the primitive rates, not calibrated: up atoms are
        de-excited and imaged, down atoms are frozen in P' and appear only
        through its decay, holes are parked in G.
        """
        r = self
        return np.array([0.0, 1 - r.eps_m, r.eps_Pp, r.eps_G, 1 - r.eps_m - r.eps_deex])


def derive_error_matrix(rates: ErrorChannel | dict | None = None) -> np.ndarray:
    """4x5 matrix mapping true populations (L, g, S, P, S') to measured
    populations (down, up, hole, ground bases)."""
    if rates is None:
        rates = ErrorChannel()
    elif isinstance(rates, dict):
        rates = ErrorChannel(**rates)
    r = rates
    m, d = r.eps_m, r.eps_deex
    out = np.array([
        [0.0, 1 - m, 1 - m - d, r.eps_G, r.eps_GPp],
        [1.0, m, m + d, m + d + r.eps_BBR_P, 1 - r.eps_Pp],
        [1.0, m, m + d, 1 - r.eps_G, m + d + r.eps_BBR_Sp],
        [0.0, 1 - m, r.eps_S, r.eps_G, r.eps_GPp],
    ])
    if np.any(out < 0) or np.any(out > 1):
        raise ValueError("rates produce an error matrix outside [0, 1]")
    return out


def imaging_probabilities(tag, channel: ErrorChannel | None) -> np.ndarray:
    """P(imaged | true local state) indexed by local state code."""
    mb = _basis(tag)
    if channel is None:
        return mb.ideal_probabilities()
    if mb.tag == "up_presence":
        row = channel.up_presence_row()
    else:
        key = "down" if mb.rotation else mb.tag
        row = derive_error_matrix(channel)[_ROW[key]]
        if mb.absent_means:
            row = 1.0 - row
    return np.array([row[_COLUMN[s]] for s in range(5)])


@dataclass(frozen=True)
class ShotBatch:
    """Binary outcomes, shape ``(n_shots, n_sites)``, 1 = imaged."""

    tag: str
    bits: np.ndarray
    seed: int | None = None
    channel: dict | None = None

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.ndim != 2:
            raise ValueError("bits must be a shots x sites array")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)
        _basis(self.tag)

    @property
    def count(self) -> int:
        return self.bits.shape[0]

    @property
    def n_sites(self) -> int:
        return self.bits.shape[1]

    @property
    def observed(self) -> np.ndarray:
        """1 where the basis observable is detected (absent for up/hole bases)."""
        return 1 - self.bits if _basis(self.tag).absent_means else self.bits


def _rng(seed, tag):
    tag_id = sorted(BASIS_TAGS).index(tag)
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag_id]))


def rotate_for_x(psi: StateVector, sign: int = 1) -> StateVector:
    """Global ``+-pi/2`` pulse on the spin subspace; holes untouched."""
    amp, full = rotate_spins(psi.amplitudes, psi.basis, sign)
    return StateVector(amp, full, psi.time)


def shots_from_configurations(configs, tag, channel: ErrorChannel | None = None,
                              seed: int = 0, _rng_obj=None) -> ShotBatch:
    """Map true five-state configurations (one per shot) to detection bits."""
    mb = _basis(tag)
    cfg = np.asarray(configs)
    rng = _rng_obj or _rng(seed, mb.tag)
    prob = imaging_probabilities(mb, channel)[cfg]
    if channel is None:
        bits = prob.astype(np.uint8)
    else:
        bits = (rng.random(cfg.shape) < prob).astype(np.uint8)
    return ShotBatch(mb.tag, bits, seed, None if channel is None else asdict(channel))


def sample_shots(psi, basis: SectorBasis, mbasis, channel: ErrorChannel | None = None,
                 n: int = 1000, seed: int = 0) -> ShotBatch:
    """Draw ``n`` configurations from ``|psi|^2`` and read them out in ``mbasis``.

    x bases rotate the state first. Output is a deterministic function of
    ``(psi, seed, n, basis tag, channel)``.
    """
    mb = _basis(mbasis)
    amp = np.asarray(getattr(psi, "amplitudes", psi))
    if amp.shape != (basis.dim,):
        raise ValueError("state does not match the basis")
    if n < 1:
        raise ValueError("need at least one shot")
    if mb.rotation:
        amp, basis = rotate_spins(amp, basis, mb.rotation)
    p = np.abs(amp) ** 2
    p = p / p.sum()
    rng = _rng(seed, mb.tag)
    idx = rng.choice(basis.dim, size=n, p=p)
    cfg = basis.unrank_many(idx)
    return shots_from_configurations(cfg, mb, channel, seed, _rng_obj=rng)


def outcome_distribution(psi, basis: SectorBasis, tag, sites) -> dict:
    """Exact ideal probabilities of the observable pattern on ``sites``.

    Keys are tuples of 0/1 with 1 meaning the basis observable was detected
    (the state ``sigma`` of the basis), values sum to one.
    """
    mb = _basis(tag)
    amp = np.asarray(getattr(psi, "amplitudes", psi))
    if mb.rotation:
        amp, basis = rotate_spins(amp, basis, mb.rotation)
    p = np.abs(amp) ** 2
    obs = mb.ideal_probabilities()[basis.configs[:, list(sites)]]
    if mb.absent_means:
        obs = 1 - obs
    out = {}
    keys = obs.astype(int) @ (1 << np.arange(len(sites))[::-1])
    for code in range(1 << len(sites)):
        pat = tuple(int(x) for x in np.binary_repr(code, len(sites)))
        out[pat] = float(p[keys == code].sum())
    return out


def estimate_density(batch: ShotBatch) -> np.ndarray:
    """Per-site mean of the basis observable."""
    return batch.observed.mean(axis=0)


def estimate_pair(batch: ShotBatch) -> np.ndarray:
    """``<n^sigma_i n^sigma_j>`` for every site pair."""
    o = batch.observed.astype(float)
    return o.T @ o / batch.count


def pair_outcomes(batch: ShotBatch, i: int, j: int) -> np.ndarray:
    """Empirical ``(<ss>, <s~s>, <~ss>, <~s~s>)`` on sites ``i, j``."""
    o = batch.observed
    a, b = o[:, i].astype(bool), o[:, j].astype(bool)
    return np.array([np.mean(a & b), np.mean(a & ~b), np.mean(~a & b), np.mean(~a & ~b)])


def save_shots(batch: ShotBatch, path) -> None:
    """Text format: two ``#`` header lines, then one line of 0/1 per shot."""
    with open(Path(path), "w") as fh:
        fh.write(f"# basis={batch.tag} n_sites={batch.n_sites} n_shots={batch.count} seed={batch.seed}\n")
        fh.write(f"# channel={json.dumps(batch.channel)}\n")
        for row in batch.bits:
            fh.write("".join("1" if x else "0" for x in row) + "\n")


def load_shots(path) -> ShotBatch:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# basis="):
        raise ValueError(f"{path}: not a shot file")
    head = dict(kv.split("=", 1) for kv in lines[0][2:].split())
    channel = json.loads(lines[1].split("=", 1)[1])
    rows = [ln.strip() for ln in lines[2:] if ln.strip()]
    bits = np.array([[ch == "1" for ch in r] for r in rows], dtype=np.uint8).reshape(
        len(rows), int(head["n_sites"]))
    if len(rows) != int(head["n_shots"]):
        raise ValueError(f"{path}: header says {head['n_shots']} shots, found {len(rows)}")
    seed = None if head.get("seed") in (None, "None") else int(head["seed"])
    return ShotBatch(head["basis"], bits, seed, channel)
