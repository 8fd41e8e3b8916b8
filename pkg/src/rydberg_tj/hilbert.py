"""Gutzwiller-projected configuration space with conserved hole number and magnetization.

A configuration is a word over the local states ``down=0, up=1, hole=2``
(the error pipeline adds ``ground=3`` and ``lost=4``). Words are ordered
lexicographically with site 0 most significant, and :class:`SectorBasis`
ranks and unranks them with multinomial counting, so lookups are
``O(n_sites)`` and never need a hash table.

``n_up=None`` selects the union of all magnetizations at fixed hole number;
this is the space reached after global spin rotations.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

__all__ = [
    "DOWN",
    "UP",
    "HOLE",
    "GROUND",
    "LOST",
    "LETTERS",
    "DEFAULT_CAP",
    "CapacityError",
    "SectorBasis",
    "enumerate_sector",
    "config_to_string",
    "config_from_string",
    "sector_dimension",
]

DOWN, UP, HOLE, GROUND, LOST = 0, 1, 2, 3, 4
LETTERS = "duhgL"
DEFAULT_CAP = 10_000_000


class CapacityError(ValueError):
    """Requested sector exceeds the configured dimension cap."""


def config_to_string(config) -> str:
    return "".join(LETTERS[int(s)] for s in config)


def config_from_string(word: str) -> np.ndarray:
    try:
        return np.array([LETTERS.index(ch) for ch in word], dtype=np.int8)
    except ValueError:
        raise ValueError(f"invalid configuration string {word!r}") from None


def sector_dimension(n_sites: int, n_holes: int, n_up: int | None) -> int:
    if n_holes < 0 or n_holes > n_sites:
        return 0
    if n_up is None:
        return comb(n_sites, n_holes) * 2 ** (n_sites - n_holes)
    if n_up < 0 or n_holes + n_up > n_sites:
        return 0
    return comb(n_sites, n_holes) * comb(n_sites - n_holes, n_up)


@lru_cache(maxsize=64)
def _count_table(n_sites: int, free_spin: bool) -> np.ndarray:
    """``table[rem, holes, ups]`` = number of words of length ``rem``."""
    n = n_sites
    t = np.zeros((n + 1, n + 2, n + 2), dtype=np.int64)
    for rem in range(n + 1):
        for h in range(rem + 1):
            if free_spin:
                t[rem, h, :] = comb(rem, h) * 2 ** (rem - h)
            else:
                for u in range(rem - h + 1):
                    t[rem, h, u] = comb(rem, h) * comb(rem - h, u)
    t.setflags(write=False)
    return t


class SectorBasis:
    """Lexicographically ordered configurations with fixed ``(n_holes, n_up)``."""

    def __init__(self, n_sites: int, n_holes: int, n_up: int | None = None, cap: int = DEFAULT_CAP):
        if n_sites < 1:
            raise ValueError("need at least one site")
        if n_holes < 0 or (n_up is not None and n_up < 0):
            raise ValueError("hole and up counts must be non-negative")
        if n_holes + (n_up or 0) > n_sites:
            raise ValueError("n_holes + n_up exceeds n_sites")
        dim = sector_dimension(n_sites, n_holes, n_up)
        if dim > cap:
            raise CapacityError(
                f"sector ({n_sites} sites, {n_holes} holes, n_up={n_up}) has dimension "
                f"{dim} > cap {cap}"
            )
        self.n_sites = n_sites
        self.n_holes = n_holes
        self.n_up = n_up
        self.dim = dim
        self._table = _count_table(n_sites, n_up is None)
        self._configs = None

    def __repr__(self):
        return (
            f"SectorBasis(n_sites={self.n_sites}, n_holes={self.n_holes}, "
            f"n_up={self.n_up}, dim={self.dim})"
        )

    def __len__(self):
        return self.dim

    def same_sector(self, other: "SectorBasis") -> bool:
        return (self.n_sites, self.n_holes, self.n_up) == (other.n_sites, other.n_holes, other.n_up)

    @property
    def configs(self) -> np.ndarray:
        """All configurations as a read-only ``(dim, n_sites)`` int8 array."""
        if self._configs is None:
            c = self.unrank_many(np.arange(self.dim, dtype=np.int64))
            c.setflags(write=False)
            self._configs = c
        return self._configs

    def _completions(self, rem, holes, ups):
        holes = np.asarray(holes)
        ups = np.asarray(ups)
        ok = (holes >= 0) & (ups >= 0) & (holes <= rem)
        if self.n_up is not None:
            ok &= holes + ups <= rem
        hh = np.clip(holes, 0, self.n_sites + 1)
        uu = np.clip(ups, 0, self.n_sites + 1)
        return np.where(ok, self._table[rem, hh, uu], 0)

    def contains(self, configs) -> np.ndarray:
        c = np.atleast_2d(np.asarray(configs))
        if c.shape[1] != self.n_sites:
            return np.zeros(len(c), dtype=bool)
        ok = ((c >= 0) & (c <= HOLE)).all(axis=1) & ((c == HOLE).sum(axis=1) == self.n_holes)
        if self.n_up is not None:
            ok &= (c == UP).sum(axis=1) == self.n_up
        return ok

    def rank_many(self, configs) -> np.ndarray:
        """Ordinals of many configurations (rows); all must lie in the sector."""
        c = np.atleast_2d(np.asarray(configs))
        n = self.n_sites
        m = len(c)
        rank = np.zeros(m, dtype=np.int64)
        holes = np.full(m, self.n_holes, dtype=np.int64)
        ups = np.full(m, self.n_up if self.n_up is not None else 0, dtype=np.int64)
        for i in range(n):
            s = c[:, i]
            rem = n - i - 1
            # words with DOWN here precede UP and HOLE; UP precedes HOLE
            gt_down = s > DOWN
            if gt_down.any():
                rank += np.where(gt_down, self._completions(rem, holes, ups), 0)
            gt_up = s > UP
            if gt_up.any():
                if self.n_up is None:
                    rank += np.where(gt_up, self._completions(rem, holes, ups), 0)
                else:
                    rank += np.where(gt_up, self._completions(rem, holes, ups - 1), 0)
            holes -= s == HOLE
            if self.n_up is not None:
                ups -= s == UP
        return rank

    def rank(self, config) -> int:
        """Ordinal of one configuration (string or int sequence)."""
        if isinstance(config, str):
            config = config_from_string(config)
        c = np.asarray(config)
        if not self.contains(c)[0]:
            raise ValueError(f"configuration {config_to_string(c)} is outside {self!r}")
        return int(self.rank_many(c[None, :])[0])

    def unrank_many(self, ordinals) -> np.ndarray:
        m = np.array(ordinals, dtype=np.int64)
        if m.size and (m.min() < 0 or m.max() >= self.dim):
            raise IndexError("ordinal outside sector")
        n = self.n_sites
        out = np.empty((len(m), n), dtype=np.int8)
        holes = np.full(len(m), self.n_holes, dtype=np.int64)
        ups = np.full(len(m), self.n_up if self.n_up is not None else 0, dtype=np.int64)
        for i in range(n):
            rem = n - i - 1
            c_down = self._completions(rem, holes, ups)
            if self.n_up is None:
                c_up = c_down
            else:
                c_up = self._completions(rem, holes, ups - 1)
            is_down = m < c_down
            is_up = ~is_down & (m < c_down + c_up)
            is_hole = ~is_down & ~is_up
            out[:, i] = np.where(is_down, DOWN, np.where(is_up, UP, HOLE))
            m = m - np.where(is_down, 0, c_down) - np.where(is_hole, c_up, 0)
            holes -= is_hole
            if self.n_up is not None:
                ups -= is_up
        return out

    def unrank(self, ordinal: int) -> np.ndarray:
        return self.unrank_many([ordinal])[0]

    def index_of_string(self, word: str) -> int:
        return self.rank(config_from_string(word))


def enumerate_sector(n_sites: int, n_holes: int, n_up: int | None = None, cap: int = DEFAULT_CAP) -> SectorBasis:
    """Build the sector basis; raises :class:`CapacityError` above ``cap``."""
    return SectorBasis(n_sites, n_holes, n_up, cap=cap)
