from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydberg_tj.hilbert import (
    CapacityError, SectorBasis, config_from_string, config_to_string, enumerate_sector, sector_dimension,
)
from oracles import naive_basis


@pytest.mark.parametrize("args,dim", [((3, 1, 1), 6), ((19, 1, 1), 342), ((19, 1, 2), 2907)])
def test_dimension_examples(args, dim):
    assert enumerate_sector(*args).dim == dim


def test_brute_force_count_19_1_2():
    n = 19
    count = sum(1 for h in range(n) for u in range(n) for v in range(u + 1, n) if h not in (u, v))
    assert count == 2907


@pytest.mark.parametrize("args", [(3, 1, 1), (5, 2, 1), (6, 0, 3), (4, 1, None)])
def test_order_matches_lexicographic_oracle(args):
    b = SectorBasis(*args)
    assert [tuple(c) for c in b.configs] == naive_basis(*args)


def test_rank_first_last_random():
    b = SectorBasis(8, 2, 3)
    c = b.configs
    assert b.rank(c[0]) == 0
    assert b.rank(c[-1]) == b.dim - 1
    rng = np.random.default_rng(0)
    for k in rng.integers(0, b.dim, 20):
        # linear-scan oracle
        target = tuple(c[k])
        pos = next(m for m, x in enumerate(map(tuple, c)) if x == target)
        assert b.rank(c[k]) == pos


def test_rank_outside_sector():
    b = SectorBasis(4, 1, 1)
    with pytest.raises(ValueError):
        b.rank(config_from_string("hhdd"))


def test_capacity_error():
    with pytest.raises(CapacityError):
        SectorBasis(37, 1, 18)
    with pytest.raises(ValueError):
        SectorBasis(3, 2, 2)


@given(st.integers(1, 20).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n)).flatmap(
    lambda t: st.tuples(st.just(t[0]), st.just(t[1]), st.integers(0, t[0] - t[1])))))
def test_dimension_formula(args):
    n, h, u = args
    assert sector_dimension(n, h, u) == comb(n, h) * comb(n - h, u)


@given(st.integers(1, 9).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n)).flatmap(
    lambda t: st.tuples(st.just(t[0]), st.just(t[1]), st.integers(0, t[0] - t[1])))))
def test_rank_unrank_bijection(args):
    b = SectorBasis(*args)
    if b.dim > 1e5:
        return
    m = np.arange(b.dim)
    assert np.array_equal(b.rank_many(b.unrank_many(m)), m)


def test_string_roundtrip():
    w = "dduhgL"
    assert config_to_string(config_from_string(w)) == w
    with pytest.raises(ValueError):
        config_from_string("dx")
    b = SectorBasis(3, 1, 1)
    assert b.index_of_string("duh") == b.rank(np.array([0, 1, 2]))
