import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import NUM, SZ, embed, expect, lift, random_state
from rydberg_tj.hilbert import SectorBasis
from rydberg_tj.measurement import ErrorChannel, outcome_distribution, pair_outcomes, sample_shots
from rydberg_tj.observables import pair_expectation
from rydberg_tj.reconstruction import (
    BASIS_ORDER, build_system, combos_from_correlators, consistency_residual, error_dressed_system,
    invert_error_model, least_squares_correlators, measured_pair_vector, pair_vector_from_correlators,
    reconstruct_pair_combos, reconstruct_three_body,
)

PRINTED_A = np.array([
    [1, 0, 0, 0, 0, 0, 0, 0, 0], [0, 1, 1, 0, 0, 0, 0, 0, 0], [0, 0, 0, 1, 0, 0, 1, 0, 0],
    [0, 0, 0, 0, 1, 1, 0, 1, 1], [0, 0, 0, 0, 1, 0, 0, 0, 0], [0, 0, 0, 1, 0, 1, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0, 1, 0], [1, 0, 1, 0, 0, 0, 1, 0, 1], [0, 0, 0, 0, 0, 0, 0, 0, 1],
    [0, 0, 0, 0, 0, 0, 1, 1, 0], [0, 0, 1, 0, 0, 1, 0, 0, 0], [1, 1, 0, 1, 1, 0, 0, 0, 0],
])
SECTORS = [(3, 1, None), (3, 0, None), (3, 2, None), (4, 1, None), (4, 2, 1)]
ORDER = ("up", "hole", "down")


def exact_m(psi, b, i, j):
    per = {}
    for tag in BASIS_ORDER:
        d = outcome_distribution(psi, b, tag, [i, j])
        per[tag] = [d[(1, 1)], d[(1, 0)], d[(0, 1)], d[(0, 0)]]
    return measured_pair_vector(per)


def correlator_vector(psi, b, i, j):
    return np.array([pair_expectation(psi, b, x, y)[i, j] for x in ORDER for y in ORDER])


def direct_combos(psi, b, i, j):
    """Kronecker-space operator expectations."""
    n = b.n_sites
    v = lift(psi, b.configs, n)
    e = lambda ops: expect(v, embed(ops, n))  # noqa: E731
    return {
        "spin_spin": 4 * e({i: SZ, j: SZ}),
        "sym_hole_sz": 2 * (e({i: NUM["hole"], j: SZ}) + e({i: SZ, j: NUM["hole"]})),
        "sym_hole_up": e({i: NUM["hole"], j: NUM["up"]}) + e({i: NUM["up"], j: NUM["hole"]}),
    }


def direct_three_body(psi, b, sites):
    n = b.n_sites
    v = lift(psi, b.configs, n)
    a, c, d = sites
    tot = 0.0
    for x, y, z in ((a, c, d), (c, a, d), (d, a, c)):
        tot += expect(v, embed({x: NUM["hole"], y: SZ, z: SZ}, n))
    return 4 * tot


def exact_m24(psi, b, sites):
    return {tag: outcome_distribution(psi, b, tag, list(sites)) for tag in BASIS_ORDER}


# ---------------------------------------------------------------- system

def test_matrix_is_printed_one():
    assert np.array_equal(build_system().A, PRINTED_A)


def test_rank_and_null_vector():
    sys_ = build_system()
    assert sys_.rank == 8
    assert np.abs(sys_.A @ sys_.null_vector).max() < 1e-12
    assert np.allclose(sys_.null_vector, [0, 1, -1, -1, 0, 1, 1, -1, 0])


def test_first_row_selects_up_up():
    assert np.array_equal(build_system().A[0], np.eye(9)[0])


def test_column_sums():
    # each correlator appears in exactly one outcome per basis
    assert np.array_equal(build_system().A.sum(axis=0), np.full(9, 3))


def test_combos_are_blind_to_null_direction(rng):
    null = build_system().null_vector
    for _ in range(20):
        C = rng.random(9)
        base = combos_from_correlators(C)
        shifted = combos_from_correlators(C + rng.normal() * null)
        for k in base:
            assert shifted[k] == pytest.approx(base[k], abs=1e-12)


def test_closed_forms_agree_with_correlator_forms(rng):
    for _ in range(20):
        C = rng.random(9)
        a = reconstruct_pair_combos(pair_vector_from_correlators(C))
        b = combos_from_correlators(C)
        for k in a:
            assert a[k] == pytest.approx(b[k], abs=1e-12)


# ---------------------------------------------------------------- pair combos

def _single(tags_to_pattern):
    return measured_pair_vector({t: tags_to_pattern[t] for t in BASIS_ORDER})


def test_both_down_deterministic():
    # outcomes: up basis sees not-up twice, hole basis not-hole twice, down basis down twice
    m = _single({"up": [0, 0, 0, 1], "hole": [0, 0, 0, 1], "down": [1, 0, 0, 0]})
    c = reconstruct_pair_combos(m)
    assert c == {"spin_spin": 1.0, "sym_hole_sz": 0.0, "sym_hole_up": 0.0}


def test_hole_up_deterministic():
    m = _single({"up": [0, 0, 1, 0], "hole": [0, 1, 0, 0], "down": [0, 0, 0, 1]})
    assert reconstruct_pair_combos(m)["sym_hole_up"] == 1.0


def test_pair_combos_on_500_random_states():
    rng = np.random.default_rng(500)
    count = 0
    while count < 500:
        n, nh, nu = SECTORS[count % len(SECTORS)]
        b = SectorBasis(n, nh, nu)
        psi = random_state(b.dim, rng)
        i, j = rng.choice(n, 2, replace=False)
        got = reconstruct_pair_combos(exact_m(psi, b, i, j))
        ref = direct_combos(psi, b, i, j)
        for k in ref:
            assert got[k] == pytest.approx(ref[k], abs=1e-10)
        count += 1


def test_three_body_deterministic_triples():
    b = SectorBasis(3, 1, 0)
    psi = np.zeros(b.dim)
    psi[b.rank(np.array([2, 0, 0], dtype=np.int8))] = 1
    assert reconstruct_three_body(exact_m24(psi, b, (0, 1, 2))) == pytest.approx(1.0)
    b0 = SectorBasis(3, 0, 0)
    assert reconstruct_three_body(exact_m24(np.ones(1), b0, (0, 1, 2))) == pytest.approx(0.0)


def test_three_body_on_random_states():
    rng = np.random.default_rng(27)
    for k in range(120):
        n, nh, nu = SECTORS[k % len(SECTORS)]
        b = SectorBasis(n, nh, nu)
        psi = random_state(b.dim, rng)
        sites = tuple(rng.choice(n, 3, replace=False))
        got = reconstruct_three_body(exact_m24(psi, b, sites))
        assert got == pytest.approx(direct_three_body(psi, b, sites), abs=1e-10)


# ---------------------------------------------------------------- residuals and least squares

def test_residual_zero_for_exact_statistics(rng):
    for n, nh, nu in SECTORS:
        b = SectorBasis(n, nh, nu)
        psi = random_state(b.dim, rng)
        assert consistency_residual(exact_m(psi, b, 0, 1)) < 1e-12


def test_residual_detects_perturbation(rng):
    b = SectorBasis(4, 1, None)
    m = exact_m(random_state(b.dim, rng), b, 1, 2)
    m[5] += 0.1
    assert consistency_residual(m) > 1e-3


def test_residual_from_shots_is_at_noise_scale(rng):
    b = SectorBasis(4, 1, None)
    psi = random_state(b.dim, rng)
    n = 10_000
    per = {t: pair_outcomes(sample_shots(psi, b, t, n=n, seed=4), 0, 1) for t in BASIS_ORDER}
    r = consistency_residual(measured_pair_vector(per))
    # four directions orthogonal to the column space, each entry with variance <= 1/(4n)
    assert 0 < r < 5 * np.sqrt(4 / (4 * n))


def test_least_squares_is_min_norm_and_flags_null_direction(rng):
    b = SectorBasis(4, 1, None)
    psi = random_state(b.dim, rng)
    C = correlator_vector(psi, b, 0, 2)
    sol = least_squares_correlators(pair_vector_from_correlators(C))
    assert np.allclose(build_system().A @ sol["C"], build_system().A @ C)
    assert abs(sol["C"] @ sol["null_direction"]) < 1e-10
    assert "undetermined" in sol["note"]


def test_missing_basis_rejected():
    with pytest.raises(ValueError):
        measured_pair_vector({"up": [1, 0, 0, 0]})


# ---------------------------------------------------------------- error model

def test_ideal_dressed_system_is_A():
    assert np.array_equal(error_dressed_system(None), PRINTED_A)
    assert np.array_equal(error_dressed_system(ErrorChannel.ideal()), PRINTED_A)


@given(st.integers(0, 2**32 - 1))
def test_error_inversion_recovers_ideal_combos(seed):
    rng = np.random.default_rng(seed)
    b = SectorBasis(4, 1, 1)
    psi = random_state(b.dim, rng)
    C = correlator_vector(psi, b, 1, 3)
    ch = ErrorChannel()
    noisy = error_dressed_system(ch) @ C
    got = invert_error_model(noisy, ch)
    ref = combos_from_correlators(C)
    for k in ref:
        assert got[k] == pytest.approx(ref[k], abs=1e-8)


def test_dressed_system_matches_configuration_sum(rng):
    # brute force over configurations with independent per-site detection
    from rydberg_tj.measurement import imaging_probabilities

    b = SectorBasis(3, 1, None)
    psi = random_state(b.dim, rng)
    p = np.abs(psi) ** 2
    ch = ErrorChannel()
    C = correlator_vector(psi, b, 0, 2)
    pred = error_dressed_system(ch) @ C
    brute = []
    for tag in BASIS_ORDER:
        img = imaging_probabilities(tag, ch)
        absent = tag in ("up", "hole")
        for oi, oj in itertools.product((1, 0), repeat=2):
            tot = 0.0
            for w, c in zip(p, b.configs):
                qi = 1 - img[c[0]] if absent else img[c[0]]
                qj = 1 - img[c[2]] if absent else img[c[2]]
                tot += w * (qi if oi else 1 - qi) * (qj if oj else 1 - qj)
            brute.append(tot)
    assert np.allclose(pred, brute, atol=1e-12)


def test_noisy_shots_follow_dressed_system(rng):
    b = SectorBasis(4, 1, None)
    psi = random_state(b.dim, rng)
    n = 40_000
    ch = ErrorChannel()
    per = {t: pair_outcomes(sample_shots(psi, b, t, ch, n=n, seed=6), 1, 2) for t in BASIS_ORDER}
    m = measured_pair_vector(per)
    pred = error_dressed_system(ch) @ correlator_vector(psi, b, 1, 2)
    sigma = np.sqrt(np.maximum(pred * (1 - pred), 1e-12) / n)
    assert np.all(np.abs(m - pred) < 5 * sigma + 1e-12)
