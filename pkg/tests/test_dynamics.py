import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from rydberg_tj.dynamics import (
    EvolutionSchedule, RampedHamiltonian, StateVector, ToleranceError, evolve, krylov_expmv, load_snapshots,
    overlap_trace, product_state, save_snapshots,
)
from rydberg_tj.geometry import build_ladder
from rydberg_tj.hamiltonian import CouplingSet, LightShiftProgram, SparseOperator, build_tJ
from rydberg_tj.hilbert import SectorBasis


def _small_ramp(n=7):
    g = build_ladder(n, 14.7, 14.7 * np.sqrt(3) / 2)
    b = SectorBasis(n, 1, 1)
    H0 = build_tJ(g, b, CouplingSet())
    hole, mag = n // 2 - 1, n // 2
    prog = LightShiftProgram(magnon_sites=[mag], hole_sites=[hole])
    cfg = ["d"] * n
    cfg[hole], cfg[mag] = "h", "u"
    return b, H0, prog, product_state(b, "".join(cfg))


def test_zero_hamiltonian_leaves_state():
    b = SectorBasis(4, 1, 1)
    psi = product_state(b, "dhud")
    zero = SparseOperator(b, sp.csr_matrix((b.dim, b.dim)))
    out = evolve(psi, lambda t: zero, EvolutionSchedule(0, 2, snapshots=(0, 1, 2)))
    for _, st_ in out:
        assert np.array_equal(st_.amplitudes, psi.amplitudes)


def test_static_diagonal_phases():
    b = SectorBasis(4, 1, 1)
    lam = np.linspace(-3, 2, b.dim)
    H = SparseOperator(b, sp.diags(lam, format="csr"))
    a0 = np.ones(b.dim) / np.sqrt(b.dim)
    out = evolve(StateVector(a0, b), lambda t: H, EvolutionSchedule(0, 1.3, snapshots=(1.3,)))
    assert np.allclose(out[-1][1].amplitudes, a0 * np.exp(-1j * lam * 1.3), atol=1e-10)


def test_two_level_rabi():
    g = build_ladder(2, 2.0, 0.0)
    c = CouplingSet(a_ref=1.0)
    b = SectorBasis(2, 1, 0)
    H = build_tJ(g, b, c)
    T = np.linspace(0, 1, 6)
    out = evolve(product_state(b, "hd"), lambda t: H, EvolutionSchedule(0, 1, snapshots=tuple(T)))
    right = b.index_of_string("dh")
    for t, s in out:
        assert abs(s.amplitudes[right]) ** 2 == pytest.approx(np.sin(c.t_dn * t) ** 2, abs=1e-10)


def test_krylov_matches_dense_expm():
    b, H0, prog, psi = _small_ramp(9)
    assert b.dim <= 200
    H = H0.toarray() + np.diag(RampedHamiltonian(H0, prog).diagonal_shift(0.3))
    v = np.random.default_rng(0).normal(size=b.dim) + 0j
    v /= np.linalg.norm(v)
    for tau in (0.001, 0.01, 0.05):
        w, err = krylov_expmv(H, v, tau, 20)
        assert np.abs(w - expm(-1j * tau * H) @ v).max() < 1e-8
        assert err < 1e-8


def test_ramp_matches_ode_oracle():
    b, H0, prog, psi = _small_ramp(7)
    rh = RampedHamiltonian(H0, prog)
    Hd = H0.toarray()

    def rhs(t, y):
        return -1j * (Hd @ y + rh.diagonal_shift(t) * y)

    ref = psi.amplitudes.copy()
    for seg in ((0, 1), (1, 2)):
        ref = solve_ivp(rhs, seg, ref, method="DOP853", rtol=1e-12, atol=1e-13).y[:, -1]
    for method in ("magnus4", "midpoint"):
        out = evolve(psi, rh, EvolutionSchedule(0, 2, snapshots=(2,), method=method, max_step=0.005))
        fid = abs(np.vdot(ref, out[-1][1].amplitudes)) ** 2
        assert fid > 1 - 1e-6, method


def test_norm_and_energy_conservation():
    b, H0, prog, psi = _small_ramp(9)
    out = evolve(psi, RampedHamiltonian(H0, prog), EvolutionSchedule(0, 6))
    assert [t for t, _ in out] == [0, 1, 2, 4, 5, 6]
    assert max(abs(s.norm - 1) for _, s in out) < 1e-6
    # time-independent H: energy constant
    v = np.random.default_rng(1).normal(size=b.dim) + 0j
    v = StateVector(v / np.linalg.norm(v), b)
    out = evolve(v, lambda t: H0, EvolutionSchedule(0, 3, snapshots=(0, 3)))
    E = [np.vdot(s.amplitudes, H0 @ s.amplitudes).real for _, s in out]
    assert abs(E[1] - E[0]) <= 1e-6 * abs(E[0])


@pytest.mark.parametrize("method", ["magnus4", "midpoint"])
def test_step_halving_converged(method):
    b, H0, prog, psi = _small_ramp(9)
    rh = RampedHamiltonian(H0, prog)
    a = evolve(psi, rh, EvolutionSchedule(0, 4, snapshots=(4,), method=method))[-1][1]
    h = evolve(psi, rh, EvolutionSchedule(0, 4, snapshots=(4,), method=method, max_step=0.005))[-1][1]
    assert abs(1 - abs(a.overlap(h)) ** 2) < 1e-6


def test_tolerance_error():
    b, H0, prog, psi = _small_ramp(7)
    sched = EvolutionSchedule(0, 1, snapshots=(1,), max_step=1.0, krylov_dim=2, tol=1e-14, max_halvings=1)
    with pytest.raises(ToleranceError):
        evolve(psi, RampedHamiltonian(H0, prog), sched)


def test_schedule_validation():
    with pytest.raises(ValueError):
        EvolutionSchedule(0, 1, snapshots=(2,))
    with pytest.raises(ValueError):
        EvolutionSchedule(2, 1)
    assert EvolutionSchedule(0, 4).snapshots == (0, 1, 2, 4)
    b = SectorBasis(3, 1, 0)
    with pytest.raises(ValueError):
        evolve(StateVector(np.ones(3), b), lambda t: None, EvolutionSchedule(0, 1))


def test_overlap_trace_examples():
    b, H0, prog, psi = _small_ramp(7)
    out = evolve(psi, RampedHamiltonian(H0, prog), EvolutionSchedule(0, 2, snapshots=(0, 1, 2)))
    tr = overlap_trace(out, [psi.amplitudes])
    assert tr["overlaps"][0, 0] == pytest.approx(1)
    other = product_state(b, "hudd" + "ddd"[: b.n_sites - 4])
    tr2 = overlap_trace(out[:1], [other.amplitudes])
    assert tr2["overlaps"][0, 0] == 0
    w, v = np.linalg.eigh(H0.toarray())
    tr3 = overlap_trace(out, v[:, :10], manifold=10)
    assert np.all(np.diff(tr3["projection"], axis=1) >= -1e-15)
    assert np.all((tr3["projection"] >= 0) & (tr3["projection"] <= 1))
    with pytest.raises(ValueError):
        overlap_trace(out, [np.ones(3)])


@given(st.floats(0.01, 2.0))
def test_snapshot_roundtrip(t_end):
    import tempfile, os

    b, H0, prog, psi = _small_ramp(5)
    out = evolve(psi, RampedHamiltonian(H0, prog), EvolutionSchedule(0, t_end, snapshots=(0, t_end)))
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "s.tsv")
        save_snapshots(p, out)
        back = load_snapshots(p, b)
    assert len(back) == 2
    assert np.allclose(back[-1][1].amplitudes, out[-1][1].amplitudes, atol=1e-15)
