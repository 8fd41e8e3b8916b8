from collections import deque

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydberg_tj.geometry import (
    brillouin_grid, build_ladder, build_triangular2d, distance, geometry_from_dict, geometry_to_dict,
    lattice_distance, load_geometry, nearest_neighbor_bonds, save_geometry,
)


def test_equilateral_ladder_rung_equals_leg():
    g = build_ladder(19, 1.0, np.sqrt(3) / 2)
    assert distance(g, 0, 1) == pytest.approx(1.0, abs=1e-12)
    assert distance(g, 0, 2) == pytest.approx(1.0, abs=1e-12)
    nn = {round(g.distances[i, j], 9) for i, j in nearest_neighbor_bonds(g)}
    assert nn == {1.0}


def test_ladder_rung_distance_from_coordinates():
    g = build_ladder(19, 19.6, 9.8)
    expected = np.hypot(19.6 / 2, 9.8)
    assert distance(g, 0, 1) == pytest.approx(expected, abs=1e-12)
    assert distance(g, 0, 1) == pytest.approx(13.859, abs=5e-4)
    assert distance(g, 0, 2) == pytest.approx(19.6)


def test_ladder_zero_height_is_chain():
    g = build_ladder(19, 2.0, 0.0)
    assert np.allclose(g.positions[:, 1], 0)
    assert np.allclose(np.diff(g.positions[:, 0]), 1.0)


@pytest.mark.parametrize("args", [(1, 1.0, 0.5), (5, 0.0, 0.5), (5, -1.0, 0.5), (5, 1.0, -0.1)])
def test_ladder_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_ladder(*args)


def _bfs_bond_count_and_dist(g):
    # independent brute force: compare every pair to the spacing
    n = g.n_sites
    adj = [[j for j in range(n) if j != i and abs(np.linalg.norm(g.positions[i] - g.positions[j]) - g.a) < 1e-9]
           for i in range(n)]
    bonds = sum(len(a) for a in adj) // 2
    dist = np.full((n, n), -1)
    for s in range(n):
        dist[s, s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if dist[s, v] < 0:
                    dist[s, v] = dist[s, u] + 1
                    q.append(v)
    return bonds, dist


def test_hexagon37_bond_count():
    g = build_triangular2d(37, 3.0)
    assert g.n_sites == 37
    bonds, _ = _bfs_bond_count_and_dist(g)
    assert bonds == 90
    assert len(nearest_neighbor_bonds(g)) == 90


def test_hexagon7_center_coordination():
    g = build_triangular2d(7, 1.0)
    c = g.site_at((0, 0))
    assert sum(1 for i, j in nearest_neighbor_bonds(g) if c in (i, j)) == 6


def test_single_site_no_bonds():
    assert nearest_neighbor_bonds(build_triangular2d(1, 1.0)) == []


def test_unsupported_cluster_size():
    with pytest.raises(ValueError):
        build_triangular2d(8, 1.0)
    g = build_triangular2d(3, 1.0, [[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
    assert g.explicit and g.n_sites == 3


def test_distance_errors():
    g = build_ladder(4, 1.0, 0.5)
    with pytest.raises(ValueError):
        distance(g, 1, 1)
    with pytest.raises(IndexError):
        distance(g, 0, 4)


def test_lattice_distance_examples():
    assert lattice_distance(build_ladder(19, 1.0, 0.8), 8, 11) == 3
    g = build_triangular2d(19, 1.0)
    assert lattice_distance(g, 4, 4) == 0
    # rhombus of two triangles: (0,0), (1,0), (1/2, s3/2), (3/2, s3/2)
    i, j = g.site_at((0, 0)), g.site_at((1.5, np.sqrt(3) / 2))
    assert lattice_distance(g, i, j) == 2


def test_lattice_distance_matches_bfs_and_triangle_inequality():
    g = build_triangular2d(37, 1.0)
    _, dist = _bfs_bond_count_and_dist(g)
    D = g.hop_distances
    assert np.array_equal(D, dist)
    # triangle inequality, exhaustively
    assert np.all(D[:, None, :] <= D[:, :, None] + D[None, :, :])


@given(st.integers(2, 30), st.floats(0.5, 30), st.floats(0, 30))
def test_ladder_distance_symmetry(n, a, h):
    g = build_ladder(n, a, h)
    assert np.allclose(g.distances, g.distances.T)
    assert np.all(g.distances[np.triu_indices(n, 1)] > 0)
    # consecutive sites alternate legs and advance by a/2
    assert np.allclose(np.diff(g.positions[:, 0]), a / 2)
    assert np.allclose(g.positions[1::2, 1], h) and np.allclose(g.positions[::2, 1], 0)


def test_brillouin_grid_has_gamma_and_k():
    grid = brillouin_grid(1.0)
    assert np.allclose(grid.k_points[grid.index_of("Γ")[0]], 0)
    ks = grid.k_points[grid.index_of("K")]
    assert len(ks) == 6
    assert np.allclose(np.linalg.norm(ks, axis=1), 4 * np.pi / 3)
    # K points are equivalent to Bragg-reflected copies: exp(i K.R) is a cube root of unity
    g = build_triangular2d(7, 1.0)
    ph = np.exp(1j * g.positions @ ks[0])
    assert np.allclose(ph ** 3, 1)


def test_geometry_roundtrip(tmp_path):
    for g in (build_ladder(7, 14.7, 9.0), build_triangular2d(7, 2.0),
              build_triangular2d(3, 1.0, [[0, 0], [1, 0], [0.5, 0.8660254]])):
        save_geometry(g, tmp_path / "g.json")
        g2 = load_geometry(tmp_path / "g.json")
        assert np.allclose(g2.positions, g.positions) and g2.kind == g.kind
        assert geometry_to_dict(geometry_from_dict(geometry_to_dict(g))) == geometry_to_dict(g)
