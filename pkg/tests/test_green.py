import itertools
import math

import numpy as np
import pytest

from loopfield import (
    Network,
    RecurrentNetworkError,
    compute_green,
    interpolated_green,
    normalized_green,
    path_network,
    sqrt_det_ratio,
    two_vertex_network,
)

# hand inversion of A = [[2,-1],[-1,2]]
G_TWO_VERTEX = np.array([[2.0, 1.0], [1.0, 2.0]]) / 3.0
# hand inversion of A = [[2,-1,0],[-1,3,-1],[0,-1,2]], det A = 8
G_PATH3 = np.array([[5.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 5.0]]) / 8.0


def test_two_vertex_green(two_vertex):
    net, gop = two_vertex
    assert np.allclose(gop.matrix_a, [[2.0, -1.0], [-1.0, 2.0]], atol=1e-15)
    assert np.allclose(gop.green, G_TWO_VERTEX, atol=1e-12)


def test_single_vertex_green():
    net = Network(1, (), np.array([3.0]))
    gop = compute_green(net)
    assert gop.green[0, 0] == pytest.approx(1.0 / 3.0, abs=1e-14)


def test_path3_green_vs_solve_oracle(path3):
    net, gop = path3
    # independent route: dense solve of the energy form
    oracle = np.linalg.solve(gop.matrix_a, np.eye(3))
    assert np.allclose(gop.green, oracle, atol=1e-12)
    assert np.allclose(gop.green, G_PATH3, atol=1e-12)


def test_green_operator_invariants(grid3):
    net, gop = grid3
    n = net.alive.size
    assert np.abs(gop.matrix_a @ gop.green - np.eye(n)).max() < 1e-10
    assert np.abs(gop.green - gop.green.T).max() < 1e-14
    assert np.all(np.diag(gop.green) > 0)
    assert np.abs(gop.chol @ gop.chol.T - gop.green).max() < 1e-10
    sign, logdet = np.linalg.slogdet(gop.green)
    assert sign > 0
    assert gop.log_det_g == pytest.approx(logdet, abs=1e-10)


def test_normalized_green(two_vertex, path3):
    _, gop = two_vertex
    assert normalized_green(gop, 0, 1) == pytest.approx(0.5, abs=1e-12)
    assert normalized_green(gop, 0, 0) == pytest.approx(1.0, abs=1e-15)
    _, gop3 = path3
    # endpoints of the 3-path: G13 / sqrt(G11 G33) = (1/8) / (5/8)
    assert normalized_green(gop3, 0, 2) == pytest.approx(0.2, abs=1e-12)


def test_sqrt_det_ratio_values(two_vertex, path3):
    net, _ = two_vertex
    assert sqrt_det_ratio(net, []) == 1.0
    assert sqrt_det_ratio(net, [(0, 1)]) == pytest.approx(math.sqrt(3.0) / 2.0, abs=1e-12)
    net3, _ = path3
    assert sqrt_det_ratio(net3, [(0, 1)]) == pytest.approx(math.sqrt(0.8), abs=1e-12)


def test_sqrt_det_ratio_monotone_under_more_edges():
    # square with four edges: every chain of subsets is nonincreasing
    square = Network(
        4, ((0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (0, 3, 1.0)), np.full(4, 0.7)
    )
    for net in (square, path_network(4, killing=0.4)):
        ids = range(net.edge_count)
        ratio = {
            frozenset(sub): sqrt_det_ratio(net, list(sub))
            for k in range(net.edge_count + 1)
            for sub in itertools.combinations(ids, k)
        }
        for sub, value in ratio.items():
            assert 0.0 < value <= 1.0
            for extra in ids:
                if extra not in sub:
                    assert ratio[sub | {extra}] <= value + 1e-12


def test_near_recurrent_rejected():
    net = two_vertex_network(killing=1e-16)
    with pytest.raises(RecurrentNetworkError):
        compute_green(net)


def test_interpolation_endpoint_recovery(path3):
    net, gop = path3
    # r = 0 on both edges recovers the vertex Green values exactly
    assert interpolated_green(gop, net, (0, 0.0), (1, 0.0)) == pytest.approx(
        gop.entry(0, 1), abs=1e-15
    )
    rho = net.rho(0)
    assert interpolated_green(gop, net, (0, rho), (1, 0.0)) == pytest.approx(
        gop.entry(1, 1), abs=1e-12
    )


def test_interpolation_same_edge_midpoint(two_vertex):
    net, gop = two_vertex
    rho = net.rho(0)
    value = interpolated_green(gop, net, (0, rho / 2), (0, rho / 2))
    assert value == pytest.approx(0.75, abs=1e-12)


def test_interpolation_distinct_edges_pure_bilinear(path3):
    net, gop = path3
    rho = net.rho(0)
    r1, r2 = 0.3 * rho, 0.6 * rho
    value = interpolated_green(gop, net, (0, r1), (1, r2))
    expect = (
        (rho - r1) * (rho - r2) * gop.entry(0, 1)
        + r1 * r2 * gop.entry(1, 2)
        + r1 * (rho - r2) * gop.entry(1, 1)
        + (rho - r1) * r2 * gop.entry(0, 2)
    ) / rho**2
    assert value == pytest.approx(expect, abs=1e-14)


def test_interpolation_affine_off_diagonal_and_continuous(path3):
    net, gop = path3
    rho = net.rho(0)
    fixed = (1, 0.25 * rho)
    vals = [interpolated_green(gop, net, (0, t * rho), fixed) for t in (0.2, 0.5, 0.8)]
    assert vals[1] == pytest.approx(0.5 * (vals[0] + vals[2]), abs=1e-12)
    # continuity across the shared vertex 1 = end of edge 0 = start of edge 1
    left = interpolated_green(gop, net, (0, rho), fixed)
    right = interpolated_green(gop, net, (1, 0.0), fixed)
    assert abs(left - right) < 1e-12


def test_interpolation_range_check(two_vertex):
    net, gop = two_vertex
    with pytest.raises(ValueError):
        interpolated_green(gop, net, (0, -0.01), (0, 0.1))
    with pytest.raises(ValueError):
        interpolated_green(gop, net, (0, 0.1), (0, net.rho(0) + 0.01))
