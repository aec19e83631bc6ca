import math

import numpy as np
import pytest
from scipy import stats as sps

from loopfield import (
    build_box_network,
    build_star_graph,
    compute_capacity,
    compute_green,
    isomorphism_check,
    levelset_containment_check,
    sample_interlacement_trace,
    sample_star_excursions,
    two_vertex_network,
)
from loopfield.interlacement import (
    box_window_vertices,
    star_excursion_batch,
    trace_occupation_batch,
)
from loopfield.network import NetworkError, box_vertex_index
from loopfield.stats import mc_mean, z_score
from loopfield.streams import derive_stream

# escape probability of simple random walk on Z^3 (1 - Watson's return
# probability 0.3405373296...), times the vertex rate 2d = 6
CAP_SINGLE_Z3 = 6.0 * (1.0 - 0.3405373296)


@pytest.fixture(scope="module")
def box3():
    net = build_box_network(3, 5, 1.0, 0.0, "absorbing")
    return net, compute_green(net)


def test_star_graph_rate():
    for d, n in [(2, 2), (2, 5), (3, 3)]:
        star = build_star_graph(d, n)
        assert star.star_rate == 2 * d * (2 * n - 1) ** (d - 1)
        assert star.entry_vertices.size == star.star_rate


def test_capacity_single_vertex_inverse_green(box3):
    net, gop = box3
    center = box_vertex_index(3, 5, (0, 0, 0))
    report = compute_capacity(net, [center])
    # exact identity on the box: cap({x}) = 1 / G(x, x)
    assert report.capacity == pytest.approx(1.0 / gop.entry(center, center), rel=1e-10)
    assert report.margin == 5
    assert report.drift is not None and report.drift < 0.2


def test_capacity_extrapolates_to_lattice_value(box3):
    net, _ = box3
    center = box_vertex_index(3, 5, (0, 0, 0))
    report = compute_capacity(net, [center])
    # box capacities decrease toward the lattice value; extrapolate in 1/n
    n1, n2 = 5, 9
    slope = (report.capacity_refined - report.capacity) / (1.0 / n2 - 1.0 / n1)
    extrapolated = report.capacity_refined - slope / n2
    assert extrapolated == pytest.approx(CAP_SINGLE_Z3, rel=0.02)


def test_capacity_pair_identities(box3):
    net, gop = box3
    pair = [box_vertex_index(3, 5, (0, 0, 0)), box_vertex_index(3, 5, (1, 0, 0))]
    report = compute_capacity(net, pair)
    # last-exit decomposition: sum_y G(x, y) e_K(y) = 1 for x in K
    for x in report.vertices:
        acc = sum(gop.entry(x, y) * w for y, w in zip(report.vertices, report.equilibrium))
        assert acc == pytest.approx(1.0, abs=1e-9)
    single = compute_capacity(net, pair[:1])
    assert single.capacity < report.capacity  # monotone in K
    assert np.all(report.equilibrium >= 0)


def test_capacity_rejections(box3):
    net, _ = box3
    with pytest.raises(ValueError):
        compute_capacity(net, [])
    edge_vertex = box_vertex_index(3, 5, (4, 0, 0))
    with pytest.raises(ValueError):
        compute_capacity(net, [edge_vertex])  # margin 1 < 2
    absorbing = box_vertex_index(3, 5, (5, 0, 0))
    with pytest.raises(ValueError):
        compute_capacity(net, [absorbing])


def test_trace_sampler_empty_at_zero(box3):
    net, _ = box3
    center = box_vertex_index(3, 5, (0, 0, 0))
    cap = compute_capacity(net, [center])
    sample = sample_interlacement_trace(net, cap, 0.0, derive_stream(61, 0))
    assert sample.trajectories == ()
    assert np.all(sample.occupation == 0.0)


def test_trace_sampler_single_consistency(box3):
    net, _ = box3
    center = box_vertex_index(3, 5, (0, 0, 0))
    cap = compute_capacity(net, [center])
    sample = sample_interlacement_trace(net, cap, 2.0, derive_stream(62, 0))
    rebuilt = np.zeros(net.vertex_count)
    for verts, holds in sample.trajectories:
        assert verts[0] == center
        assert np.all(net.alive_pos[verts] >= 0)
        np.add.at(rebuilt, verts, holds)
    assert np.allclose(rebuilt, sample.occupation)


def test_trace_occupation_mean_is_u(box3):
    net, _ = box3
    pair = [box_vertex_index(3, 5, (0, 0, 0)), box_vertex_index(3, 5, (1, 0, 0))]
    cap = compute_capacity(net, pair)
    u = 0.5
    occ, visited = trace_occupation_batch(net, cap, u, 20_000, 63)
    for j in range(2):
        est, sem = mc_mean(occ[:, j])
        assert abs(z_score(est, u, sem)) < 3.9
    # void probability of the generating set is exactly exp(-u cap)
    est, sem = mc_mean((~visited.any(axis=1)).astype(float))
    assert abs(z_score(est, math.exp(-u * cap.capacity), sem)) < 3.9


def test_star_excursions_empty_at_zero():
    star = build_star_graph(2, 4)
    sample = sample_star_excursions(star, 0.0, derive_stream(64, 0))
    assert sample.trajectories == ()


def test_star_excursion_count_matches_capacity():
    # mean number of excursions visiting K per run equals u cap(K)
    star = build_star_graph(3, 5)
    net = star.network
    k_ids = [box_vertex_index(3, 5, (0, 0, 0))]
    cap = compute_capacity(net, k_ids)
    u = 0.5
    counts = np.empty(400)
    for r in range(counts.size):
        sample = sample_star_excursions(star, u, derive_stream(65, r))
        counts[r] = sum(1 for verts, _ in sample.trajectories if k_ids[0] in verts)
    est, sem = mc_mean(counts)
    assert abs(z_score(est, u * cap.capacity, sem)) < 3.9


def test_star_occupation_mean_is_u():
    star = build_star_graph(2, 5)
    u = 0.8
    occ, _, _ = star_excursion_batch(star, u, 20_000, 66)
    window = star.network.alive_pos[box_window_vertices(star.network, 2)]
    for col in window:
        est, sem = mc_mean(occ[:, col])
        assert abs(z_score(est, u, sem)) < 3.9


def test_two_samplers_agree(box3):
    net, _ = box3
    star = build_star_graph(3, 5)
    pair = [box_vertex_index(3, 5, (0, 0, 0)), box_vertex_index(3, 5, (1, 0, 0))]
    cap = compute_capacity(net, pair)
    u = 0.25
    occ_t, vis_t = trace_occupation_batch(net, cap, u, 20_000, 67)
    occ_s, _, hit_s = star_excursion_batch(star, u, 4_000, 68)
    cols = net.alive_pos[pair]
    for j in range(2):
        m1, s1 = mc_mean(occ_t[:, j])
        m2, s2 = mc_mean(occ_s[:, cols[j]])
        assert abs(z_score(m1, m2, math.hypot(s1, s2))) < 3.9
    v1, sv1 = mc_mean((~vis_t.any(axis=1)).astype(float))
    v2, sv2 = mc_mean((~hit_s[:, cols].any(axis=1)).astype(float))
    assert abs(z_score(v1, v2, math.hypot(sv1, sv2))) < 3.9
    assert abs(z_score(v2, math.exp(-u * cap.capacity), sv2)) < 3.9


def test_batch_walker_requires_uniform_unit_box():
    net = two_vertex_network()
    from loopfield.interlacement import _slot_tables

    with pytest.raises(NetworkError):
        _slot_tables(net)


def test_isomorphism_check_passes():
    star = build_star_graph(2, 4)
    records = isomorphism_check(star, 0.5, 10_000, 69)
    assert all(r.passed for r in records)
    assert len(records) == 2 * star.network.alive.size


def test_isomorphism_degenerate_u_zero():
    # u = 0: no excursions, both sides are half a squared field
    star = build_star_graph(2, 4)
    gop = compute_green(star.network)
    occ, _, _ = star_excursion_batch(star, 0.0, 4_000, 70)
    assert np.all(occ == 0.0)
    rng = derive_stream(70, 1)
    n = star.network.alive.size
    lhs = occ + 0.5 * (rng.standard_normal((4_000, n)) @ gop.chol.T) ** 2
    rhs = 0.5 * (rng.standard_normal((4_000, n)) @ gop.chol.T) ** 2
    center = star.network.alive_pos[box_vertex_index(2, 4, (0, 0))]
    assert sps.ks_2samp(lhs[:, center], rhs[:, center]).pvalue > 1e-3


def test_levelset_containment_exact():
    star = build_star_graph(2, 4)
    for u, seed in ((0.1, 71), (1.0, 72)):
        records = levelset_containment_check(star, u, 1_000, seed)
        by_id = {r.test_id: r for r in records}
        assert by_id["levelset-containment-violations"].estimate == 0.0
        assert by_id["levelset-vacant-fraction"].estimate == 1.0
        assert all(r.passed for r in records)
    with pytest.raises(ValueError):
        levelset_containment_check(star, 0.0, 10, 73)
