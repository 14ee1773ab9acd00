import math

import numpy as np
import pytest

from assigncore.core import firm_optimal, worker_optimal
from assigncore.market import DistributionSpec, Market, generate_market
from assigncore.matching import max_weight_matching
from assigncore.pointer_graph import (PointerGraph, audit_path_inequalities, build_pointer_graph,
                                      check_expansion, fanout_for, firm_distances,
                                      firm_path_distance, loss_threshold, min_pointed_value,
                                      stream_pointer_graph)

U = DistributionSpec.uniform()
EXP = DistributionSpec.exponential()


@pytest.fixture(scope="module")
def big():
    m = generate_market(1000, 0, U, 3)
    matching, _ = max_weight_matching(m)
    return m, matching, build_pointer_graph(m, matching)


@pytest.mark.parametrize("n,k,expected", [(1, 0, 1), (10, 0, 10), (1000, 0, 222),
                                          (100, 100, 200), (2, 0, 2)])
def test_fanout(n, k, expected):
    assert fanout_for(n, k) == expected


def test_fanout_formula_uncapped():
    n, k = 5000, 50
    assert fanout_for(n, k) == math.ceil(32 * (n + k) / n * math.log(n))


def test_single_firm_points_to_only_worker():
    g = build_pointer_graph(Market.from_matrix([[0.4]]))
    assert g.firm_edges.tolist() == [[0]]


def test_small_market_points_everywhere():
    g = build_pointer_graph(generate_market(10, 0, U, 1))
    assert (g.firm_edges == np.arange(10)).all()


def _naive_top(alpha, beta):
    # Full stable sort by decreasing value then index.
    rows = []
    for row in alpha:
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))[:beta]
        rows.append(sorted(order))
    return np.array(rows)


@pytest.mark.parametrize("n,k,dist", [(300, 0, U), (200, 40, EXP), (150, 0, DistributionSpec.weibull(0.5))])
def test_top_edges_match_full_sort(n, k, dist):
    m = generate_market(n, k, dist, n)
    g = build_pointer_graph(m)
    assert np.array_equal(g.firm_edges, _naive_top(m.alpha, g.fanout))
    assert np.array_equal(g.edge_values, np.take_along_axis(m.alpha, g.firm_edges, axis=1))


def test_ties_break_to_lowest_index():
    alpha = np.full((2, 30), 0.5)
    alpha[1, 29] = 0.9
    g = build_pointer_graph(Market.from_matrix(alpha))
    beta = g.fanout
    assert g.firm_edges[0].tolist() == list(range(beta))
    assert g.firm_edges[1].tolist() == list(range(beta - 1)) + [29]


def test_stream_matches_full_build():
    for n, k, dist in ((400, 0, U), (250, 13, EXP)):
        full = build_pointer_graph(generate_market(n, k, dist, 9))
        streamed = stream_pointer_graph(n, k, dist, 9)
        assert np.array_equal(full.firm_edges, streamed.firm_edges)
        assert np.array_equal(full.edge_values, streamed.edge_values)
        assert not streamed.has_worker_edges


def test_single_firm_set_neighborhood_is_its_edges(big):
    _, _, g = big
    report = check_expansion(g, [1], 50, seed=0)
    assert report.rows[0].min_neighbors == 222
    assert report.verdict == "no_failures_found"


def test_expansion_campaign_no_failures(big):
    _, _, g = big
    report = check_expansion(g, [1, 5, 25, 100], 1000, seed=1)
    assert report.failures == 0
    assert [r.size for r in report.rows] == [1, 5, 25, 100]
    workers = check_expansion(g, [1, 5, 25, 99], 300, seed=2, side="worker")
    assert workers.failures == 0


def _all_point_to_first(n, beta):
    edges = np.broadcast_to(np.arange(beta), (n, beta)).copy()
    return PointerGraph(n, 0, beta, edges, np.ones((n, beta)))


def test_pathological_graph_is_caught():
    g = _all_point_to_first(200, 10)
    report = check_expansion(g, [1, 3, 5, 6, 9, 19], 20, seed=0)
    failed = {r.size: r.failures for r in report.rows}
    assert failed == {1: 0, 3: 0, 5: 0, 6: 20, 9: 20, 19: 20}
    assert report.verdict == "failures_found"
    assert check_expansion(g, [20], 5, seed=0).failures == 5


def test_expansion_size_validation(big):
    _, _, g = big
    for bad in (0, 101, 500):
        with pytest.raises(ValueError):
            check_expansion(g, [bad], 1, seed=0)
    with pytest.raises(ValueError):
        check_expansion(g, [1], 0, seed=0)
    with pytest.raises(ValueError):
        check_expansion(g, [1], 1, seed=0, side="sideways")


def test_expansion_is_reproducible(big):
    _, _, g = big
    a = check_expansion(g, [5, 50], 30, seed=4)
    assert a == check_expansion(g, [5, 50], 30, seed=4)


def test_threshold_clamps_for_small_n():
    assert loss_threshold(10, 1.0) == 0.0
    g = build_pointer_graph(generate_market(10, 0, U, 2))
    pv = min_pointed_value(g, U)
    assert pv.threshold == 0.0 and pv.passes


def test_threshold_value_large_n():
    assert loss_threshold(10_000, 1.0) == pytest.approx(1 - 512 * math.log(1e4) / 1e4)
    assert loss_threshold(10_000, 1.0) == pytest.approx(0.528, abs=1e-3)


def test_min_pointed_value_large_streamed():
    g = stream_pointer_graph(10_000, 0, U, 5)
    pv = min_pointed_value(g, U)
    assert pv.passes and pv.min_value > 0.9


def test_min_pointed_value_needs_bounded():
    g = build_pointer_graph(generate_market(20, 0, EXP, 2))
    with pytest.raises(ValueError):
        min_pointed_value(g, EXP)


@pytest.mark.parametrize("rule", [firm_optimal, worker_optimal])
def test_path_audit_passes_on_core(big, rule):
    m, matching, g = big
    report = audit_path_inequalities(g, m, rule(m, matching))
    assert report.violations == 0
    assert report.paths == 1000 * 222
    assert report.worst_path_slack >= -3e-6


def test_path_audit_with_unemployed_workers():
    m = generate_market(200, 20, U, 6)
    matching, _ = max_weight_matching(m)
    g = build_pointer_graph(m, matching)
    report = audit_path_inequalities(g, m, firm_optimal(m, matching))
    assert report.unemployed_edges > 0
    assert report.violations == 0
    assert report.unemployed_edges + report.paths == g.firm_edges.size


def test_path_audit_errors(big):
    m, matching, g = big
    alloc = firm_optimal(m, matching)
    with pytest.raises(ValueError, match="without a matching"):
        audit_path_inequalities(build_pointer_graph(m), m, alloc)
    bad = type(alloc)(alloc.matching, alloc.u * 0.5, alloc.v)
    with pytest.raises(ValueError, match="not in the core"):
        audit_path_inequalities(g, m, bad)
    em = generate_market(20, 0, EXP, 1)
    emu, _ = max_weight_matching(em)
    with pytest.raises(ValueError, match="bounded"):
        audit_path_inequalities(build_pointer_graph(em, emu), em, firm_optimal(em, emu))
    other = generate_market(1000, 0, U, 4)
    other_mu, _ = max_weight_matching(other)
    with pytest.raises(ValueError, match="different matchings"):
        audit_path_inequalities(build_pointer_graph(other, other_mu), m, alloc)


def test_path_distances(big):
    _, _, g = big
    assert firm_path_distance(g, 7, 7) == 0
    d = firm_distances(g, 0)
    assert (d >= 0).all()
    assert d.max() <= 8
    # A firm pointing at another's worker is two edges away.
    target = int(g.worker_edges[g.firm_edges[0]][g.worker_edges[g.firm_edges[0]] != 0][0])
    assert firm_path_distance(g, 0, target) == 2


def test_unreachable_firm():
    # Firm 0 points only to its own worker; firm 1 is out of reach.
    m = Market.from_matrix([[1.0, 0.0], [0.0, 1.0]])
    matching, _ = max_weight_matching(m)
    g = build_pointer_graph(m, matching)
    g = PointerGraph(2, 0, 1, np.array([[0], [1]]), np.array([[1.0], [1.0]]), g.worker_edges)
    assert firm_path_distance(g, 0, 1) is None
    with pytest.raises(IndexError):
        firm_path_distance(g, 0, 5)
