import itertools

import networkx as nx
import numpy as np
import pytest

from diffalloc.convexopt import optimize
from diffalloc.designs import (
    SparseDesignSpec,
    const_rel_error_a_optimal,
    const_rel_error_d_optimal,
    const_rel_error_network,
    naive_allocation,
    sparse_design,
    two_edge_connected_subgraph,
)
from diffalloc.errors import InfeasibleSpec, NotSorted
from diffalloc.inference import information_state
from diffalloc.netcore import build_network, connectivity_deficit, minimum_spanning_tree

from conftest import random_complete


def test_naive_mst_chain(chain2):
    a = naive_allocation(chain2, 6.0, "mst_constant").as_dict()
    assert a == {(0, 1): 3.0, (0, 2): 0.0, (1, 2): 3.0}


def test_naive_proportional():
    net = build_network(2, [((0, 1), 1.0), ((0, 2), 3.0)])
    assert list(naive_allocation(net, 4.0, "proportional_s").n) == [1.0, 3.0]


def test_naive_uniform(sym2):
    assert list(naive_allocation(sym2, 3.0, "uniform").n) == [1.0, 1.0, 1.0]


def test_naive_unknown(sym2):
    with pytest.raises(ValueError):
        naive_allocation(sym2, 1.0, "random")


def test_a_chain_m1():
    alloc, tr = const_rel_error_a_optimal([0.7], 3.0)
    assert alloc.n == pytest.approx([3.0]) and tr == pytest.approx(0.49 / 3.0)


def test_a_chain_m2():
    alloc, tr = const_rel_error_a_optimal([1.0, 2.0], 1.0)
    lam = 1 / (np.sqrt(2) + 1)
    assert alloc.edges == ((0, 1), (1, 2))
    assert alloc.n == pytest.approx([np.sqrt(2) * lam, lam])
    assert tr == pytest.approx((1 + np.sqrt(2)) ** 2)
    net = const_rel_error_network([1.0, 2.0])
    assert optimize(net, 1.0, "A").objective == pytest.approx(tr, rel=1e-6)


def test_a_chain_duplicates():
    alloc, _ = const_rel_error_a_optimal([1.0, 1.0, 1.0], 5.0)
    assert list(alloc.n) == [5.0, 0.0, 0.0]


def test_d_chain():
    assert list(const_rel_error_d_optimal([0.3, 0.9], 2.0).n) == [1.0, 1.0]
    assert list(const_rel_error_d_optimal([0.3], 2.0).n) == [2.0]
    d = const_rel_error_d_optimal([0.1, 0.2, 0.5, 0.6], 4.0)
    assert d.edges == ((0, 1), (1, 2), (2, 3), (3, 4)) and list(d.n) == [1.0] * 4


def test_not_sorted():
    with pytest.raises(NotSorted):
        const_rel_error_a_optimal([2.0, 1.0], 1.0)
    with pytest.raises(NotSorted):
        const_rel_error_d_optimal([2.0, 1.0], 1.0)


def test_chain_constructions_match_numerical():
    rng = np.random.default_rng(41)
    for _ in range(20):
        m = int(rng.integers(2, 9))
        s = np.sort(rng.uniform(0, 1, m))
        net = const_rel_error_network(s)
        a, predicted = const_rel_error_a_optimal(s, 1.0)
        assert set(a.support()) <= set(minimum_spanning_tree(net))
        assert a.n.sum() == pytest.approx(1.0)
        tr = information_state(net, a).trace
        assert tr == pytest.approx(predicted, rel=1e-9)
        assert tr == pytest.approx(optimize(net, 1.0, "A").objective, rel=1e-3)
        d = const_rel_error_d_optimal(s, 1.0)
        ld = information_state(net, d).logdet
        assert np.expm1(ld - optimize(net, 1.0, "D").objective) < 1e-3


def test_sparse_spec_validation():
    with pytest.raises(InfeasibleSpec):
        SparseDesignSpec(k=3, M=10)
    with pytest.raises(InfeasibleSpec):
        SparseDesignSpec(k=1, M=10, epsilon=1.0)


def test_sparse_k1_is_mst():
    rng = np.random.default_rng(43)
    net = random_complete(rng, 6)
    rep = sparse_design(net, 1.0, SparseDesignSpec(k=1, M=6))
    mst = minimum_spanning_tree(net)
    assert set(rep.allocation.support()) <= set(mst)
    restricted = optimize(net.restrict(mst), 1.0, "A")
    assert rep.objective == pytest.approx(restricted.objective, rel=1e-9)


def test_sparse_full_budget_equals_unconstrained():
    rng = np.random.default_rng(47)
    net = random_complete(rng, 5)
    rep = sparse_design(net, 1.0, SparseDesignSpec(k=2, M=net.n_edges))
    full = optimize(net, 1.0, "A")
    assert rep.objective == pytest.approx(full.objective, rel=1e-6)
    assert np.allclose(rep.allocation.n, full.allocation.n, atol=1e-6)


def test_sparse_too_small_budget():
    rng = np.random.default_rng(53)
    net = random_complete(rng, 6)
    with pytest.raises(InfeasibleSpec):
        sparse_design(net, 1.0, SparseDesignSpec(k=2, M=6))


def test_sparse_properties():
    rng = np.random.default_rng(59)
    for _ in range(10):
        m = int(rng.integers(3, 12))
        net = random_complete(rng, m)
        spec = SparseDesignSpec(k=2, M=2 * m, epsilon=0.1)
        rep = sparse_design(net, 1.0, spec)
        sel = rep.extras["selected"]
        assert len(sel) <= spec.M
        assert connectivity_deficit(sel, m, 2) == 0
        assert connectivity_deficit(rep.extras["base_edges"], m, 2) == 0
        assert set(rep.allocation.support()) <= set(sel)
        assert rep.objective >= optimize(net, 1.0, "A").objective * (1 - 1e-9)
        assert rep.allocation.n.sum() == pytest.approx(1.0)


def _min_two_connected_weight(net):
    best = np.inf
    edges = list(zip(net.edges, net.s))
    for r in range(net.m + 1, len(edges) + 1):
        for sub in itertools.combinations(edges, r):
            w = sum(s for _, s in sub)
            if w >= best:
                continue
            g = nx.Graph([e for e, _ in sub])
            if g.number_of_nodes() == net.m + 1 and nx.is_k_edge_connected(g, 2):
                best = w
    return best


def test_two_connected_base_within_factor_two():
    rng = np.random.default_rng(61)
    for _ in range(8):
        m = int(rng.integers(2, 5))
        net = random_complete(rng, m)
        base = two_edge_connected_subgraph(net)
        assert connectivity_deficit(base, m, 2) == 0
        w = sum(net.fluctuation(e) for e in base)
        opt = _min_two_connected_weight(net)
        assert opt <= w + 1e-12
        assert w <= 2 * opt + 1e-12


def test_two_connected_base_infeasible():
    net = build_network(2, [((0, 1), 1.0), ((1, 2), 1.0)])
    with pytest.raises(InfeasibleSpec):
        two_edge_connected_subgraph(net)
