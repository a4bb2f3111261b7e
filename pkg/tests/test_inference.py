import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffalloc.errors import NotPositiveDefinite, SingularInformation
from diffalloc.inference import (
    covariance,
    estimate,
    evaluate,
    fisher_matrix,
    gradient,
    information_state,
    objective,
)
from diffalloc.netcore import Allocation, MeasurementSet, build_network

from conftest import random_complete


def _alloc(net, n):
    n = np.asarray(n, dtype=float)
    return Allocation(net.edges, n, n.sum())


def test_fisher_examples(sym2):
    assert np.array_equal(fisher_matrix(sym2, _alloc(sym2, [1, 1, 1])), [[2, -1], [-1, 2]])
    assert np.array_equal(fisher_matrix(sym2, _alloc(sym2, [1, 1, 0])), np.eye(2))
    F1 = fisher_matrix(sym2, _alloc(sym2, [1, 2, 3]))
    F2 = fisher_matrix(sym2, _alloc(sym2, [2, 4, 6]))
    assert np.array_equal(F2, 2 * F1)


def test_fisher_linearity(rng):
    net = random_complete(rng, 5)
    a, b = rng.uniform(0, 2, (2, net.n_edges))
    lhs = fisher_matrix(net, 0.3 * a + 1.7 * b)
    rhs = 0.3 * fisher_matrix(net, a) + 1.7 * fisher_matrix(net, b)
    assert np.allclose(lhs, rhs, rtol=1e-13, atol=1e-13)


def test_covariance_examples():
    C = covariance(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    assert np.allclose(C, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], rtol=1e-14)
    assert np.trace(C) == pytest.approx(4 / 3)
    assert np.array_equal(covariance(np.eye(3)), np.eye(3))


def test_covariance_singular(sym2):
    with pytest.raises(SingularInformation):
        information_state(sym2, _alloc(sym2, [0, 0, 3]))
    with pytest.raises(SingularInformation):
        covariance(np.diag([1.0, 1e-13]))


def test_covariance_inverse_identity(rng):
    for _ in range(20):
        net = random_complete(rng, int(rng.integers(1, 8)))
        F = fisher_matrix(net, rng.uniform(0.1, 3, net.n_edges))
        C = covariance(F)
        assert np.allclose(C @ F, np.eye(net.m), rtol=1e-8, atol=1e-8)
        assert np.array_equal(C, C.T)


def test_objective_examples():
    I = np.eye(3)
    assert objective(I, "A") == 3 and objective(I, "D") == 0 and objective(I, "E") == 1
    C = np.array([[2 / 3, 1 / 3], [1 / 3, 2 / 3]])
    assert objective(C, "A") == pytest.approx(4 / 3)
    assert objective(C, "D") == pytest.approx(np.log(1 / 3))
    assert objective(C, "e") == pytest.approx(1.0)
    c = 2.5
    assert objective(c * C, "A") == pytest.approx(c * 4 / 3)
    assert objective(c * C, "E") == pytest.approx(c)
    assert objective(c * C, "D") == pytest.approx(np.log(1 / 3) + 2 * np.log(c))


def test_objective_rejects():
    with pytest.raises(NotPositiveDefinite):
        objective(np.diag([1.0, -1.0]), "A")
    with pytest.raises(ValueError):
        objective(np.eye(2), "Z")


def test_spectral_norm_from_smallest_information_eigenvalue(rng):
    net = random_complete(rng, 6)
    st_ = information_state(net, rng.uniform(0.5, 2, net.n_edges))
    assert st_.spectral_norm == pytest.approx(np.linalg.eigvalsh(st_.C)[-1], rel=1e-10)
    assert st_.logdet == pytest.approx(np.linalg.slogdet(st_.C)[1], rel=1e-10)


def test_budget_homogeneity(rng):
    net = random_complete(rng, 5)
    n = rng.uniform(0.5, 2, net.n_edges)
    a, b = information_state(net, n), information_state(net, 2 * n)
    assert np.allclose(b.C, a.C / 2, rtol=1e-12)
    assert b.trace == pytest.approx(a.trace / 2)
    assert b.spectral_norm == pytest.approx(a.spectral_norm / 2)
    assert b.logdet == pytest.approx(a.logdet - net.m * np.log(2))


def test_gradient_hand_value(sym2):
    g = gradient(sym2, _alloc(sym2, [1, 1, 0]), "A")
    assert g[0] == pytest.approx(-1.0)
    assert g[0] == pytest.approx(g[1])


def test_gradient_symmetric(sym2):
    for which in "AD":
        g = gradient(sym2, _alloc(sym2, [1, 1, 1]), which)
        assert g[0] == pytest.approx(g[1])


def test_gradient_rejects_e(sym2):
    with pytest.raises(ValueError):
        gradient(sym2, _alloc(sym2, [1, 1, 1]), "E")


@pytest.mark.parametrize("which", ["A", "D"])
def test_gradient_finite_differences(which):
    rng = np.random.default_rng(11)
    for _ in range(10):
        m = int(rng.integers(1, 7))
        net = random_complete(rng, m)
        n = rng.uniform(0.5, 2.0, net.n_edges)
        N = n.sum()
        g = gradient(net, n, which)
        h = 1e-6 * N
        for k in range(net.n_edges):
            up, dn = n.copy(), n.copy()
            up[k] += h
            dn[k] -= h
            fd = (evaluate(net, up, which) - evaluate(net, dn, which)) / (2 * h)
            assert abs(fd - g[k]) <= 1e-5 * abs(g[k])


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    t=st.floats(0.01, 0.99),
    which=st.sampled_from(["A", "D", "E"]),
)
def test_convexity(seed, t, which):
    rng = np.random.default_rng(seed)
    net = random_complete(rng, int(rng.integers(1, 7)))
    a = rng.uniform(0.05, 2.0, net.n_edges)
    b = rng.uniform(0.05, 2.0, net.n_edges)
    mid = evaluate(net, t * a + (1 - t) * b, which)
    assert mid <= t * evaluate(net, a, which) + (1 - t) * evaluate(net, b, which) + 1e-10


def test_estimate_example():
    net = build_network(2, [((0, 1), 1.0), ((1, 2), 1.0), ((0, 2), 1.0)])
    meas = MeasurementSet({(0, 1): 1.0, (1, 2): -0.5}, {(0, 1): 1, (1, 2): 1}, {(0, 1): 1.0, (1, 2): 1.0})
    est = estimate(net, meas)
    assert est.x == pytest.approx([1.0, 1.5], rel=1e-12)


def test_estimate_individual_only(rng):
    m = 4
    net = random_complete(rng, m)
    xh = rng.normal(size=m)
    meas = MeasurementSet({(0, i + 1): xh[i] for i in range(m)}, {(0, i + 1): 3.0 for i in range(m)},
                          {(0, i + 1): 0.5 + i for i in range(m)})
    est = estimate(net, meas)
    assert est.x == pytest.approx(xh, rel=1e-12)
    assert np.diag(est.C) == pytest.approx([(0.5 + i) ** 2 / 3 for i in range(m)])


def test_estimate_consistent_data(rng):
    m = 5
    net = random_complete(rng, m)
    x = rng.normal(size=m)
    xh, n, s = {}, {}, {}
    for (i, j) in net.edges:
        xh[(i, j)] = x[j - 1] if i == 0 else x[i - 1] - x[j - 1]
        n[(i, j)] = float(rng.integers(1, 10))
        s[(i, j)] = rng.uniform(0.1, 3)
    est = estimate(net, MeasurementSet(xh, n, s))
    assert est.x == pytest.approx(x, rel=1e-10, abs=1e-12)
    F = covariance(est.C)
    z = F @ est.x
    assert np.linalg.norm(F @ est.x - z) <= 1e-8 * np.linalg.norm(z)


def test_estimate_singular():
    net = build_network(2, [((0, 1), 1.0), ((1, 2), 1.0), ((0, 2), 1.0)])
    meas = MeasurementSet({(1, 2): 0.3}, {(1, 2): 4}, {(1, 2): 1.0})
    with pytest.raises(SingularInformation):
        estimate(net, meas)
