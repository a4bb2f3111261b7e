import numpy as np
import pytest

from diffalloc.campaign import (
    CampaignState,
    enforce_min_samples,
    history_rows,
    kl_divergence,
    run_campaign,
    simulate_measurements,
)
from diffalloc.convexopt import optimize
from diffalloc.errors import InfiniteDivergence, TooFewSamples, TruthMissing
from diffalloc.netcore import Allocation, complete_network

from conftest import random_complete

E2 = ((0, 1), (0, 2))


def test_kl_identical():
    a = Allocation(E2, [1.0, 3.0], 4.0)
    assert kl_divergence(a, a) == 0.0
    assert kl_divergence(a, Allocation(E2, [2.0, 6.0], 8.0)) == pytest.approx(0.0, abs=1e-15)


def test_kl_examples():
    p = Allocation(E2, [0.5, 0.5], 1.0)
    q = Allocation(E2, [0.25, 0.75], 1.0)
    assert kl_divergence(p, q) == pytest.approx(0.5 * np.log(4 / 3), rel=1e-12)
    assert kl_divergence(Allocation(E2, [1.0, 0.0], 1.0), Allocation(E2, [0.5, 0.5], 1.0)) == pytest.approx(np.log(2))


def test_kl_zero_target_support():
    p = Allocation(E2, [0.5, 0.5], 1.0)
    q = Allocation(E2, [1.0, 0.0], 1.0)
    with pytest.raises(InfiniteDivergence):
        kl_divergence(p, q)
    assert kl_divergence(p, q, floor=1e-12) == pytest.approx(0.5 * np.log(0.5) + 0.5 * np.log(0.5 / 1e-12))


def test_kl_nonnegative(rng):
    for _ in range(50):
        a, b = rng.uniform(0.01, 1, (2, 3))
        edges = E2 + ((1, 2),)
        assert kl_divergence(Allocation(edges, a, a.sum()), Allocation(edges, b, b.sum())) >= 0


def _state(net, x=None):
    return CampaignState.start(net, np.array(net.s), x)


def test_simulation_law_of_large_numbers():
    net = complete_network([1.0, 2.0], [[1.0, 0.5], [0.5, 1.0]])
    st = _state(net, np.zeros(2))
    n = 200_000
    delta = Allocation(net.edges, [n, n, n], 3 * n)
    meas = simulate_measurements(st, delta, 3)
    for e in net.edges:
        s = net.fluctuation(e)
        assert abs(meas.x[e]) < 3 * s / np.sqrt(n)
        assert meas.s[e] == pytest.approx(s, rel=0.01)


def test_simulation_deterministic_and_sparse():
    net = complete_network([1.0, 2.0], [[1.0, 0.5], [0.5, 1.0]])
    st = _state(net, np.array([1.0, -2.0]))
    delta = Allocation(net.edges, [5, 0, 7], 12)
    a = simulate_measurements(st, delta, 42)
    b = simulate_measurements(st, delta, 42)
    assert a == b
    assert (0, 2) not in a.x and set(a.edges) == {(0, 1), (1, 2)}


def test_simulation_errors():
    net = complete_network([1.0, 2.0], [[1.0, 0.5], [0.5, 1.0]])
    st = _state(net)
    with pytest.raises(TooFewSamples):
        simulate_measurements(st, Allocation(net.edges, [1, 3, 3], 7), 0)
    with pytest.raises(TooFewSamples):
        simulate_measurements(st, Allocation(net.edges, [2.5, 2.5, 3], 8), 0)
    st.truth = None
    with pytest.raises(TruthMissing):
        simulate_measurements(st, Allocation(net.edges, [2, 2, 2], 6), 0)


def test_enforce_min_samples():
    edges = ((0, 1), (0, 2), (0, 3))
    out = enforce_min_samples(Allocation(edges, [1, 0, 9], 10))
    assert list(out.n) == [2, 0, 8]
    out = enforce_min_samples(Allocation(edges, [1, 1, 1], 3))
    assert out.n.sum() == 3 and all(v == 0 or v >= 2 for v in out.n)
    with pytest.raises(TooFewSamples):
        enforce_min_samples(Allocation(edges, [1, 0, 0], 1))


def test_start_rejects_nonpositive():
    net = complete_network([1.0], [[1.0]])
    with pytest.raises(ValueError):
        CampaignState.start(net, [0.0])


def test_single_round_with_true_fluctuations():
    rng = np.random.default_rng(71)
    net = random_complete(rng, 5)
    st = run_campaign(net, np.array(net.s), [1_000_000], "A", seed=1)
    assert st.history[0].kl < 1e-3
    direct = optimize(net, 1.0, "A").allocation
    assert np.allclose(st.spent.on(net) / 1e6, direct.on(net), atol=1e-5)


def test_first_round_fractions_match_direct():
    rng = np.random.default_rng(73)
    net = random_complete(rng, 4)
    est = net.with_fluctuations(np.array(net.s))
    a = optimize(est, 100.0, "A").allocation.fractions()
    b = optimize(net, 1.0, "A").allocation.fractions()
    assert np.allclose(a, b, atol=1e-6)


def test_spent_accounting():
    rng = np.random.default_rng(79)
    net = random_complete(rng, 4)
    schedule = [50, 80, 300]
    st = run_campaign(net, rng.uniform(0.2, 1, net.n_edges), schedule, "A", seed=5)
    prev = np.zeros(net.n_edges)
    for rec, total in zip(st.history, np.cumsum(schedule)):
        cur = rec.spent.on(net)
        assert cur.sum() == total
        assert np.all(cur >= prev)
        assert np.all(cur == np.rint(cur))
        prev = cur
        assert rec.kl >= 0
    assert np.all(st.s_est > 0)


def test_campaign_reproducible():
    rng = np.random.default_rng(83)
    net = random_complete(rng, 4)
    s0 = rng.uniform(0.2, 1, net.n_edges)
    a = run_campaign(net, s0, [40, 100], "A", seed=9)
    b = run_campaign(net, s0, [40, 100], "A", seed=9)
    assert np.array_equal(a.s_est, b.s_est)
    assert [r.kl for r in a.history] == [r.kl for r in b.history]


def test_estimates_converge_to_truth():
    rng = np.random.default_rng(89)
    net = random_complete(rng, 4, lo=1e-3, hi=2e-3)
    x = rng.normal(size=4)
    st = run_campaign(net, np.array(net.s), [200, 2000], "A", seed=2, x_true=x)
    rec = st.history[-1]
    assert np.all(np.abs(rec.estimates - x) < 5 * rec.std_errors)
    rows = history_rows(st)
    assert list(rows[0])[:4] == ["iteration", "N", "D_KL", "tr_C"]
    assert len(rows) == 2 and "x_4" in rows[0]


def test_campaign_d_and_e_objectives():
    rng = np.random.default_rng(97)
    net = random_complete(rng, 3)
    for which in "DE":
        st = run_campaign(net, np.array(net.s), [30, 60], which, seed=3, kl_floor=1e-12)
        assert st.spent.N == 90


def test_bad_schedule():
    net = complete_network([1.0], [[1.0]])
    with pytest.raises(ValueError):
        run_campaign(net, [1.0], [], "A")
    with pytest.raises(ValueError):
        run_campaign(net, [1.0], [10, 0], "A")
