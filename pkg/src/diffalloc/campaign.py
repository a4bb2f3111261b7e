"""Iterative measure-and-reallocate campaigns on simulated measurements.

Each round allocates a fresh budget on top of the samples already spent,
rounds it to integers, draws synthetic measurements from the true network,
and replaces the fluctuation estimates of measured edges by their pooled
sample standard deviations.  Unmeasured edges get a fresh estimate drawn
uniformly between the smallest and largest measured estimates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .convexopt import optimize, round_to_integers
from .errors import InfiniteDivergence, SingularInformation, TooFewSamples, TruthMissing
from .inference import check_objective, estimate, information_state
from .netcore import Allocation, DifferenceNetwork, MeasurementSet

log = logging.getLogger(__name__)

MIN_SAMPLES = 2


def kl_divergence(current: Allocation, target: Allocation, floor: float | None = None) -> float:
    """Divergence of the allocation fractions of ``current`` from ``target``.

    ``sum_e p_e ln(p_e / q_e)`` with ``p`` and ``q`` each normalized by their
    own totals; edges with ``p_e = 0`` contribute nothing.  Support outside the
    target raises :class:`InfiniteDivergence` unless ``floor`` is given, in
    which case ``q_e`` is clamped from below at ``floor``.
    """
    pd, qd = current.as_dict(), target.as_dict()
    p_tot = sum(pd.values())
    q_tot = sum(qd.values())
    total = 0.0
    for e, v in pd.items():
        if v <= 0:
            continue
        p = v / p_tot
        q = qd.get(e, 0.0) / q_tot
        if q <= 0:
            if floor is None:
                raise InfiniteDivergence(f"edge {e} is allocated but has no target allocation")
            q = floor
        elif floor is not None:
            q = max(q, floor)
        total += p * np.log(p / q)
    return max(total, 0.0)


@dataclass
class _Pooled:
    n: np.ndarray
    mean: np.ndarray
    m2: np.ndarray

    def add(self, k: int, n: float, mean: float, s: float) -> None:
        n0, mu0 = self.n[k], self.mean[k]
        tot = n0 + n
        delta = mean - mu0
        self.mean[k] = mu0 + delta * n / tot
        self.m2[k] += s**2 * (n - 1) + delta**2 * n0 * n / tot
        self.n[k] = tot


@dataclass
class IterationRecord:
    iteration: int
    N: float
    delta: Allocation
    spent: Allocation
    kl: float
    trace: float
    trace_estimated: float
    estimates: np.ndarray | None
    std_errors: np.ndarray | None
    sq_deviation: float | None


@dataclass
class CampaignState:
    """Running state of a campaign.

    ``spent`` accumulates integer sample counts per edge, ``s_est`` holds the
    current fluctuation estimates (aligned with ``net.edges``) and ``truth``
    the simulation truth as ``{"x": values, "s": fluctuations}``.
    """

    net: DifferenceNetwork
    spent: Allocation
    s_est: np.ndarray
    truth: dict | None = None
    history: list[IterationRecord] = field(default_factory=list)
    pooled: _Pooled | None = None

    @classmethod
    def start(cls, net_truth: DifferenceNetwork, s_init, x_true=None) -> "CampaignState":
        s0 = np.asarray([s_init[e] for e in net_truth.edges] if isinstance(s_init, dict) else s_init, dtype=float)
        if s0.shape != (net_truth.n_edges,) or np.any(~(s0 > 0)):
            raise ValueError("initial fluctuations must be positive on every edge")
        x = np.zeros(net_truth.m) if x_true is None else np.asarray(x_true, dtype=float)
        E = net_truth.n_edges
        return cls(
            net=net_truth,
            spent=Allocation(net_truth.edges, np.zeros(E), 0.0),
            s_est=s0,
            truth={"x": x, "s": np.array(net_truth.s)},
            pooled=_Pooled(np.zeros(E), np.zeros(E), np.zeros(E)),
        )

    def measurements(self) -> MeasurementSet:
        """Pooled measurements over every spent sample."""
        p = self.pooled
        x, n, s = {}, {}, {}
        for k, e in enumerate(self.net.edges):
            if p.n[k] >= MIN_SAMPLES:
                x[e] = float(p.mean[k])
                n[e] = float(p.n[k])
                s[e] = float(np.sqrt(p.m2[k] / (p.n[k] - 1)))
        return MeasurementSet(x, n, s)


def simulate_measurements(state: CampaignState, delta: Allocation, seed: int) -> MeasurementSet:
    """Draw ``delta`` samples per edge from the true network.

    Edge ``(0, i)`` samples ``N(x_i, s_e)`` and edge ``(i, j)`` samples
    ``N(x_i - x_j, s_e)``; each measurement is reported as the sample mean and
    sample standard deviation.
    """
    if not state.truth:
        raise TruthMissing("simulation needs true values and fluctuations")
    x_true, s_true = state.truth["x"], state.truth["s"]
    net = state.net
    counts = delta.on(net)
    rng = np.random.default_rng(seed)
    x, n, s = {}, {}, {}
    for k, (i, j) in enumerate(net.edges):
        c = counts[k]
        if c <= 0:
            continue
        if c < MIN_SAMPLES or c != int(c):
            raise TooFewSamples(f"edge {(i, j)} needs an integer count >= {MIN_SAMPLES}, got {c}")
        mean = x_true[j - 1] if i == 0 else x_true[i - 1] - x_true[j - 1]
        draws = rng.normal(mean, s_true[k], int(c))
        x[(i, j)] = float(draws.mean())
        n[(i, j)] = float(c)
        s[(i, j)] = float(draws.std(ddof=1))
    return MeasurementSet(x, n, s)


def enforce_min_samples(alloc: Allocation, minimum: int = MIN_SAMPLES) -> Allocation:
    """Give every funded edge at least ``minimum`` samples.

    Samples are taken one at a time from the largest edge (ties by edge id);
    if no edge can spare one, the under-funded edge is folded into it.
    """
    n = np.array(alloc.n)
    if 0 < alloc.N < minimum:
        raise TooFewSamples(f"a budget of {alloc.N} cannot fund any edge with {minimum} samples")
    while True:
        low = np.flatnonzero((n > 0) & (n < minimum))
        if low.size == 0:
            break
        k = low[0]
        others = sorted((-n[j], alloc.edges[j], j) for j in np.flatnonzero(n > 0) if j != k)
        donor = others[0][2]
        if n[donor] > minimum:
            n[donor] -= 1
            n[k] += 1
        else:
            n[donor] += n[k]
            n[k] = 0.0
    return Allocation(alloc.edges, n, alloc.N)


def campaign_step(
    state: CampaignState,
    delta_N: int,
    which: str,
    rng: np.random.Generator,
    target: Allocation | None = None,
    kl_floor: float | None = 1e-12,
) -> IterationRecord:
    """Run one allocate-round-measure-update cycle and append its record."""
    net = state.net
    est_net = net.with_fluctuations(state.s_est)
    base = state.spent if state.spent.N > 0 else None
    report = optimize(est_net, float(delta_N), which, base=base)
    delta = enforce_min_samples(round_to_integers(report.allocation, int(delta_N)))
    meas = simulate_measurements(state, delta, int(rng.integers(2**63 - 1)))

    for e in meas.edges:
        state.pooled.add(net.index(e), meas.n[e], meas.x[e], meas.s[e])
    state.spent = state.spent + Allocation(net.edges, delta.on(net), delta.N)

    measured = state.pooled.n >= MIN_SAMPLES
    s_new = np.array(state.s_est)
    s_new[measured] = np.sqrt(state.pooled.m2[measured] / (state.pooled.n[measured] - 1))
    s_new = np.maximum(s_new, np.finfo(float).tiny)
    lo, hi = s_new[measured].min(), s_new[measured].max()
    unmeasured = np.flatnonzero(~measured)
    s_new[unmeasured] = rng.uniform(lo, hi, len(unmeasured))
    state.s_est = s_new

    spent_counts = state.spent.on(net)
    trace_true = information_state(net, spent_counts).trace
    trace_est = information_state(net.with_fluctuations(state.s_est), spent_counts).trace
    kl = np.nan if target is None else kl_divergence(state.spent, target, kl_floor)
    try:
        est = estimate(net, state.measurements())
        x, se = est.x, np.sqrt(np.diag(est.C))
        dev = float(np.sum((x - state.truth["x"]) ** 2))
    except SingularInformation:
        x = se = dev = None
    rec = IterationRecord(len(state.history) + 1, state.spent.N, delta, state.spent, kl,
                          trace_true, trace_est, x, se, dev)
    state.history.append(rec)
    log.info("iteration %d: N=%g D_KL=%.4g tr(C)=%.4g", rec.iteration, rec.N, kl, trace_true)
    return rec


def run_campaign(
    net_truth: DifferenceNetwork,
    s_init,
    schedule,
    objective: str = "A",
    seed: int = 0,
    *,
    x_true=None,
    kl_floor: float | None = 1e-12,
) -> CampaignState:
    """Iterate the campaign over the budget increments in ``schedule``.

    ``D_KL`` in the history compares the cumulative allocation with the
    optimal allocation under the true fluctuations; ``kl_floor`` (``None`` to
    disable) regularizes edges the true optimum leaves empty.
    """
    which = check_objective(objective)
    schedule = [int(d) for d in schedule]
    if not schedule or any(d <= 0 for d in schedule):
        raise ValueError("schedule must be a non-empty list of positive budgets")
    state = CampaignState.start(net_truth, s_init, x_true)
    target = optimize(net_truth, 1.0, which).allocation
    rng = np.random.default_rng(seed)
    for d in schedule:
        campaign_step(state, d, which, rng, target, kl_floor)
    return state


def history_rows(state: CampaignState) -> list[dict]:
    rows = []
    for r in state.history:
        row = {"iteration": r.iteration, "N": r.N, "D_KL": r.kl, "tr_C": r.trace}
        for i in range(state.net.m):
            row[f"x_{i + 1}"] = np.nan if r.estimates is None else float(r.estimates[i])
        rows.append(row)
    return rows
