"""Seeded Monte-Carlo comparisons of allocation schemes on random networks.

Every replicate draws a fresh network from ``BenchmarkSpec.s_model``; the
random stream of replicate ``t`` is spawned from the ``BenchmarkSpec`` seed, so results
do not depend on evaluation order.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .campaign import run_campaign
from .convexopt import optimize
from .designs import (
    SparseDesignSpec,
    const_rel_error_a_optimal,
    const_rel_error_d_optimal,
    const_rel_error_network,
    naive_allocation,
    sparse_design,
)
from .fileio import write_rows_csv
from .etree import e_optimal, eigen_residual, shortest_path_tree
from .inference import check_objective, information_state
from .netcore import DifferenceNetwork, complete_network, connectivity_deficit, heavy_atom_network

STAT_COLUMNS = ("metric", "allocation", "reference", "median", "q1", "q3", "mean", "stderr")
METRICS = ("trace", "spectral_norm", "det")
PRUNE_THRESHOLD = 1e-2
BENCH_N = 1e6


@dataclass(frozen=True)
class BenchmarkSpec:
    """Random-network benchmark settings.

    ``s_model`` is one of

    * ``uniform:lo:hi``: a square matrix of ``U(lo, hi)`` draws is averaged
      with its transpose; the diagonal gives ``s_i`` and the off-diagonal
      entries ``s_ij``
    * ``uniform_iid:lo:hi``: every edge drawn independently from ``U(lo, hi)``
    * ``constant`` or ``constant:c``: every edge has the same ``s``
    * ``const_rel:lo:hi``: sorted ``s_i ~ U(lo, hi)`` and ``s_ij = s_j - s_i``
    """

    m: int = 30
    T: int = 200
    s_model: str = "uniform:1:5"
    seed: int = 0
    objectives: tuple[str, ...] = ("A", "D", "E")
    baselines: tuple[str, ...] = ("uniform", "proportional_s", "mst_constant")
    N: float = BENCH_N

    def __post_init__(self):
        if self.m < 1 or self.T < 1:
            raise ValueError("need m >= 1 and T >= 1")
        self.model()
        object.__setattr__(self, "objectives", tuple(check_objective(o) for o in self.objectives))

    def model(self) -> tuple[str, float, float]:
        parts = self.s_model.split(":")
        kind = parts[0]
        defaults = {"uniform": (1.0, 5.0), "uniform_iid": (1.0, 5.0), "const_rel": (0.0, 1.0), "constant": (1.0, 1.0)}
        if kind not in defaults:
            raise ValueError(f"unknown s_model {self.s_model!r}")
        lo, hi = defaults[kind]
        try:
            if kind == "constant" and len(parts) == 2:
                lo = hi = float(parts[1])
            elif len(parts) == 3:
                lo, hi = float(parts[1]), float(parts[2])
            elif len(parts) != 1:
                raise ValueError
        except ValueError:
            raise ValueError(f"cannot parse s_model {self.s_model!r}") from None
        if kind == "constant":
            if not lo > 0:
                raise ValueError("constant fluctuation must be positive")
        elif not lo < hi:
            raise ValueError("s_model needs lo < hi")
        return kind, lo, hi

    def streams(self) -> list[np.random.Generator]:
        return [np.random.default_rng(s) for s in np.random.SeedSequence(self.seed).spawn(self.T)]


def draw_network(spec: BenchmarkSpec, rng: np.random.Generator) -> DifferenceNetwork:
    kind, lo, hi = spec.model()
    m = spec.m
    if kind == "uniform":
        S = rng.uniform(lo, hi, (m, m))
        S = 0.5 * (S + S.T)
        return complete_network(np.diag(S).copy(), S)
    if kind == "uniform_iid":
        return complete_network(rng.uniform(lo, hi, m), rng.uniform(lo, hi, (m, m)))
    if kind == "constant":
        return complete_network(np.full(m, lo), np.full((m, m), lo))
    while True:
        s = np.sort(rng.uniform(lo, hi, m))
        if np.all(np.diff(s) > 0) and s[0] > 0:
            return const_rel_error_network(s)


def _allocations(net: DifferenceNetwork, spec: BenchmarkSpec) -> dict:
    out = {}
    for which in spec.objectives:
        out[which] = optimize(net, spec.N, which).allocation
    for scheme in spec.baselines:
        out[scheme] = naive_allocation(net, spec.N, scheme)
    return out


@dataclass
class StatsTable:
    """Summary rows plus the per-replicate samples they came from."""

    rows: list[dict]
    samples: dict

    def get(self, metric: str, allocation: str, reference: str = "mst_constant") -> dict:
        for r in self.rows:
            if (r["metric"], r["allocation"], r["reference"]) == (metric, allocation, reference):
                return r
        raise KeyError((metric, allocation, reference))

    def to_csv(self, dest) -> None:
        write_rows_csv(self.rows, dest, STAT_COLUMNS)


def summarize(metric: str, allocation: str, reference: str, values) -> dict:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else float("nan")
    return {"metric": metric, "allocation": allocation, "reference": reference,
            "median": float(med), "q1": float(q1), "q3": float(q3), "mean": float(v.mean()), "stderr": se}


def ratio_of_means(metric: str, allocation: str, reference: str, num, den) -> dict:
    """Row for ``mean(num) / mean(den)`` with a delta-method standard error."""
    num, den = np.asarray(num, dtype=float), np.asarray(den, dtype=float)
    r = num.mean() / den.mean()
    T = len(num)
    se = float("nan")
    if T > 1:
        cov = np.cov(num, den)
        var = (cov[0, 0] - 2 * r * cov[0, 1] + r**2 * cov[1, 1]) / (T * den.mean() ** 2)
        se = float(np.sqrt(max(var, 0.0)))
    return {"metric": f"{metric}_ratio_of_means", "allocation": allocation, "reference": reference,
            "median": float("nan"), "q1": float("nan"), "q3": float("nan"), "mean": float(r), "stderr": se}


def run_random_benchmark(spec: BenchmarkSpec) -> StatsTable:
    """Objective ratios of each allocation against the MST reference, plus A-optimal cross ratios.

    Rows with reference ``mst_constant`` are per-replicate ratios aggregated
    over replicates.  When A is among the objectives, its ``tr(C)`` is also
    compared with every other allocation, both as a mean of per-replicate
    ratios (metric ``trace``) and as a ratio of mean traces (metric
    ``trace_ratio_of_means``).
    """
    names = list(spec.objectives) + list(spec.baselines)
    values = {name: {k: [] for k in ("trace", "spectral_norm", "logdet")} for name in names}
    for rng in spec.streams():
        net = draw_network(spec, rng)
        for name, alloc in _allocations(net, spec).items():
            st = information_state(net, alloc)
            values[name]["trace"].append(st.trace)
            values[name]["spectral_norm"].append(st.spectral_norm)
            values[name]["logdet"].append(st.logdet)
    vals = {n: {k: np.array(v) for k, v in d.items()} for n, d in values.items()}

    rows = []
    ref = "mst_constant"
    if ref in vals:
        for name in names:
            if name == ref:
                continue
            rows.append(summarize("trace", name, ref, vals[name]["trace"] / vals[ref]["trace"]))
            rows.append(summarize("spectral_norm", name, ref, vals[name]["spectral_norm"] / vals[ref]["spectral_norm"]))
            rows.append(summarize("det", name, ref, np.exp(vals[name]["logdet"] - vals[ref]["logdet"])))
    if "A" in vals:
        a = vals["A"]["trace"]
        for name in names:
            if name == "A":
                continue
            b = vals[name]["trace"]
            rows.append(summarize("trace", "A", name, a / b))
            rows.append(ratio_of_means("trace", "A", name, a, b))
    return StatsTable(rows, vals)


def prune_allocation(net: DifferenceNetwork, alloc, threshold: float = PRUNE_THRESHOLD) -> list:
    """Edges whose allocation passes ``n_e / s_e / (N / sum(s)) >= threshold``."""
    n = alloc.on(net)
    score = n / net.s / (alloc.N / net.s.sum())
    return [e for e, v in zip(net.edges, score) if v >= threshold]


def connectivity_stats(spec: BenchmarkSpec) -> StatsTable:
    """Edge counts and 2-edge-connectivity of pruned A-optimal networks."""
    ind, pair, deficit = [], [], []
    for rng in spec.streams():
        net = draw_network(spec, rng)
        kept = prune_allocation(net, optimize(net, spec.N, "A").allocation)
        ind.append(sum(1 for i, _ in kept if i == 0))
        pair.append(sum(1 for i, _ in kept if i > 0))
        deficit.append(connectivity_deficit(kept, spec.m, 2))
    deficit = np.array(deficit, dtype=float)
    samples = {"individual": np.array(ind, dtype=float), "pairwise": np.array(pair, dtype=float), "deficit": deficit}
    rows = [
        summarize("individual_edges", "A", "pruned", samples["individual"]),
        summarize("pair_edges", "A", "pruned", samples["pairwise"]),
        summarize("deficit_k2", "A", "pruned", deficit),
        summarize("two_connected", "A", "pruned", (deficit == 0).astype(float)),
    ]
    return StatsTable(rows, samples)


def sparse_stats(spec: BenchmarkSpec, k: int = 2, M: int | None = None, epsilon: float = 0.1) -> StatsTable:
    """``tr(C)`` of the sparse design relative to the unconstrained A-optimal."""
    M = 3 * spec.m if M is None else M
    design = SparseDesignSpec(k=k, M=M, epsilon=epsilon, objective="A")
    ratios, used = [], []
    for rng in spec.streams():
        net = draw_network(spec, rng)
        full = optimize(net, spec.N, "A")
        rep = sparse_design(net, spec.N, design)
        ratios.append(rep.objective / full.objective)
        used.append(len(rep.allocation.support()))
    samples = {"ratio": np.array(ratios), "edges": np.array(used, dtype=float)}
    rows = [summarize("trace", "sparse", "A", samples["ratio"]), summarize("edges", "sparse", "A", samples["edges"])]
    return StatsTable(rows, samples)


def e_optimality_check(spec: BenchmarkSpec) -> StatsTable:
    """Eigenpair residual of the tree construction and its margin over the numerical E solver."""
    resid, margin = [], []
    for rng in spec.streams():
        net = draw_network(spec, rng)
        tree = shortest_path_tree(net)
        alloc, _ = e_optimal(net, spec.N, tree)
        resid.append(eigen_residual(net, alloc, tree))
        constructive = information_state(net, alloc).spectral_norm
        numeric = optimize(net, spec.N, "E", numerical_e=True).objective
        margin.append(constructive - numeric)
    samples = {"residual": np.array(resid), "margin": np.array(margin)}
    rows = [summarize("eigen_residual", "E", "tree", samples["residual"]),
            summarize("spectral_norm_minus_numeric", "E", "numerical", samples["margin"])]
    return StatsTable(rows, samples)


def time_e_construction(m_values, seed: int = 0, repeats: int = 5, N: float = BENCH_N) -> dict:
    """Best-of-``repeats`` seconds for the tree construction at each ``m``."""
    out = {}
    for m in m_values:
        net = draw_network(BenchmarkSpec(m=m, T=1, seed=seed), np.random.default_rng(seed))
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            optimize(net, N, "E")
            best = min(best, time.perf_counter() - t0)
        out[m] = best
    return out


def time_numerical_e(m: int, seed: int = 0, N: float = BENCH_N) -> float:
    net = draw_network(BenchmarkSpec(m=m, T=1, seed=seed), np.random.default_rng(seed))
    t0 = time.perf_counter()
    optimize(net, N, "E", numerical_e=True)
    return time.perf_counter() - t0


def chain_design_check(count: int = 20, m_max: int = 8, seed: int = 0, N: float = 1.0) -> dict:
    """Compare chain designs with numerical optima on constant-relative-error networks.

    Returns arrays of relative ``tr(C)`` and ``det(C)`` gaps to the numerical
    optimum and the relative gap between the closed-form trace and the
    trace of the constructed allocation.
    """
    rng = np.random.default_rng(seed)
    a_gap, d_gap, formula = [], [], []
    for _ in range(count):
        m = int(rng.integers(2, m_max + 1))
        s = np.sort(rng.uniform(0.0, 1.0, m))
        net = const_rel_error_network(s)
        a_alloc, predicted = const_rel_error_a_optimal(s, N)
        tr_chain = information_state(net, a_alloc).trace
        formula.append(abs(tr_chain - predicted) / predicted)
        a_gap.append((tr_chain - optimize(net, N, "A").objective) / tr_chain)
        ld_chain = information_state(net, const_rel_error_d_optimal(s, N)).logdet
        d_gap.append(np.expm1(ld_chain - optimize(net, N, "D").objective))
    return {"a_gap": np.array(a_gap), "d_gap": np.array(d_gap), "formula": np.array(formula)}


def synthetic_truth(seed: int = 0):
    """Eight ligands built from three two-way substitutions on a shared core.

    Heavy atoms of each ligand and of each pairwise difference feed the
    fluctuation model; true values are drawn around -9 with spread 1.5.
    Returns ``(network, x_true)``.
    """
    core = 4
    rings = [(6, 9), (5, 7), (6, 10)]
    options = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]
    h = [core + sum(rings[r][o[r]] for r in range(3)) for o in options]
    h_pair = [[sum(rings[r][oi[r]] for r in range(3) if oi[r] != oj[r]) for oj in options] for oi in options]
    net = heavy_atom_network(h, h_pair, 0.1)
    x_true = np.random.default_rng(seed).normal(-9.0, 1.5, len(h))
    return net, x_true


def campaign_check(schedule=(100, 300, 1000, 3000, 10000), seed: int = 0, objective: str = "A") -> dict:
    """Run one campaign on :func:`synthetic_truth` and compare with direct designs.

    Initial fluctuation guesses are ``U(0, 1)`` from the same seed.
    """
    net, x_true = synthetic_truth(0)
    rng = np.random.default_rng(seed)
    s_init = rng.uniform(0.0, 1.0, net.n_edges)
    s_init = np.where(s_init > 0, s_init, 0.5)
    state = run_campaign(net, s_init, schedule, objective, seed, x_true=x_true)
    total = float(sum(schedule))
    direct = information_state(net, optimize(net, total, objective).allocation).trace
    mst = information_state(net, naive_allocation(net, total, "mst_constant")).trace
    final = state.history[-1]
    return {
        "state": state,
        "trace_ratio": final.trace / direct,
        "mst_ratio": final.trace / mst,
        "kl_initial": state.history[0].kl,
        "kl_final": final.kl,
    }
