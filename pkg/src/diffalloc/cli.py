"""Command-line entry point: ``diffalloc {design,sparse,iterate,benchmark,estimate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import fileio
from .campaign import history_rows, run_campaign
from .convexopt import optimize
from .designs import SparseDesignSpec, sparse_design
from .errors import DesignError
from .etree import shortest_path_tree
from .experiments import BenchmarkSpec, StatsTable, connectivity_stats, run_random_benchmark
from .inference import estimate
from .netcore import Allocation, complete_network, cost_transform, from_cost_units


def _emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _alloc_csv(alloc: Allocation) -> str:
    lines = ["i,j,n"] + [f"{i},{j},{float(n)!r}" for (i, j), n in zip(alloc.edges, alloc.n)]
    return "\n".join(lines) + "\n"


def _report(rep, path, **more) -> None:
    doc = {"objective": rep.objective, "kkt_residual": rep.kkt_residual, "iterations": rep.iterations,
           "converged": rep.converged, "method": rep.method, **more}
    if path:
        fileio.write_json(doc, path)


def cmd_design(args) -> int:
    net = fileio.read_network(args.network)
    solve_net = cost_transform(net) if net.has_costs else net
    base = fileio.read_allocation_csv(args.base) if args.base else None
    if base is not None and net.has_costs:
        # spent samples enter the cost-unit problem scaled by their costs
        base = Allocation(net.edges, base.on(net) * net.tau, float(base.on(net) @ net.tau))
    rep = optimize(solve_net, args.budget, args.objective, base=base)
    alloc = from_cost_units(rep.allocation, net) if net.has_costs else rep.allocation
    _emit(_alloc_csv(alloc), args.out)
    _report(rep, args.report, cost_units=net.has_costs)
    if args.emit_tree:
        tree = shortest_path_tree(solve_net)
        fileio.write_json({"parent": tree.parent.tolist(), "a": tree.dist.tolist()}, args.emit_tree)
    return 0


def cmd_sparse(args) -> int:
    net = fileio.read_network(args.network)
    spec = SparseDesignSpec(k=args.k, M=args.max_edges, epsilon=args.epsilon, objective=args.objective)
    rep = sparse_design(net, args.budget, spec)
    _emit(_alloc_csv(rep.allocation), args.out)
    _report(rep, args.report, edges=len(rep.allocation.support()),
            base_edges=[list(e) for e in rep.extras["base_edges"]])
    return 0


def _floor(text: str):
    return None if text.lower() == "none" else float(text)


def cmd_iterate(args) -> int:
    with open(args.truth) as fh:
        doc = json.load(fh)
    net = fileio.network_from_dict(doc)
    x_true = doc.get("x")
    rng = np.random.default_rng(args.seed)
    if args.init:
        s_init = fileio.read_network(args.init).s_map()
    else:
        s_init = rng.uniform(0.0, 1.0, net.n_edges)
        s_init[s_init == 0] = 0.5
    schedule = [int(v) for v in args.schedule.split(",") if v.strip()]
    state = run_campaign(net, s_init, schedule, args.objective, args.seed, x_true=x_true, kl_floor=args.kl_floor)
    rows = history_rows(state)
    fileio.write_rows_csv(rows, sys.stdout if args.out in (None, "-") else args.out)
    return 0


def cmd_benchmark(args) -> int:
    spec = BenchmarkSpec(m=args.m, T=args.replicates, s_model=args.s_model, seed=args.seed,
                         objectives=tuple(args.objectives.split(",")), N=args.budget)
    table = run_random_benchmark(spec)
    if args.connectivity:
        extra = connectivity_stats(BenchmarkSpec(m=args.m, T=args.replicates, s_model=args.s_model,
                                                 seed=args.seed, objectives=("A",), N=args.budget))
        table = StatsTable(table.rows + extra.rows, {**table.samples, **extra.samples})
    table.to_csv(sys.stdout if args.out in (None, "-") else args.out)
    return 0


def cmd_estimate(args) -> int:
    meas = fileio.read_measurements_csv(args.measurements)
    m = args.m or max(j for _, j in meas.edges)
    est = estimate(complete_network(np.ones(m), np.ones((m, m))), meas)
    _emit(json.dumps({"x": est.x.tolist(), "C": est.C.tolist()}, indent=1) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diffalloc", description="Optimal sampling budgets for difference networks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="optimal allocation for a network JSON file")
    d.add_argument("network")
    d.add_argument("--objective", type=str.upper, choices=["A", "D", "E"], default="A")
    d.add_argument("--budget", type=float, required=True)
    d.add_argument("--base", help="CSV (i,j,n) of samples already spent")
    d.add_argument("--out", help="allocation CSV (default stdout)")
    d.add_argument("--report", help="report JSON path")
    d.add_argument("--emit-tree", help="write the shortest-path tree (parent, a) as JSON")
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("sparse", help="allocation restricted to at most --max-edges measurements")
    s.add_argument("network")
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--max-edges", type=int, required=True)
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--objective", type=str.upper, choices=["A", "D", "E"], default="A")
    s.add_argument("--budget", type=float, required=True)
    s.add_argument("--out")
    s.add_argument("--report")
    s.set_defaults(func=cmd_sparse)

    it = sub.add_parser("iterate", help="simulated measure-and-reallocate campaign")
    it.add_argument("--truth", required=True, help='network JSON with an extra "x" list of true values')
    it.add_argument("--schedule", required=True, help="comma-separated budget increments")
    it.add_argument("--objective", type=str.upper, choices=["A", "D", "E"], default="A")
    it.add_argument("--seed", type=int, default=0)
    it.add_argument("--init", help="network JSON with initial fluctuation guesses (default U(0,1))")
    it.add_argument("--kl-floor", type=_floor, default=1e-12, help="target floor for D_KL, or 'none'")
    it.add_argument("--out")
    it.set_defaults(func=cmd_iterate)

    b = sub.add_parser("benchmark", help="random-network comparison statistics")
    b.add_argument("--m", type=int, default=30)
    b.add_argument("--replicates", type=int, default=200)
    b.add_argument("--s-model", default="uniform:1:5")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--objectives", default="A,D,E")
    b.add_argument("--budget", type=float, default=1e6)
    b.add_argument("--connectivity", action="store_true", help="append pruned-network connectivity rows")
    b.add_argument("--out")
    b.set_defaults(func=cmd_benchmark)

    e = sub.add_parser("estimate", help="maximum-likelihood values from a measurement CSV (i,j,x,n,s)")
    e.add_argument("measurements")
    e.add_argument("--m", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DesignError, ValueError, OSError) as exc:
        print(f"diffalloc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
