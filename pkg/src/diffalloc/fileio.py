"""JSON and CSV readers and writers for networks, allocations and measurements.

Floats are written with ``repr``, which round-trips binary64 values exactly
(17 significant digits at most).
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .netcore import Allocation, DifferenceNetwork, MeasurementSet, build_network


def network_to_dict(net: DifferenceNetwork) -> dict:
    edges = []
    for k, (i, j) in enumerate(net.edges):
        row = {"i": i, "j": j, "s": float(net.s[k])}
        if net.has_costs:
            row["tau"] = float(net.tau[k])
        edges.append(row)
    return {"m": net.m, "edges": edges}


def network_from_dict(doc: dict) -> DifferenceNetwork:
    try:
        m = int(doc["m"])
        rows = doc["edges"]
        entries = []
        for r in rows:
            e = (int(r["i"]), int(r["j"]))
            entries.append((e, float(r["s"]), float(r["tau"])) if "tau" in r else (e, float(r["s"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed network document: {exc}") from exc
    return build_network(m, entries)


def read_network(path) -> DifferenceNetwork:
    return network_from_dict(json.loads(Path(path).read_text()))


def write_network(net: DifferenceNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1))


def write_allocation_csv(alloc: Allocation, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "n"])
        for (i, j), n in zip(alloc.edges, alloc.n):
            w.writerow([i, j, repr(float(n))])


def read_allocation_csv(path, N: float | None = None) -> Allocation:
    counts = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            counts[(int(row["i"]), int(row["j"]))] = float(row["n"])
    return Allocation.from_mapping(counts, N)


def allocation_to_dict(alloc: Allocation) -> dict:
    return {"N": float(alloc.N), "edges": [{"i": i, "j": j, "n": float(n)} for (i, j), n in zip(alloc.edges, alloc.n)]}


def write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, default=_jsonable))


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def read_measurements_csv(path) -> MeasurementSet:
    """Rows ``i,j,x,n,s``: observed mean, sample count and per-sample fluctuation."""
    x, n, s = {}, {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            e = (int(row["i"]), int(row["j"]))
            if e in x:
                raise ValueError(f"edge {e} listed twice")
            x[e], n[e], s[e] = float(row["x"]), float(row["n"]), float(row["s"])
    return MeasurementSet(x, n, s)


def write_rows_csv(rows: list[dict], dest, fieldnames=None) -> None:
    """Write dict rows to a path or an open text stream."""
    fieldnames = list(fieldnames or (rows[0] if rows else []))
    if hasattr(dest, "write"):
        _write_rows(rows, dest, fieldnames)
    else:
        with open(dest, "w", newline="") as fh:
            _write_rows(rows, fh, fieldnames)


def _write_rows(rows, fh, fieldnames) -> None:
    w = csv.DictWriter(fh, fieldnames=fieldnames)
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})
