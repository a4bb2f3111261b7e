"""Difference networks, allocations and graph utilities.

A difference network has ``m`` quantities (vertices ``1..m``) plus an origin
vertex ``0``.  Edge ``(0, i)`` is an individual measurement of quantity ``i``
and edge ``(i, j)`` with ``0 < i < j`` measures ``x_i - x_j``.  Every edge
carries a per-sample fluctuation ``s_e`` and optionally a per-sample cost
``tau_e``.  Edges not present in the network are unavailable measurements.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from .errors import (
    AllKnown,
    BudgetMismatch,
    Disconnected,
    DuplicateEdge,
    IndexOutOfRange,
    MissingCost,
    NonPositiveFluctuation,
)

Edge = tuple[int, int]

BUDGET_RTOL = 1e-9


def canonical_edge(i: int, j: int) -> Edge:
    i, j = int(i), int(j)
    return (i, j) if i < j else (j, i)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DifferenceNetwork:
    """Available measurements with their fluctuations and optional costs.

    ``edges`` is kept in lexicographic order and ``s`` / ``tau`` are aligned
    with it.  Instances are immutable; use :func:`build_network` to construct
    one from user data.
    """

    m: int
    edges: tuple[Edge, ...]
    s: np.ndarray
    tau: np.ndarray | None = None
    _index: dict = field(init=False, repr=False, compare=False)
    _incidence: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "s", _frozen(self.s))
        if self.tau is not None:
            object.__setattr__(self, "tau", _frozen(self.tau))
        object.__setattr__(self, "_index", {e: k for k, e in enumerate(self.edges)})
        # column e is the measurement direction u_e
        B = np.zeros((self.m, len(self.edges)))
        for k, (i, j) in enumerate(self.edges):
            if i > 0:
                B[i - 1, k] = 1.0
                B[j - 1, k] = -1.0
            else:
                B[j - 1, k] = 1.0
        B.setflags(write=False)
        object.__setattr__(self, "_incidence", B)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def incidence(self) -> np.ndarray:
        """``m x |E|`` matrix whose columns are the measurement directions."""
        return self._incidence

    @property
    def has_costs(self) -> bool:
        return self.tau is not None

    def index(self, edge: Edge) -> int:
        return self._index[canonical_edge(*edge)]

    def __contains__(self, edge) -> bool:
        return canonical_edge(*edge) in self._index

    def fluctuation(self, edge: Edge) -> float:
        return float(self.s[self.index(edge)])

    def s_map(self) -> dict[Edge, float]:
        return {e: float(v) for e, v in zip(self.edges, self.s)}

    def with_fluctuations(self, s) -> "DifferenceNetwork":
        """Same edges, new fluctuations (array aligned with ``edges`` or a map)."""
        if isinstance(s, Mapping):
            s = [s[e] for e in self.edges]
        s = np.asarray(s, dtype=float)
        if np.any(~(s > 0)):
            raise NonPositiveFluctuation("fluctuations must be positive")
        return DifferenceNetwork(self.m, self.edges, s, self.tau)

    def restrict(self, edges: Iterable[Edge]) -> "DifferenceNetwork":
        """Sub-network keeping only ``edges`` (vertices unchanged)."""
        keep = sorted({canonical_edge(*e) for e in edges})
        idx = [self.index(e) for e in keep]
        tau = None if self.tau is None else self.tau[idx]
        return DifferenceNetwork(self.m, tuple(keep), self.s[idx], tau)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.m + 1))
        for e, s in zip(self.edges, self.s):
            g.add_edge(*e, s=float(s))
        return g


@dataclass(frozen=True)
class Allocation:
    """Nonnegative sample counts ``n`` on ``edges`` summing to the budget ``N``."""

    edges: tuple[Edge, ...]
    n: np.ndarray
    N: float

    def __post_init__(self):
        n = _frozen(self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "N", float(self.N))
        if n.shape != (len(self.edges),):
            raise ValueError("allocation length does not match its edge list")
        if np.any(~(n >= 0)):
            raise ValueError("sample counts must be nonnegative")
        if abs(n.sum() - self.N) > BUDGET_RTOL * max(abs(self.N), 1.0):
            raise BudgetMismatch(f"sum of allocation {n.sum()!r} != budget {self.N!r}")

    @classmethod
    def from_mapping(cls, n: Mapping[Edge, float], N: float | None = None) -> "Allocation":
        edges = sorted(canonical_edge(*e) for e in n)
        vals = np.array([n[e] if e in n else n[e[::-1]] for e in edges], dtype=float)
        return cls(tuple(edges), vals, vals.sum() if N is None else N)

    def as_dict(self) -> dict[Edge, float]:
        return {e: float(v) for e, v in zip(self.edges, self.n)}

    def support(self) -> tuple[Edge, ...]:
        return tuple(e for e, v in zip(self.edges, self.n) if v > 0)

    def on(self, net: DifferenceNetwork) -> np.ndarray:
        """Sample counts aligned with ``net.edges`` (zero where unallocated)."""
        out = np.zeros(net.n_edges)
        for e, v in zip(self.edges, self.n):
            if e in net:
                out[net.index(e)] = v
            elif v > 0:
                raise ValueError(f"edge {e} is allocated but absent from the network")
        return out

    def fractions(self) -> np.ndarray:
        return self.n / self.N

    def __add__(self, other: "Allocation") -> "Allocation":
        d = self.as_dict()
        for e, v in other.as_dict().items():
            d[e] = d.get(e, 0.0) + v
        return Allocation.from_mapping(d, self.N + other.N)


@dataclass(frozen=True)
class MeasurementSet:
    """Observed values with the sample count and empirical fluctuation per edge.

    ``x[(0, i)]`` estimates ``x_i``; ``x[(i, j)]`` estimates ``x_i - x_j``.
    """

    x: Mapping[Edge, float]
    n: Mapping[Edge, float]
    s: Mapping[Edge, float]

    def __post_init__(self):
        for e in self.x:
            if not (self.n[e] > 0 and self.s[e] > 0):
                raise ValueError(f"edge {e} needs positive sample count and fluctuation")

    @property
    def edges(self) -> tuple[Edge, ...]:
        return tuple(sorted(self.x))


def build_network(m: int, entries: Iterable[Sequence]) -> DifferenceNetwork:
    """Build a network from ``(edge, s)`` or ``(edge, s, tau)`` entries.

    Costs must be given for every edge or for none.
    """
    if m < 1:
        raise IndexOutOfRange("need at least one quantity")
    rows: dict[Edge, tuple[float, float | None]] = {}
    for entry in entries:
        edge, s = entry[0], entry[1]
        tau = entry[2] if len(entry) > 2 else None
        i, j = int(edge[0]), int(edge[1])
        if i == j or not (0 <= i <= m and 0 <= j <= m):
            raise IndexOutOfRange(f"invalid edge {edge} for m={m}")
        e = canonical_edge(i, j)
        if e in rows:
            raise DuplicateEdge(f"edge {e} given twice")
        if not (s > 0) or not np.isfinite(s):
            raise NonPositiveFluctuation(f"edge {e} has fluctuation {s!r}")
        if tau is not None and not (tau > 0):
            raise NonPositiveFluctuation(f"edge {e} has cost {tau!r}")
        rows[e] = (float(s), None if tau is None else float(tau))
    if not rows:
        raise Disconnected("network has no edges")
    edges = tuple(sorted(rows))
    s = [rows[e][0] for e in edges]
    taus = [rows[e][1] for e in edges]
    if all(t is None for t in taus):
        tau = None
    elif any(t is None for t in taus):
        raise MissingCost("costs must be given for all edges or none")
    else:
        tau = taus
    return DifferenceNetwork(m, edges, s, tau)


def complete_network(s_individual, s_pair) -> DifferenceNetwork:
    """All ``m(m+1)/2`` edges from a length-m vector and an ``m x m`` matrix."""
    s_individual = np.asarray(s_individual, dtype=float)
    s_pair = np.asarray(s_pair, dtype=float)
    m = len(s_individual)
    entries = [((0, i + 1), s_individual[i]) for i in range(m)]
    entries += [((i + 1, j + 1), s_pair[i, j]) for i in range(m) for j in range(i + 1, m)]
    return build_network(m, entries)


def heavy_atom_network(h, h_pair, zeta: float = 1.0) -> DifferenceNetwork:
    """Fluctuations from heavy-atom counts.

    ``s_i = zeta * sqrt(h[i])`` and ``s_ij = zeta * sqrt(max(h_pair[i][j],
    h_pair[j][i]))`` where ``h_pair[i][j]`` counts atoms of ``i`` that do not
    map onto atoms of ``j``.
    """
    h = np.asarray(h, dtype=float)
    hp = np.asarray(h_pair, dtype=float)
    return complete_network(zeta * np.sqrt(h), zeta * np.sqrt(np.maximum(hp, hp.T)))


def cost_transform(net: DifferenceNetwork) -> DifferenceNetwork:
    """Rescale fluctuations so that budgets are counted in cost units.

    Samples ``n`` with per-sample cost ``tau`` become ``n * tau`` cost units
    with fluctuation ``s * sqrt(tau)``; the returned network has unit costs.
    Map allocations back with :func:`from_cost_units`.
    """
    if net.tau is None:
        raise MissingCost("cost transform needs tau on every edge")
    return DifferenceNetwork(net.m, net.edges, net.s * np.sqrt(net.tau), np.ones(net.n_edges))


def from_cost_units(alloc: Allocation, net: DifferenceNetwork) -> Allocation:
    """Sample counts ``n_e = n_e_cost / tau_e`` for an allocation in cost units."""
    if net.tau is None:
        raise MissingCost("cost transform needs tau on every edge")
    n = alloc.on(net) / net.tau
    return Allocation(net.edges, n, n.sum())


def contract_references(net: DifferenceNetwork, known: Iterable[int]):
    """Merge quantities with known values into the origin.

    Returns ``(network, mapping)`` where ``mapping`` sends each remaining old
    vertex to its new index (origin maps to itself).  An edge ``(k, i)`` with
    ``k`` known becomes an individual measurement of ``i``; when several such
    channels land on the same quantity only the smallest fluctuation is kept.
    Edges between two known vertices are dropped.
    """
    known = {int(k) for k in known}
    if any(not (1 <= k <= net.m) for k in known):
        raise IndexOutOfRange(f"known vertices {sorted(known)} outside 1..{net.m}")
    if len(known) == net.m:
        raise AllKnown("at least one quantity must stay unknown")
    keep = [v for v in range(1, net.m + 1) if v not in known]
    mapping = {0: 0, **{v: k + 1 for k, v in enumerate(keep)}}
    best: dict[Edge, tuple[float, float | None]] = {}
    for k, (i, j) in enumerate(net.edges):
        a = 0 if i in known else i
        b = 0 if j in known else j
        if a == b:
            continue
        e = canonical_edge(mapping[a], mapping[b])
        tau = None if net.tau is None else float(net.tau[k])
        s = float(net.s[k])
        if e not in best or s < best[e][0]:
            best[e] = (s, tau)
    entries = [(e, s) if tau is None else (e, s, tau) for e, (s, tau) in best.items()]
    return build_network(len(keep), entries), mapping


def require_connected(net: DifferenceNetwork, edges: Iterable[Edge] | None = None) -> None:
    """Raise :class:`Disconnected` unless every quantity reaches the origin."""
    parent = list(range(net.m + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in net.edges if edges is None else edges:
        parent[find(i)] = find(j)
    root = find(0)
    missing = [v for v in range(1, net.m + 1) if find(v) != root]
    if missing:
        raise Disconnected(f"quantities {missing} have no path to the origin")


def minimum_spanning_tree(net: DifferenceNetwork) -> list[Edge]:
    """Kruskal MST of the fluctuation-weighted graph, ties broken by edge id."""
    require_connected(net)
    parent = list(range(net.m + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree = []
    for s, e in sorted(zip(net.s.tolist(), net.edges)):
        ra, rb = find(e[0]), find(e[1])
        if ra != rb:
            parent[ra] = rb
            tree.append(e)
            if len(tree) == net.m:
                break
    return sorted(tree)


def connectivity_deficit(edges: Iterable[Edge], m: int, k: int) -> int:
    """Fewest edges of the complete graph on ``0..m`` to add for k-edge-connectivity.

    Uses the component count for ``k=1`` and the bridge-tree leaf/isolated
    count (Eswaran-Tarjan) for ``k=2``.
    """
    if k not in (1, 2):
        raise ValueError("only k in {1, 2} is supported")
    g = nx.Graph()
    g.add_nodes_from(range(m + 1))
    g.add_edges_from(canonical_edge(*e) for e in edges)
    if k == 1:
        return nx.number_connected_components(g) - 1
    if m + 1 < 3:
        raise ValueError("a simple graph on two vertices cannot be 2-edge-connected")
    # contract 2-edge-connected components; the bridges then form a forest
    comp_of = {}
    for c, comp in enumerate(nx.k_edge_components(g, 2)):
        for v in comp:
            comp_of[v] = c
    n_comp = len(set(comp_of.values()))
    if n_comp == 1:
        return 0
    degree = [0] * n_comp
    for a, b in nx.bridges(g):
        degree[comp_of[a]] += 1
        degree[comp_of[b]] += 1
    leaves = sum(1 for d in degree if d == 1)
    isolated = sum(1 for d in degree if d == 0)
    return -(-leaves // 2) + isolated


def is_k_edge_connected(edges: Iterable[Edge], m: int, k: int) -> bool:
    return connectivity_deficit(edges, m, k) == 0
