"""Constructive E-optimal allocation on the shortest-path tree from the origin.

Let ``a_i`` be the length of the shortest path (by fluctuation) from the
origin to quantity ``i`` and ``mu_i`` the predecessor of ``i`` on it.  The
allocation

    n_(i, mu_i) = N * s_(i, mu_i) * (sum of a_j over the subtree of i) / sum_j a_j^2

makes ``a`` an eigenvector of the information matrix with eigenvalue
``N / sum_j a_j^2``, which is its smallest eigenvalue; no allocation does
better on the largest eigenvalue of the covariance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Disconnected, ZeroAllocationOnTreeEdge
from .inference import fisher_matrix
from .netcore import Allocation, DifferenceNetwork, Edge, canonical_edge


@dataclass(frozen=True)
class ShortestPathTree:
    """Dijkstra tree rooted at the origin.

    ``parent[i]`` is the predecessor of vertex ``i`` (``parent[0] == -1``),
    ``dist[i]`` the path length ``a_i`` and ``order`` the vertices in the
    order they were settled (parents always precede children).
    """

    parent: np.ndarray
    dist: np.ndarray
    order: np.ndarray

    @property
    def m(self) -> int:
        return len(self.parent) - 1

    @property
    def edges(self) -> list[Edge]:
        return sorted(canonical_edge(i, self.parent[i]) for i in range(1, self.m + 1))

    def subtree_sums(self) -> np.ndarray:
        """``sum_{j in T_i} a_j`` for each vertex, by one leaves-up sweep."""
        acc = self.dist.copy()
        for v in self.order[::-1]:
            if v != 0:
                acc[self.parent[v]] += acc[v]
        return acc

    def ancestry(self) -> np.ndarray:
        """``m x m`` 0/1 matrix: entry ``(i, k)`` is 1 when tree edge ``(k, mu_k)`` lies on the path to ``i``."""
        m = self.m
        M = np.zeros((m, m))
        for v in self.order:
            if v == 0:
                continue
            p = self.parent[v]
            if p != 0:
                M[v - 1] = M[p - 1]
            M[v - 1, v - 1] = 1.0
        return M


def _weight_matrix(net: DifferenceNetwork) -> np.ndarray:
    W = np.full((net.m + 1, net.m + 1), np.inf)
    for (i, j), s in zip(net.edges, net.s):
        W[i, j] = W[j, i] = s
    return W


def shortest_path_tree(net: DifferenceNetwork) -> ShortestPathTree:
    """Array-based Dijkstra from vertex 0, O(m^2) over the dense graph.

    Equal-length alternatives keep the smaller parent index; among equally
    distant unsettled vertices the smaller index is settled first.
    """
    W = _weight_matrix(net)
    V = net.m + 1
    dist = np.full(V, np.inf)
    parent = np.full(V, -1, dtype=int)
    done = np.zeros(V, dtype=bool)
    dist[0] = 0.0
    order = []
    for _ in range(V):
        cand = np.where(done, np.inf, dist)
        u = int(np.argmin(cand))
        if not np.isfinite(cand[u]):
            missing = np.flatnonzero(~done).tolist()
            raise Disconnected(f"vertices {missing} are unreachable from the origin")
        done[u] = True
        order.append(u)
        alt = dist[u] + W[u]
        better = ~done & ((alt < dist) | ((alt == dist) & (u < parent)))
        dist[better] = alt[better]
        parent[better] = u
    return ShortestPathTree(parent, dist, np.array(order))


def e_optimal(net: DifferenceNetwork, N: float, tree: ShortestPathTree | None = None):
    """E-optimal allocation and its predicted spectral norm ``sum a_i^2 / N``."""
    if tree is None:
        tree = shortest_path_tree(net)
    a = tree.dist
    total = float(np.sum(a[1:] ** 2))
    sub = tree.subtree_sums()
    n = np.zeros(net.n_edges)
    for i in range(1, tree.m + 1):
        k = net.index((i, tree.parent[i]))
        n[k] = N * net.s[k] * sub[i] / total
    # absorb round-off so the budget is met exactly
    n *= N / n.sum()
    return Allocation(net.edges, n, N), total / N


def eigen_residual(net: DifferenceNetwork, alloc: Allocation, tree: ShortestPathTree) -> float:
    """``|F a - lam a| / |lam a|`` with ``lam = N / sum a_i^2``."""
    a = tree.dist[1:]
    lam = alloc.N / np.sum(a**2)
    F = fisher_matrix(net, alloc)
    return float(np.linalg.norm(F @ a - lam * a) / np.linalg.norm(lam * a))


def tree_covariance(net: DifferenceNetwork, tree: ShortestPathTree, alloc: Allocation) -> np.ndarray:
    """Covariance of tree-path estimates without inverting the information matrix.

    ``C_ij`` is the summed variance ``s_e^2 / n_e`` of the tree edges shared by
    the paths to ``i`` and ``j``.
    """
    n = alloc.on(net)
    tree_idx = [net.index((i, tree.parent[i])) for i in range(1, tree.m + 1)]
    off = np.ones(net.n_edges, dtype=bool)
    off[tree_idx] = False
    if np.any(n[off] > 0):
        raise ValueError("allocation has samples outside the tree")
    var = np.empty(tree.m)
    for i, k in enumerate(tree_idx):
        if not n[k] > 0:
            raise ZeroAllocationOnTreeEdge(f"tree edge {net.edges[k]} has no samples")
        var[i] = net.s[k] ** 2 / n[k]
    M = tree.ancestry()
    return (M * var) @ M.T
