"""Budget allocation by convex minimization over the scaled simplex.

A- and D-optimal designs are found by spectral projected gradient descent
(Barzilai-Borwein steps, monotone Armijo backtracking) on the allocation
fractions, diagonally scaled by the edge fluctuations, followed when needed
by Newton steps on the funded face.  The E objective is handled by the shortest-path-tree
construction when nothing has been spent yet, and otherwise by the same
descent applied to a soft-min smoothing of the smallest information
eigenvalue.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import etree
from .errors import BudgetMismatch, Infeasible, NotConverged, SingularInformation
from .inference import (
    check_objective,
    fisher_from_weights,
    gradient,
    gradient_from_covariance,
    information_state,
)
from .netcore import Allocation, DifferenceNetwork, require_connected

log = logging.getLogger(__name__)

KKT_TOL = 1e-6
STALL_RTOL = 1e-10
STALL_WINDOW = 10
MAX_ITER = 100_000


@dataclass(frozen=True)
class SolveReport:
    """Outcome of :func:`optimize`.

    ``allocation`` is the newly allocated budget (excluding any base),
    ``objective`` the value at base plus allocation.  For the E objective
    ``kkt_residual`` is the eigenpair residual of the tree construction, or a
    relative duality gap for the smoothed numerical path.
    """

    allocation: Allocation
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    which: str
    method: str
    extras: dict = field(default_factory=dict, compare=False)


def project_simplex(y: np.ndarray, total: float = 1.0, scale: np.ndarray | None = None) -> np.ndarray:
    """Projection onto ``{x >= 0, sum(x) = total}`` (sort-based).

    With ``scale`` the distance is ``sum((x - y)**2 / scale)`` and the
    solution is ``max(y - theta * scale, 0)``.
    """
    d = np.ones_like(y) if scale is None else scale
    r = y / d
    order = np.argsort(-r, kind="stable")
    theta = (np.cumsum(y[order]) - total) / np.cumsum(d[order])
    rho = np.nonzero(r[order] - theta > 0)[0][-1]
    return np.maximum(y - theta[rho] * d, 0.0)


def kkt_from_gradient(g: np.ndarray, active: np.ndarray) -> float:
    """First-order optimality residual on the simplex.

    Gradients of funded edges must agree and no unfunded edge may have a
    smaller gradient; both violations are measured relative to the smallest
    funded gradient.
    """
    if not np.any(active):
        return np.inf
    ga = g[active]
    mu = ga.min()
    spread = ga.max() - mu
    gi = g[~active]
    worst = max(0.0, float(np.max(mu - gi))) if gi.size else 0.0
    return float(max(spread, worst) / abs(mu)) if mu != 0 else (0.0 if spread == 0 and worst == 0 else np.inf)


def kkt_residual(net: DifferenceNetwork, alloc, which: str, base: Allocation | None = None) -> float:
    """Optimality certificate of ``alloc`` (added on top of ``base``) for A or D."""
    which = check_objective(which)
    if which == "E":
        raise ValueError("kkt_residual is defined for the A and D objectives")
    n = alloc.on(net) if isinstance(alloc, Allocation) else np.asarray(alloc, dtype=float)
    total = n + (0.0 if base is None else base.on(net))
    g = gradient(net, total, which)
    return kkt_from_gradient(g, n > 0)


class _Problem:
    """Objective on allocation fractions ``x`` with ``n = base + N x``."""

    def __init__(self, net: DifferenceNetwork, N: float, which: str, base_counts=None, beta: float = 0.0):
        self.B = net.incidence
        self.s = net.s
        self.N = N
        self.which = which
        self.w_scale = N / net.s**2
        self.F0 = np.zeros((net.m, net.m)) if base_counts is None else fisher_from_weights(self.B, base_counts / net.s**2)
        self.beta = beta
        self.evals = 0

    def fisher(self, x):
        return self.F0 + fisher_from_weights(self.B, self.w_scale * x)

    def value_grad(self, x):
        self.evals += 1
        F = self.fisher(x)
        if self.which == "E":
            return self._soft_eigen(F)
        try:
            cf = linalg.cho_factor(F, check_finite=False)
        except linalg.LinAlgError:
            return np.inf, None
        d = np.diag(cf[0])
        if d.min() <= 0 or (d.max() / d.min()) ** 2 > 1e12:
            return np.inf, None
        C = linalg.cho_solve(cf, np.eye(len(F)), check_finite=False)
        if self.which == "A":
            f = float(np.trace(C))
        else:
            f = float(-2.0 * np.sum(np.log(d)))
        return f, self.N * gradient_from_covariance(self.B, self.s, C, self.which)

    def hessian(self, x):
        """Second derivatives of the A or D objective in the fractions ``x``."""
        C = linalg.inv(self.fisher(x))
        CB = C @ self.B
        A = self.B.T @ CB
        W = np.outer(self.w_scale, self.w_scale)
        if self.which == "A":
            return 2.0 * W * A * (CB.T @ CB)
        return W * A**2

    def _soft_eigen(self, F):
        lam, V = linalg.eigh(F, check_finite=False)
        if lam[0] <= 0:
            return np.inf, None
        z = -self.beta * (lam - lam[0])
        p = np.exp(z)
        p /= p.sum()
        soft = lam[0] - np.log(np.sum(np.exp(z))) / self.beta
        if soft <= 0:
            return np.inf, None
        # d soft / d x_e = N / s_e^2 * sum_k p_k (u_e . v_k)^2
        UV = self.B.T @ V
        dsoft = self.w_scale * ((UV**2) @ p)
        return 1.0 / soft, -dsoft / soft**2


def _spg(prob: _Problem, x: np.ndarray, max_iter: int, tol: float, use_kkt: bool = True, scale=None):
    """Spectral projected gradient with monotone backtracking.

    ``scale`` is a positive diagonal preconditioner; steps follow
    ``-scale * g`` and projections use the matching metric.
    Returns ``(x, f, g, iterations, converged, stalled)``.
    """
    D = np.ones_like(x) if scale is None else scale
    f, g = prob.value_grad(x)
    if not np.isfinite(f):
        raise SingularInformation("starting allocation has singular information")
    alpha = 1.0 / max(np.max(np.abs(D * g)), 1e-300)
    history = [(f, np.inf)]
    it = 0
    converged = stalled = False
    for it in range(1, max_iter + 1):
        if use_kkt and kkt_from_gradient(g, x > 0) < tol:
            converged = True
            break
        d = project_simplex(x - alpha * D * g, 1.0, D) - x
        gd = float(g @ d)
        if gd >= 0:
            stalled = True
            break
        t = 1.0
        while True:
            xn = x + t * d
            fn, gn = prob.value_grad(xn)
            if fn <= f + 1e-4 * t * gd:
                break
            t *= 0.5
            if t < 1e-16:
                fn = None
                break
        if fn is None:
            stalled = True
            break
        xn = np.maximum(xn, 0.0)
        xn /= xn.sum()
        sx, sy = xn - x, gn - g
        sty = float(sx @ sy)
        alpha = float(sx @ (sx / D)) / sty if sty > 0 else 1e3 * alpha
        alpha = min(max(alpha, 1e-30), 1e30)
        x, f, g = xn, fn, gn
        history.append((f, kkt_from_gradient(g, x > 0) if use_kkt else 0.0))
        if len(history) > STALL_WINDOW:
            f_old, r_old = history[-1 - STALL_WINDOW]
            # stalled only if neither the objective nor the certificate moved
            if abs(f_old - f) <= STALL_RTOL * abs(f) and history[-1][1] >= r_old:
                stalled = True
                break
    return x, f, g, it, converged, stalled


def _newton_face(prob: _Problem, x, f, g, tol: float, max_iter: int = 50):
    """Newton steps restricted to funded edges plus those whose gradient says they should be.

    Each step solves the equality-constrained quadratic model on that set;
    the step is cut back to stay feasible and to satisfy the Armijo rule.
    Returns ``(x, f, g, iterations, converged)``.
    """
    for it in range(max_iter):
        active = x > 0
        if kkt_from_gradient(g, active) < tol:
            return x, f, g, it, True
        mu = g[active].min()
        idx = np.flatnonzero(active | (g < mu - 0.5 * tol * abs(mu)))
        k = len(idx)
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = prob.hessian(x)[np.ix_(idx, idx)]
        K[:k, k] = K[k, :k] = 1.0
        try:
            sol = linalg.solve(K, np.concatenate([-g[idx], [0.0]]), check_finite=False)
        except (linalg.LinAlgError, ValueError):
            break
        dx = np.zeros_like(x)
        dx[idx] = sol[:k]
        gd = float(g @ dx)
        if not gd < 0:
            break
        shrink = dx < 0
        t = min(1.0, float(np.min(-x[shrink] / dx[shrink]))) if shrink.any() else 1.0
        while t > 1e-12:
            xn = np.maximum(x + t * dx, 0.0)
            xn /= xn.sum()
            fn, gn = prob.value_grad(xn)
            if fn <= f + 1e-4 * t * gd:
                break
            t *= 0.5
        else:
            break
        x, f, g = xn, fn, gn
    else:
        it = max_iter
    return x, f, g, it, kkt_from_gradient(g, x > 0) < tol


def _start(net: DifferenceNetwork) -> np.ndarray:
    return np.full(net.n_edges, 1.0 / net.n_edges)


def optimize(
    net: DifferenceNetwork,
    N: float,
    which: str = "A",
    base: Allocation | None = None,
    *,
    tol: float = KKT_TOL,
    max_iter: int = MAX_ITER,
    numerical_e: bool = False,
) -> SolveReport:
    """Allocate ``N`` new samples on ``net`` to minimize the chosen objective.

    ``base`` holds samples already spent; the objective is evaluated at
    ``base + allocation``.  For ``which='E'`` without a base the tree
    construction is used unless ``numerical_e`` forces the iterative path.
    """
    which = check_objective(which)
    if not N > 0:
        raise BudgetMismatch("budget must be positive")
    try:
        require_connected(net)
    except Exception as exc:
        raise Infeasible(str(exc)) from exc
    base_counts = None if base is None else base.on(net)

    if which == "E" and base is None and not numerical_e:
        tree = etree.shortest_path_tree(net)
        alloc, predicted = etree.e_optimal(net, N, tree)
        resid = etree.eigen_residual(net, alloc, tree)
        value = information_state(net, alloc).spectral_norm
        if abs(value - predicted) > 1e-8 * predicted:
            log.warning("tree E-optimal spectral norm %g differs from prediction %g", value, predicted)
        return SolveReport(alloc, value, resid, 1, resid < 1e-8, "E", "shortest-path-tree")

    if net.n_edges == 1:
        alloc = Allocation(net.edges, [N], N)
        value = information_state(net, alloc if base is None else alloc + base).value(which)
        return SolveReport(alloc, value, 0.0, 0, True, which, "single-edge")

    if which == "E":
        return _optimize_e(net, N, base_counts, max_iter=max_iter)

    prob = _Problem(net, N, which, base_counts)
    # fractions of the optimum scale roughly like s; precondition accordingly
    x, f, g, it, converged, stalled = _spg(prob, _start(net), max_iter, tol, scale=net.s / net.s.mean())
    if not converged and it < max_iter:
        x, f, g, extra, converged = _newton_face(prob, x, f, g, tol, min(50, max_iter - it))
        it += extra
    n = N * x
    kkt = kkt_from_gradient(g, x > 0)
    converged = converged or kkt < tol
    if not converged and not stalled:
        warnings.warn(f"{which}-optimization hit the iteration cap ({max_iter})", NotConverged)
    return SolveReport(Allocation(net.edges, n, N), f, kkt, it, converged, which, "projected-gradient")


def _e_gap(prob: _Problem, x: np.ndarray) -> float:
    """Relative gap between ``lam_min`` and an upper bound on the best achievable value.

    For any density ``Z`` (psd, unit trace), ``max_x lam_min(F(x)) <=
    tr(Z F0) + N max_e u_e^T Z u_e / s_e^2``; ``Z`` is taken from the soft-min
    weights at ``x``.
    """
    F = prob.fisher(x)
    lam, V = linalg.eigh(F)
    p = np.exp(-prob.beta * (lam - lam[0]))
    p /= p.sum()
    UV = prob.B.T @ V
    bound = float(np.sum(p * np.einsum("ij,ij->j", V, prob.F0 @ V)) + np.max(prob.w_scale * ((UV**2) @ p)))
    return (bound - lam[0]) / lam[0]


def _optimize_e(net, N, base_counts, max_iter):
    x = _start(net)
    total_it = 0
    best = None
    lam_ref = None
    for sharp in (1e1, 1e2, 1e3, 1e4, 1e5):
        if lam_ref is None:
            lam_ref = linalg.eigvalsh(_Problem(net, N, "E", base_counts, 1.0).fisher(x))[0]
        prob = _Problem(net, N, "E", base_counts, beta=sharp / lam_ref)
        x, f, g, it, _, _ = _spg(prob, x, max(1, min(max_iter, 2000)), 0.0, use_kkt=False)
        total_it += it
        lam_ref = linalg.eigvalsh(prob.fisher(x))[0]
        if best is None or 1.0 / lam_ref < best[0]:
            best = (1.0 / lam_ref, x.copy(), _e_gap(prob, x))
    value, x, gap = best
    alloc = Allocation(net.edges, N * x, N)
    return SolveReport(alloc, value, gap, total_it, gap < 1e-3, "E", "smoothed-eigenvalue")


def round_to_integers(alloc: Allocation, N: int) -> Allocation:
    """Integer allocation with the same total and every entry moved by less than one.

    Fractional entries are sorted by ``(n_e, edge)``; the ``k`` smallest are
    rounded up and the rest down, where ``k = N - sum(floor(n_e))``.
    """
    n = np.asarray(alloc.n, dtype=float)
    if int(N) != N or abs(n.sum() - N) > 1e-9 * max(N, 1):
        raise BudgetMismatch(f"allocation sums to {n.sum()!r}, expected integer budget {N!r}")
    N = int(N)
    near = np.abs(n - np.rint(n)) <= 1e-9 * np.maximum(1.0, np.abs(n))
    base = np.where(near, np.rint(n), np.floor(n))
    k = N - int(base.sum())
    frac = np.flatnonzero(~near)
    order = sorted(frac, key=lambda i: (n[i], alloc.edges[i]))
    if not 0 <= k <= len(order):
        raise BudgetMismatch("cannot round allocation to the requested budget")
    out = base.copy()
    out[order[:k]] += 1.0
    return Allocation(alloc.edges, out, N)
