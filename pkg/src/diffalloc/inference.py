"""Fisher information, covariance and maximum-likelihood estimates.

With ``sigma_e^2 = s_e^2 / n_e`` the information matrix is

    F = sum_e (n_e / s_e^2) u_e u_e^T

where ``u_(0,i)`` is the unit vector of quantity ``i`` and
``u_(i,j) = unit_i - unit_j``.  The covariance of the estimates is ``F^-1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NotPositiveDefinite, SingularInformation
from .netcore import Allocation, DifferenceNetwork, MeasurementSet

COND_LIMIT = 1e12

OBJECTIVES = ("A", "D", "E")


def check_objective(which: str) -> str:
    w = str(which).upper()
    if w not in OBJECTIVES:
        raise ValueError(f"objective must be one of A, D, E; got {which!r}")
    return w


def _counts(net: DifferenceNetwork, alloc) -> np.ndarray:
    if isinstance(alloc, Allocation):
        return alloc.on(net)
    n = np.asarray(alloc, dtype=float)
    if n.shape != (net.n_edges,):
        raise ValueError("sample counts must align with the network edges")
    return n


def fisher_from_weights(B: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``B diag(w) B^T`` for precision weights ``w = n / s^2``."""
    F = (B * w) @ B.T
    return 0.5 * (F + F.T)


def fisher_matrix(net: DifferenceNetwork, alloc) -> np.ndarray:
    """Information matrix for ``alloc`` (an Allocation or counts aligned with edges).

    Edges with zero samples contribute nothing.
    """
    n = _counts(net, alloc)
    return fisher_from_weights(net.incidence, n / net.s**2)


def _check_conditioning(F: np.ndarray) -> np.ndarray:
    lam = linalg.eigvalsh(F)
    if lam[0] <= 0 or lam[-1] > COND_LIMIT * lam[0]:
        raise SingularInformation(
            "information matrix is singular; some quantity lacks a measured path to the origin"
        )
    return lam


def covariance(F: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric information matrix.

    Raises :class:`SingularInformation` when the condition number exceeds
    ``1e12``.
    """
    F = np.asarray(F, dtype=float)
    _check_conditioning(F)
    C = linalg.cho_solve(linalg.cho_factor(F), np.eye(len(F)))
    return 0.5 * (C + C.T)


def objective(C: np.ndarray, which: str) -> float:
    """``tr(C)``, ``ln det(C)`` or the largest eigenvalue of ``C``."""
    which = check_objective(which)
    C = np.asarray(C, dtype=float)
    lam = linalg.eigvalsh(C)
    if lam[0] <= 0:
        raise NotPositiveDefinite("covariance is not positive definite")
    if which == "A":
        return float(np.trace(C))
    if which == "D":
        return float(np.sum(np.log(lam)))
    return float(lam[-1])


@dataclass(frozen=True)
class InformationState:
    F: np.ndarray
    C: np.ndarray
    trace: float
    logdet: float
    spectral_norm: float

    def value(self, which: str) -> float:
        return {"A": self.trace, "D": self.logdet, "E": self.spectral_norm}[check_objective(which)]


def information_state(net: DifferenceNetwork, alloc) -> InformationState:
    F = fisher_matrix(net, alloc)
    lam = _check_conditioning(F)
    C = covariance(F)
    # spectral norm of C from the smallest eigenvalue of F
    return InformationState(F, C, float(np.trace(C)), float(-np.sum(np.log(lam))), float(1.0 / lam[0]))


def evaluate(net: DifferenceNetwork, alloc, which: str) -> float:
    """Objective value of an allocation on ``net``."""
    return information_state(net, alloc).value(which)


def gradient(net: DifferenceNetwork, alloc, which: str) -> np.ndarray:
    """Derivative of ``tr(C)`` or ``ln det(C)`` with respect to each ``n_e``.

    Returned as an array aligned with ``net.edges``:
    ``d tr(C)/d n_e = -|C u_e|^2 / s_e^2`` and
    ``d ln det(C)/d n_e = -u_e^T C u_e / s_e^2``.
    """
    which = check_objective(which)
    if which == "E":
        raise ValueError("the E objective is not differentiable; use the etree construction")
    C = covariance(fisher_matrix(net, alloc))
    return gradient_from_covariance(net.incidence, net.s, C, which)


def gradient_from_covariance(B: np.ndarray, s: np.ndarray, C: np.ndarray, which: str) -> np.ndarray:
    CB = C @ B
    if which == "A":
        return -np.einsum("ij,ij->j", CB, CB) / s**2
    return -np.einsum("ij,ij->j", B, CB) / s**2


@dataclass(frozen=True)
class Estimate:
    x: np.ndarray
    C: np.ndarray


def estimate(net: DifferenceNetwork, meas: MeasurementSet) -> Estimate:
    """Maximum-likelihood values of the quantities from measured edges.

    Solves ``F x = z`` with ``z_i = sum_e sigma_e^-2 (u_e)_i xhat_e``, which
    is the usual weighted least-squares normal equation.  ``net`` only fixes
    the number of quantities; fluctuations come from ``meas``.
    """
    m = net.m
    F = np.zeros((m, m))
    z = np.zeros(m)
    for (i, j), xhat in meas.x.items():
        w = meas.n[(i, j)] / meas.s[(i, j)] ** 2
        if i > 0:
            F[i - 1, i - 1] += w
            F[j - 1, j - 1] += w
            F[i - 1, j - 1] -= w
            F[j - 1, i - 1] -= w
            z[i - 1] += w * xhat
            z[j - 1] -= w * xhat
        else:
            F[j - 1, j - 1] += w
            z[j - 1] += w * xhat
    C = covariance(F)
    x = linalg.solve(F, z, assume_a="pos")
    return Estimate(x, C)
