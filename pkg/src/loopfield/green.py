"""Dense linear algebra for the energy form and its inverse.

The energy form of a network is the symmetric matrix ``A`` over alive
vertices with ``A[x, x] = kappa(x) + sum_y C(x, y)`` and ``A[x, y] = -C(x, y)``.
Its inverse ``G`` is the Green matrix of the continuous-time walk and the
covariance of the Gaussian free field.  Everything here is dense and aimed at
desk-scale verification (a few thousand alive vertices at most).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .network import Network, modified_network

__all__ = [
    "GreenOperator",
    "RecurrentNetworkError",
    "compute_green",
    "normalized_green",
    "sqrt_det_ratio",
    "interpolated_green",
]

# Fail loudly on near-recurrent inputs: smallest Cholesky pivot must exceed
# this fraction of the largest diagonal entry of A.
SPD_PIVOT_TOLERANCE = 1e-12


class RecurrentNetworkError(ValueError):
    """The energy form is not positive definite (recurrent or degenerate)."""


@dataclass(frozen=True, eq=False)
class GreenOperator:
    """Energy form ``A``, Green matrix ``G = A^-1`` and derived factors.

    All matrices are indexed by position in ``alive`` (the alive vertices of
    the network, ascending).  ``chol`` is the lower Cholesky factor of ``G``,
    used to sample the free field.  ``log_det_g`` is ``log det G``.
    """

    network: Network
    matrix_a: np.ndarray
    green: np.ndarray
    chol: np.ndarray
    log_det_g: float

    @property
    def alive(self) -> np.ndarray:
        return self.network.alive

    def entry(self, x: int, y: int) -> float:
        """Green value by global vertex ids; zero if either vertex is absorbing."""
        px = self.network.alive_pos[x]
        py = self.network.alive_pos[y]
        if px < 0 or py < 0:
            return 0.0
        return float(self.green[px, py])

    def variance(self, x: int) -> float:
        return self.entry(x, x)


def _energy_matrix(net: Network) -> np.ndarray:
    alive = net.alive
    pos = net.alive_pos
    n = alive.size
    a = np.zeros((n, n))
    a[np.arange(n), np.arange(n)] = net.lambda_total[alive]
    for u, v, c in net.edges:
        pu, pv = pos[u], pos[v]
        if pu >= 0 and pv >= 0:
            a[pu, pv] -= c
            a[pv, pu] -= c
    return a


def _chol_lower(a: np.ndarray) -> np.ndarray:
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise RecurrentNetworkError(f"energy form is not positive definite: {exc}") from exc
    piv = np.diag(low) ** 2
    if piv.min() <= SPD_PIVOT_TOLERANCE * np.diag(a).max():
        raise RecurrentNetworkError(
            "energy form is numerically singular (near-recurrent network): "
            f"smallest pivot {piv.min():.3e}"
        )
    return low


def compute_green(net: Network) -> GreenOperator:
    """Invert the energy form of a transient network.

    Raises :class:`RecurrentNetworkError` if the form is not numerically
    positive definite.
    """
    a = _energy_matrix(net)
    low = _chol_lower(a)
    g = cho_solve((low, True), np.eye(a.shape[0]))
    g = 0.5 * (g + g.T)
    log_det_g = -2.0 * float(np.sum(np.log(np.diag(low))))
    chol_g = np.linalg.cholesky(g)
    return GreenOperator(net, a, g, chol_g, log_det_g)


def normalized_green(gop: GreenOperator, x: int, y: int) -> float:
    """Correlation ``g(x, y) = G(x, y) / sqrt(G(x, x) G(y, y))``; in [0, 1]."""
    if gop.network.alive_pos[x] < 0 or gop.network.alive_pos[y] < 0:
        raise ValueError("normalized Green is undefined at absorbing vertices")
    gxy = gop.entry(x, y)
    return gxy / math.sqrt(gop.entry(x, x) * gop.entry(y, y))


def _log_det_a(net: Network) -> float:
    low = _chol_lower(_energy_matrix(net))
    return 2.0 * float(np.sum(np.log(np.diag(low))))


def sqrt_det_ratio(net: Network, removed_edges) -> float:
    """``sqrt(det G_removed / det G)`` for the edge-removed network.

    This ratio is the probability that no loop of the soup at intensity 1/2
    traverses any of the removed edges.  Removing edges moves conductance
    into killing, so the ratio lies in (0, 1].
    """
    removed = list(removed_edges)
    if not removed:
        return 1.0
    log_det_a = _log_det_a(net)
    log_det_a_removed = _log_det_a(modified_network(net, removed))
    # det G = 1 / det A, so the ratio in log domain flips sign
    return math.exp(0.5 * (log_det_a - log_det_a_removed))


def interpolated_green(
    gop: GreenOperator,
    net: Network,
    p1: tuple[int, float],
    p2: tuple[int, float],
) -> float:
    """Green value between two points in the interior of cable edges.

    A point is ``(edge_id, r)`` with ``r`` the distance from the edge's first
    endpoint, ``0 <= r <= rho(e)``.  Off the diagonal of edges the value is
    the bilinear interpolation of the four vertex values; when both points
    lie on the same edge a tent correction ``2 (r1 ^ r2 - r1 r2 / rho)`` is
    added, which is the variance contributed by the bridge over that cable.
    """
    e1, r1 = int(p1[0]), float(p1[1])
    e2, r2 = int(p2[0]), float(p2[1])
    rho1 = net.rho(e1)
    rho2 = net.rho(e2)
    if not (0.0 <= r1 <= rho1):
        raise ValueError(f"point distance {r1} outside [0, {rho1}] on edge {e1}")
    if not (0.0 <= r2 <= rho2):
        raise ValueError(f"point distance {r2} outside [0, {rho2}] on edge {e2}")
    x1, y1, _ = net.edges[e1]
    x2, y2, _ = net.edges[e2]

    value = (
        (rho1 - r1) * (rho2 - r2) * gop.entry(x1, x2)
        + r1 * r2 * gop.entry(y1, y2)
        + r1 * (rho2 - r2) * gop.entry(y1, x2)
        + (rho1 - r1) * r2 * gop.entry(x1, y2)
    ) / (rho1 * rho2)
    if e1 == e2:
        value += 2.0 * (min(r1, r2) - r1 * r2 / rho1)
    return float(value)
