"""Zero-hitting laws for the sum of a squared bridge and two squared
Bessel-0 excursion profiles over an interval of length T.

The probability that the sum

    b(t)^2 + beta1(t) + beta2(T - t),   0 < t < T,

has a zero (b a standard bridge, beta_i squared Bessel-0 started from l_i and
conditioned to die before T) reduces to a one-dimensional event: the first
zero of beta1 must fall before the last zero of the remaining sum.  Both zero
times have explicit densities, and the resulting probability is

    (1 / sqrt(pi)) * integral_0^inf exp(-lambda / s - s) ds / sqrt(s)
        = exp(-2 sqrt(lambda)),        lambda = l1 l2 / (2T)^2.

No path is ever simulated here; everything is densities, quadrature and
elementary sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import fixed_quad, quad
from scipy.special import erfinv

from .stats import mc_mean

__all__ = [
    "BridgeProblem",
    "zero_probability_closed_form",
    "zero_probability_quadrature",
    "sample_first_zero",
    "first_zero_cdf",
    "last_zero_density",
    "LastZeroSampler",
    "sample_last_zero",
    "three_process_zero_mc",
]


@dataclass(frozen=True)
class BridgeProblem:
    """Interval length and the two excursion initial values."""

    T: float
    l1: float
    l2: float

    def __post_init__(self) -> None:
        if not (self.T > 0 and self.l1 > 0 and self.l2 > 0):
            raise ValueError("T, l1, l2 must all be positive")

    @property
    def lam(self) -> float:
        return self.l1 * self.l2 / (2.0 * self.T) ** 2


def zero_probability_closed_form(p: BridgeProblem) -> float:
    """``exp(-2 sqrt(lambda))`` with ``lambda = l1 l2 / (2T)^2``."""
    return math.exp(-2.0 * math.sqrt(p.lam))


def zero_probability_quadrature(p: BridgeProblem, rel_tol: float = 1e-10) -> float:
    """Evaluate the zero probability by adaptive quadrature.

    The substitution ``s = t**2`` removes the ``1/sqrt(s)`` endpoint
    singularity, leaving ``(2 / sqrt(pi)) * integral exp(-lam/t^2 - t^2) dt``.
    Raises if the quadrature error estimate exceeds the requested tolerance.
    """
    if rel_tol < 1e-12:
        raise ValueError("rel_tol must be >= 1e-12")
    lam = p.lam

    def integrand(t):
        return np.exp(-lam / t**2 - t**2) if t > 0 else float(lam == 0.0)

    value, abserr = quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=rel_tol, limit=200)
    if value <= 0 or abserr > 10.0 * rel_tol * value:
        raise ArithmeticError(
            f"quadrature did not converge: value={value!r}, achieved error {abserr!r}"
        )
    return 2.0 / math.sqrt(math.pi) * value


# -- first zero of the excursion started from l1 ---------------------------
#
# Density (l1 / 2 t^2) exp(l1 / 2T - l1 / 2t) on (0, T).  Substituting
# u = l1 / (2 t) shows u is a unit exponential shifted by l1 / (2T), which
# gives both the exact sampler and the closed-form CDF.


def sample_first_zero(l1: float, T: float, rng: np.random.Generator, size=None):
    """Exact draw(s) of the first zero time; always in (0, T)."""
    if l1 <= 0 or T <= 0:
        raise ValueError("l1 and T must be positive")
    shifted = l1 / (2.0 * T) + rng.exponential(1.0, size=size)
    return l1 / (2.0 * shifted)


def first_zero_cdf(t, l1: float, T: float):
    t = np.asarray(t, dtype=float)
    out = np.exp(l1 / (2.0 * T) - l1 / (2.0 * np.clip(t, 1e-300, None)))
    return np.where(t <= 0, 0.0, np.where(t >= T, 1.0, out))


# -- last zero of the bridge-plus-excursion sum ----------------------------


def last_zero_density(t, l2: float, T: float):
    """Density of the last zero on (0, T):
    ``sqrt(l2 T) exp(l2/2T - l2/(2(T-t))) / sqrt(2 pi t (T-t)^3)``."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < T)
    ts = np.where(inside, t, 0.5 * T)
    dens = (
        math.sqrt(l2 * T)
        * np.exp(l2 / (2.0 * T) - l2 / (2.0 * (T - ts)))
        / np.sqrt(2.0 * math.pi * ts * (T - ts) ** 3)
    )
    return np.where(inside, dens, 0.0)


class LastZeroSampler:
    """Inverse-CDF sampler for the last-zero law on a cached grid.

    The time axis is reparametrized as ``t = T sin^2(theta)``, under which the
    density becomes smooth on (0, pi/2); knots are placed by an equal-mass
    heuristic and the CDF at the knots is accumulated by Gauss-Legendre
    quadrature per interval.  Construction fails if the accumulated mass does
    not reach 1 within tolerance, which signals an insufficient grid.
    """

    TAIL = 1e-12

    def __init__(self, l2: float, T: float, grid_size: int = 2048, tol: float = 1e-8):
        if l2 <= 0 or T <= 0:
            raise ValueError("l2 and T must be positive")
        self.l2 = float(l2)
        self.T = float(T)
        a = l2 / (2.0 * T)
        scale = 1.0 / math.sqrt(2.0 * a)  # heuristic spread of tan(theta)

        u = np.linspace(0.0, 1.0 - self.TAIL, grid_size + 1)
        v = scale * math.sqrt(2.0) * erfinv(u)
        theta = np.arctan(v)

        def g(th):
            tan = np.tan(th)
            return (
                2.0
                / math.sqrt(2.0 * math.pi)
                * math.sqrt(2.0 * a)
                * np.exp(-a * tan**2)
                / np.cos(th) ** 2
            )

        incr = np.empty(grid_size)
        for k in range(grid_size):
            incr[k], _ = fixed_quad(g, theta[k], theta[k + 1], n=24)
        cdf = np.concatenate([[0.0], np.cumsum(incr)])
        if abs(cdf[-1] - 1.0) > tol or np.any(np.diff(cdf) < 0):
            raise ArithmeticError(
                f"last-zero CDF grid failed: total mass {cdf[-1]!r}, tolerance {tol}"
            )
        self._cdf = cdf
        self._t = self.T * np.sin(theta) ** 2

    def cdf(self, t):
        """Grid CDF evaluated by interpolation (quadrature-backed)."""
        return np.interp(np.asarray(t, dtype=float), self._t, self._cdf, left=0.0, right=1.0)

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size=size)
        return np.interp(u, self._cdf, self._t)


def sample_last_zero(l2: float, T: float, rng: np.random.Generator, size=None):
    """Draw(s) of the last zero time via a freshly built grid sampler."""
    return LastZeroSampler(l2, T).sample(rng, size=size)


def three_process_zero_mc(
    p: BridgeProblem, replicas: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo estimate of the zero probability, with standard error.

    Estimates ``P(t1 <= t2)`` with the first-zero and last-zero times drawn
    independently; this equals the zero probability of the three-process sum
    without simulating any path.
    """
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    t1 = sample_first_zero(p.l1, p.T, rng, size=replicas)
    t2 = LastZeroSampler(p.l2, p.T).sample(rng, size=replicas)
    return mc_mean((t1 <= t2).astype(float))
