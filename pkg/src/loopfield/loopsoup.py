"""Poisson ensembles of discrete Markov loops with continuous-time decoration.

The rooted-loop measure assigns mass ``tr(P^n) / n`` to skeletons of length
``n >= 2``, where ``P`` is the jump matrix ``P(x, y) = C(x, y) / lambda(x)``;
its total mass is ``m = -log det(I - P)``.  A soup of intensity ``alpha`` is
sampled as a Poisson number of loops with that length law, each skeleton
filled in by bridge conditioning through cached matrix powers, each visit
decorated with an exponential holding time at the vertex rate.  Loops that
never leave a vertex are not enumerated: their total duration at a vertex is
Gamma(alpha, lambda(x)) and is drawn directly as the trivial occupation.

Sampling rooted loops with the 1/n weight already reproduces the unrooted
loop mass; rotations are not deduplicated because every statistic computed
here (occupation, clusters, traversed edges) is rotation invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clusters import ClusterPartition, build_partition
from .green import GreenOperator
from .network import Network

__all__ = [
    "LoopSkeleton",
    "LoopSoupSample",
    "OccupationField",
    "LoopSoupSampler",
    "sample_loop_soup",
    "occupation_field",
    "loop_clusters",
]

MAX_LENGTH_CUTOFF = 100_000


@dataclass(frozen=True, eq=False)
class LoopSkeleton:
    """Cyclic vertex sequence of a discrete loop; consecutive entries
    (including last to first) are adjacent in the network."""

    vertices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True, eq=False)
class LoopSoupSample:
    """One realization of the soup: decorated loops plus trivial occupation.

    ``loops`` pairs each skeleton with its per-visit holding times.
    ``trivial_occupation`` holds the Gamma-distributed total duration of the
    one-point loops at each vertex.
    """

    loops: tuple[tuple[LoopSkeleton, np.ndarray], ...]
    trivial_occupation: np.ndarray
    alpha: float


@dataclass(frozen=True, eq=False)
class OccupationField:
    """Total time the soup spends at each vertex."""

    values: np.ndarray


class LoopSoupSampler:
    """Reusable sampler for one (network, alpha) pair.

    Matrix powers of the jump matrix are computed once, up to the length
    cutoff, and shared by every replica.  The cutoff is chosen so that the
    discarded tail of the length law has mass below ``length_cutoff_eps * m``,
    using the geometric bound ``tr(P^n) <= N rho^n`` with ``rho`` the spectral
    radius.
    """

    def __init__(
        self,
        net: Network,
        gop: GreenOperator,
        alpha: float,
        length_cutoff_eps: float = 1e-9,
    ):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if not (0 < length_cutoff_eps < 1):
            raise ValueError("length_cutoff_eps must lie in (0, 1)")
        self.network = net
        self.alpha = float(alpha)
        self.length_cutoff_eps = float(length_cutoff_eps)

        alive = net.alive
        lam = net.lambda_total[alive]
        n = alive.size
        p = np.zeros((n, n))
        sym = np.zeros((n, n))
        pos = net.alive_pos
        for u, v, c in net.edges:
            pu, pv = pos[u], pos[v]
            if pu < 0 or pv < 0:
                continue
            p[pu, pv] = c / lam[pu]
            p[pv, pu] = c / lam[pv]
            sym[pu, pv] = sym[pv, pu] = c / math.sqrt(lam[pu] * lam[pv])
        self._p = p
        self._lambda_alive = lam

        if net.edge_count == 0 or not p.any():
            self.spectral_radius = 0.0
            self.mass = 0.0
            self.length_cutoff = 1
            self.truncated_tail = 0.0
            self._length_values = np.empty(0, dtype=int)
            self._length_cdf = np.empty(0)
            self._powers = [np.eye(n)]
            self._root_cdfs = {}
            return

        radius = float(np.max(np.abs(np.linalg.eigvalsh(sym))))
        if radius >= 1.0:
            raise ValueError(
                f"jump matrix has spectral radius {radius:.6f} >= 1: network is not transient"
            )
        self.spectral_radius = radius

        sign, logdet = np.linalg.slogdet(np.eye(n) - p)
        if sign <= 0:
            raise ValueError("det(I - P) must be positive on a transient network")
        self.mass = -float(logdet)

        cutoff = 2
        while (
            n * radius ** (cutoff + 1) / ((cutoff + 1) * (1.0 - radius))
            >= length_cutoff_eps * self.mass
        ):
            cutoff += 1
            if cutoff > MAX_LENGTH_CUTOFF:
                raise ValueError("length cutoff exceeds limit; spectral radius too close to 1")
        self.length_cutoff = cutoff

        powers = [np.eye(n), p]
        for _ in range(2, cutoff + 1):
            powers.append(powers[-1] @ p)
        self._powers = powers

        q = np.array([np.trace(powers[k]) / k for k in range(2, cutoff + 1)])
        q = np.clip(q, 0.0, None)
        total = float(q.sum())
        self.truncated_tail = max(self.mass - total, 0.0)
        self._length_values = np.arange(2, cutoff + 1)
        self._length_cdf = np.cumsum(q) / total
        self._root_cdfs = {}
        for k in range(2, cutoff + 1):
            diag = np.clip(np.diag(powers[k]), 0.0, None)
            s = diag.sum()
            if s > 0:
                self._root_cdfs[k] = np.cumsum(diag) / s

    def _sample_skeleton(self, length: int, rng: np.random.Generator) -> np.ndarray:
        root = int(np.searchsorted(self._root_cdfs[length], rng.random(), side="right"))
        verts = np.empty(length, dtype=int)
        verts[0] = root
        cur = root
        for i in range(1, length):
            w = self._p[cur] * self._powers[length - i][:, root]
            cs = np.cumsum(w)
            cur = int(np.searchsorted(cs, rng.random() * cs[-1], side="right"))
            verts[i] = cur
        return verts

    def sample(self, rng: np.random.Generator) -> LoopSoupSample:
        net = self.network
        loops = []
        if self.mass > 0:
            count = int(rng.poisson(self.alpha * self.mass))
            for _ in range(count):
                pick = int(np.searchsorted(self._length_cdf, rng.random(), side="right"))
                pick = min(pick, self._length_values.size - 1)
                length = int(self._length_values[pick])
                verts = self._sample_skeleton(length, rng)
                holds = rng.exponential(1.0 / self._lambda_alive[verts])
                skeleton = LoopSkeleton(tuple(int(g) for g in net.alive[verts]))
                loops.append((skeleton, holds))
        trivial = np.zeros(net.vertex_count)
        trivial[net.alive] = rng.gamma(self.alpha, 1.0 / self._lambda_alive)
        return LoopSoupSample(tuple(loops), trivial, self.alpha)


def sample_loop_soup(
    net: Network,
    gop: GreenOperator,
    alpha: float,
    rng: np.random.Generator,
    length_cutoff_eps: float = 1e-9,
) -> LoopSoupSample:
    """One soup realization; builds a throwaway sampler.

    Experiments that replicate should construct a :class:`LoopSoupSampler`
    once and call ``sample`` per replica, which shares the cached powers.
    """
    return LoopSoupSampler(net, gop, alpha, length_cutoff_eps).sample(rng)


def occupation_field(sample: LoopSoupSample) -> OccupationField:
    """Sum holding times at each vertex, trivial loops included."""
    values = sample.trivial_occupation.copy()
    for skeleton, holds in sample.loops:
        np.add.at(values, np.asarray(skeleton.vertices), holds)
    return OccupationField(values)


def loop_clusters(sample: LoopSoupSample, net: Network) -> ClusterPartition:
    """Merge all vertices visited by a common loop; record traversed edges.

    Vertices visited by no loop stay singletons: trivial loops never traverse
    an edge and so never merge anything.
    """
    merges = []
    records = []
    for skeleton, _ in sample.loops:
        verts = skeleton.vertices
        n = len(verts)
        for i in range(n):
            u, v = verts[i], verts[(i + 1) % n]
            merges.append((u, v))
            records.append((u, net.edge_id(u, v)))
    return build_partition(net.vertex_count, merges, records)
