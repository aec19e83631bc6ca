"""Gaussian free field sampling and the cable-edge percolation it induces.

The free field on a network is the centred Gaussian vector with covariance
equal to the Green matrix.  On the metric graph the field continues across
each cable as an independent variance-2 Brownian bridge; an edge is "open"
when the interpolated field has no zero on the cable, which happens with
probability ``1 - exp(-2 C(x, y) phi_x phi_y)`` when the endpoint values have
the same sign and never otherwise.  Two vertices lie in the same open cluster
with probability ``(2 / pi) arcsin(g(x, y))`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clusters import ClusterPartition, build_partition
from .green import GreenOperator, normalized_green
from .network import Network

__all__ = [
    "FieldSample",
    "EdgeConfiguration",
    "sample_gff",
    "sample_edge_configuration",
    "edge_no_zero_probability",
    "connectivity_probability",
    "cluster_edges",
]


@dataclass(frozen=True, eq=False)
class FieldSample:
    """Field values per vertex; zero at absorbing vertices."""

    values: np.ndarray


@dataclass(frozen=True, eq=False)
class EdgeConfiguration:
    """Open/closed flag per edge of the network."""

    open: np.ndarray


def sample_gff(gop: GreenOperator, rng: np.random.Generator) -> FieldSample:
    """Draw one free field: ``phi = chol(G) z`` with z standard normal."""
    net = gop.network
    z = rng.standard_normal(net.alive.size)
    values = np.zeros(net.vertex_count)
    values[net.alive] = gop.chol @ z
    return FieldSample(values)


def edge_no_zero_probability(conductance: float, phi_x: float, phi_y: float) -> float:
    """Probability that the bridge interpolating the field across one cable
    has no zero, i.e. that the edge is open.

    Zero when the endpoint values do not share a strict sign.  Exact zeros of
    the field (a null event) close all incident edges, which keeps the
    configuration deterministic given the field and the uniform draws.
    """
    prod = phi_x * phi_y
    if prod <= 0.0:
        return 0.0
    return -math.expm1(-2.0 * conductance * prod)


def sample_edge_configuration(
    field: FieldSample, net: Network, rng: np.random.Generator
) -> EdgeConfiguration:
    """Open each edge independently given the field.

    One uniform draw is consumed per edge, in edge-id order, so the
    configuration is reproducible for a fixed stream.
    """
    phi = field.values
    probs = np.empty(net.edge_count)
    for eid, (u, v, c) in enumerate(net.edges):
        probs[eid] = edge_no_zero_probability(c, phi[u], phi[v])
    draws = rng.random(net.edge_count)
    return EdgeConfiguration(draws < probs)


def connectivity_probability(gop: GreenOperator, x: int, y: int) -> float:
    """Exact probability that x and y share a cable-percolation cluster."""
    return (2.0 / math.pi) * math.asin(normalized_green(gop, x, y))


def cluster_edges(config: EdgeConfiguration, net: Network) -> ClusterPartition:
    """Connected components over open edges, deterministic labels."""
    merges = []
    records = []
    for eid, (u, v, _) in enumerate(net.edges):
        if config.open[eid]:
            merges.append((u, v))
            records.append((u, eid))
    return build_partition(net.vertex_count, merges, records)
