"""Couple a loop soup at intensity 1/2 with a Gaussian free field.

The construction: sample the soup, take its occupation field L and its loop
clusters; open every untraversed edge {x, y} independently with probability
``1 - exp(-2 C(x, y) sqrt(L_x L_y))``; merge clusters across the opened
edges; draw an independent uniform sign per merged cluster; and set
``phi_x = sign * sqrt(2 L_x)``.  The resulting field is a free field whose
sign is constant on every loop cluster.

The occupation field must include the trivial-loop Gamma mass; without it the
marginal of ``phi`` is wrong, which the single-vertex case pins down (a
signed ``sqrt(2 Gamma(1/2, kappa))`` is exactly a centred normal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clusters import ClusterPartition, build_partition
from .gff import FieldSample
from .green import GreenOperator, normalized_green
from .loopsoup import (
    LoopSoupSample,
    LoopSoupSampler,
    OccupationField,
    loop_clusters,
    occupation_field,
)
from .network import Network
from .stats import TestRecord, Thresholds, mc_mean, normal_cdf, ks_pvalue, z_score
from .streams import derive_stream

__all__ = [
    "CoupledSample",
    "edge_opening_probability",
    "couple",
    "collect_coupled_fields",
    "field_law_records",
    "verify_gff_law",
]

COUPLING_ALPHA = 0.5


@dataclass(frozen=True, eq=False)
class CoupledSample:
    """Soup, the opened edges, the merged sign clusters and the field."""

    soup: LoopSoupSample
    occupation: OccupationField
    base_clusters: ClusterPartition
    extra_open_edges: tuple[int, ...]
    merged_clusters: ClusterPartition
    signs: dict[int, int]
    field: FieldSample


def edge_opening_probability(conductance: float, occ_x: float, occ_y: float) -> float:
    """``1 - exp(-2 C sqrt(L_x L_y))`` for an edge untouched by loops."""
    return -math.expm1(-2.0 * conductance * math.sqrt(occ_x * occ_y))


def couple(net: Network, soup: LoopSoupSample, rng: np.random.Generator) -> CoupledSample:
    """Run the soup-to-field construction on one soup realization.

    Only soups at intensity 1/2 are accepted; the square-root identity
    between occupation and field holds at that intensity alone.

    Randomness is consumed in a fixed order: one uniform per untraversed edge
    in edge-id order, then one sign per merged cluster in increasing label
    order, so a fixed stream reproduces the field exactly.
    """
    if soup.alpha != COUPLING_ALPHA:
        raise ValueError(f"coupling requires a soup at intensity 1/2, got alpha={soup.alpha}")

    occ = occupation_field(soup)
    base = loop_clusters(soup, net)
    traversed: set[int] = set()
    for edge_ids in base.edge_sets.values():
        traversed.update(edge_ids)

    candidates = [eid for eid in range(net.edge_count) if eid not in traversed]
    draws = rng.random(len(candidates))
    extra = []
    for eid, u01 in zip(candidates, draws):
        x, y, c = net.edges[eid]
        if u01 < edge_opening_probability(c, occ.values[x], occ.values[y]):
            extra.append(eid)

    open_ids = sorted(traversed | set(extra))
    merge_pairs = [(net.edges[eid][0], net.edges[eid][1]) for eid in open_ids]
    edge_records = [(net.edges[eid][0], eid) for eid in open_ids]
    merged = build_partition(net.vertex_count, merge_pairs, edge_records)

    labels = sorted(merged.members)
    sign_draws = rng.integers(0, 2, size=len(labels)) * 2 - 1
    signs = {label: int(s) for label, s in zip(labels, sign_draws)}

    values = np.zeros(net.vertex_count)
    for x in net.alive:
        values[x] = signs[int(merged.labels[x])] * math.sqrt(2.0 * occ.values[x])

    return CoupledSample(soup, occ, base, tuple(sorted(extra)), merged, signs, FieldSample(values))


def collect_coupled_fields(
    net: Network, gop: GreenOperator, replicas: int, seed: int
) -> tuple[np.ndarray, int]:
    """Replicate the coupling; return fields on alive vertices and the number
    of replicas whose field sign fails to be constant on some loop cluster.

    The sign check recomputes constancy from the realized field and clusters,
    so it would catch a miswired construction rather than restating it.
    """
    sampler = LoopSoupSampler(net, gop, COUPLING_ALPHA)
    alive = net.alive
    fields = np.empty((replicas, alive.size))
    violations = 0
    for r in range(replicas):
        rng = derive_stream(seed, r)
        coupled = couple(net, sampler.sample(rng), rng)
        fields[r] = coupled.field.values[alive]
        for members in coupled.base_clusters.members.values():
            if len(members) > 1:
                s = np.sign(coupled.field.values[list(members)])
                if not np.all(s == s[0]):
                    violations += 1
                    break
    return fields, violations


def field_law_records(
    net: Network,
    gop: GreenOperator,
    fields: np.ndarray,
    violations: int,
    thresholds: Thresholds | None = None,
) -> list[TestRecord]:
    """Statistical records for a matrix of coupled fields.

    Per-vertex marginals are tested by Kolmogorov-Smirnov against the normal
    with variance G(x, x); covariances and sign correlations by z-scores
    against G(x, y) and ``(2/pi) arcsin(g(x, y))``; sign constancy on loop
    clusters is exact and must have zero violations.
    """
    th = thresholds or Thresholds()
    alive = net.alive
    records = [
        TestRecord(
            test_id="sign-constant-on-loop-clusters",
            formula="sign(phi) constant on each loop cluster",
            passed=violations == 0,
            exact=0.0,
            estimate=float(violations),
        )
    ]
    for i, x in enumerate(alive):
        sigma = math.sqrt(gop.entry(x, x))
        p = ks_pvalue(fields[:, i], lambda t, s=sigma: normal_cdf(t, s))
        records.append(
            TestRecord(
                test_id=f"marginal-normal-v{x}",
                formula="phi_x ~ Normal(0, G(x,x))",
                passed=p > th.ks_pvalue,
                exact=sigma**2,
                estimate=float(fields[:, i].var(ddof=1)),
                p_value=p,
            )
        )
    for i in range(alive.size):
        for j in range(i, alive.size):
            x, y = int(alive[i]), int(alive[j])
            target = gop.entry(x, y)
            est, sem = mc_mean(fields[:, i] * fields[:, j])
            z = z_score(est, target, sem)
            records.append(
                TestRecord(
                    test_id=f"covariance-v{x}-v{y}",
                    formula="E[phi_x phi_y] = G(x,y)",
                    passed=abs(z) < th.z_limit,
                    exact=target,
                    estimate=est,
                    stderr=sem,
                    z=z,
                )
            )
            if j > i:
                target_s = (2.0 / math.pi) * math.asin(normalized_green(gop, x, y))
                est_s, sem_s = mc_mean(np.sign(fields[:, i]) * np.sign(fields[:, j]))
                z_s = z_score(est_s, target_s, sem_s)
                records.append(
                    TestRecord(
                        test_id=f"sign-correlation-v{x}-v{y}",
                        formula="E[sign(phi_x) sign(phi_y)] = (2/pi) arcsin(g(x,y))",
                        passed=abs(z_s) < th.z_limit,
                        exact=target_s,
                        estimate=est_s,
                        stderr=sem_s,
                        z=z_s,
                    )
                )
    return records


def verify_gff_law(
    net: Network,
    gop: GreenOperator,
    replicas: int,
    seed: int,
    thresholds: Thresholds | None = None,
) -> list[TestRecord]:
    """Replicate the coupling and check the field law end to end."""
    if replicas < 1000:
        raise ValueError("verify_gff_law needs at least 1000 replicas")
    fields, violations = collect_coupled_fields(net, gop, replicas, seed)
    return field_law_records(net, gop, fields, violations, thresholds)
