"""Union-find and deterministic cluster partitions.

Cluster labels are always the smallest vertex id in the component, so a
partition built from the same merges is identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["UnionFind", "ClusterPartition", "build_partition"]


class UnionFind:
    """Array-based union-find with path compression."""

    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the smaller id as root so labels are canonical
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb

    def labels(self) -> np.ndarray:
        return np.array([self.find(x) for x in range(len(self.parent))])


@dataclass(frozen=True, eq=False)
class ClusterPartition:
    """Partition of vertices with per-cluster vertex and edge sets.

    ``labels[x]`` is the smallest vertex id in the cluster of ``x``.
    ``edge_sets`` lists, per cluster label, the edge ids attached to the
    cluster (traversed by loops, or open, depending on the builder); clusters
    without edges are singletons or come from vertex-only merges.
    """

    labels: np.ndarray
    members: dict[int, tuple[int, ...]]
    edge_sets: dict[int, tuple[int, ...]]

    @property
    def cluster_count(self) -> int:
        return len(self.members)

    def same_cluster(self, x: int, y: int) -> bool:
        return bool(self.labels[x] == self.labels[y])


def build_partition(
    vertex_count: int,
    merges,
    edge_records=None,
) -> ClusterPartition:
    """Build a partition from vertex merges and optional edge attachments.

    ``merges`` is an iterable of ``(x, y)`` vertex pairs to union.
    ``edge_records`` is an iterable of ``(x, edge_id)`` pairs; each edge id is
    attached to the cluster containing ``x`` after all merges.
    """
    uf = UnionFind(vertex_count)
    for x, y in merges:
        uf.union(x, y)
    labels = uf.labels()

    members: dict[int, list[int]] = {}
    for x in range(vertex_count):
        members.setdefault(int(labels[x]), []).append(x)

    edge_sets: dict[int, set[int]] = {label: set() for label in members}
    if edge_records is not None:
        for x, eid in edge_records:
            edge_sets[int(labels[x])].add(int(eid))

    return ClusterPartition(
        labels,
        {k: tuple(v) for k, v in sorted(members.items())},
        {k: tuple(sorted(v)) for k, v in sorted(edge_sets.items())},
    )
