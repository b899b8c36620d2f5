"""Entity extraction from merged activation maps.

The last w maps are merged into weighted candidate points, clustered
agglomeratively (centroid linkage, Euclidean distances), and the dendrogram
is cut top-down: a merge splits when its inconsistency coefficient exceeds
the threshold r. Each final cluster is one entity located at the weighted
center of mass of its members.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .types import EnvironmentMap, FrameEstimate, GridLocation

__all__ = [
    "CandidateSet",
    "Cluster",
    "merge_window",
    "hierarchical_cluster",
    "estimate_entities",
]


@dataclass(frozen=True)
class CandidateSet:
    """Weighted candidate points: (x, y, number of window maps active in)."""

    points: tuple[tuple[float, float, int], ...]

    def __post_init__(self) -> None:
        if any(w < 1 for _, _, w in self.points):
            raise ValueError("candidate weights must be >= 1")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Cluster:
    """A nonempty group of candidate points."""

    members: tuple[tuple[float, float, int], ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("empty cluster")

    @property
    def centroid(self) -> tuple[float, float]:
        """Weighted center of mass of the member points."""
        total = sum(w for _, _, w in self.members)
        x = sum(x * w for x, _, w in self.members) / total
        y = sum(y * w for _, y, w in self.members) / total
        return (x, y)


def merge_window(
    maps: Sequence[EnvironmentMap], grid: Sequence[GridLocation]
) -> CandidateSet:
    """Merge up to w maps: weight = number of maps a location is active in."""
    n = len(grid)
    counts = [0] * n
    for env_map in maps:
        if len(env_map) != n:
            raise ValueError(
                f"map length {len(env_map)} does not match grid size {n}"
            )
        for i, active in enumerate(env_map.active):
            if active:
                counts[i] += 1
    ordered = sorted(grid, key=lambda g: g.index)
    points = tuple(
        (loc.x, loc.y, counts[loc.index]) for loc in ordered if counts[loc.index] > 0
    )
    return CandidateSet(points)


class _Dendrogram:
    """Agglomerative centroid-linkage tree over candidate points.

    Linkage is purely geometric (weights ignored): clusters merge by smallest
    Euclidean distance between their unweighted member means, ties broken by
    the smallest (i, j) cluster-id pair in creation order. O(c^3) overall,
    which is fine for the small candidate sets the window merge produces.
    """

    def __init__(self, points: Sequence[tuple[float, float, int]]):
        c = len(points)
        self.points = list(points)
        self.children: list[tuple[int, int] | None] = [None] * c
        self.heights: list[float] = [0.0] * c
        self.leaves: list[list[int]] = [[i] for i in range(c)]

        centers = {i: (points[i][0], points[i][1]) for i in range(c)}
        # alive stays ascending (new ids only grow), so scanned pairs are
        # already in canonical (i, j) order and the key tie-breaks correctly
        alive = sorted(centers)
        while len(alive) > 1:
            best = None
            for a_pos, i in enumerate(alive):
                xi, yi = centers[i]
                for j in alive[a_pos + 1 :]:
                    xj, yj = centers[j]
                    d = math.hypot(xi - xj, yi - yj)
                    key = (d, i, j)
                    if best is None or key < best:
                        best = key
            d, i, j = best
            node = len(self.heights)
            self.children.append((i, j))
            self.heights.append(d)
            self.leaves.append(self.leaves[i] + self.leaves[j])
            members = self.leaves[node]
            centers[node] = (
                sum(self.points[m][0] for m in members) / len(members),
                sum(self.points[m][1] for m in members) / len(members),
            )
            alive.remove(i)
            alive.remove(j)
            alive.append(node)
        self.root = alive[0]

    def is_leaf(self, node: int) -> bool:
        return self.children[node] is None

    def inconsistency(self, node: int) -> float:
        """Depth-2 coefficient: (height - mean) / sample std of the link
        heights of this node and its internal descendants within two edges;
        zero when the spread is zero."""
        heights = [self.heights[node]]
        for child in self.children[node]:
            if not self.is_leaf(child):
                heights.append(self.heights[child])
                for grandchild in self.children[child]:
                    if not self.is_leaf(grandchild):
                        heights.append(self.heights[grandchild])
        if len(heights) < 2:
            return 0.0
        mean = sum(heights) / len(heights)
        var = sum((h - mean) ** 2 for h in heights) / (len(heights) - 1)
        if var <= 0.0:
            return 0.0
        return (self.heights[node] - mean) / math.sqrt(var)


def hierarchical_cluster(candidates: CandidateSet, r: float) -> list[Cluster]:
    """Cluster candidates, splitting merges whose inconsistency exceeds r.

    Starting at the dendrogram root, an inconsistent merge is split and the
    rule is applied recursively to both halves; consistent subtrees become
    final clusters. An empty candidate set yields an empty list.
    """
    if r <= 0:
        raise ValueError(f"inconsistency threshold must be > 0, got {r}")
    if len(candidates) == 0:
        return []
    if len(candidates) == 1:
        return [Cluster(candidates.points)]

    tree = _Dendrogram(candidates.points)
    clusters: list[Cluster] = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if not tree.is_leaf(node) and tree.inconsistency(node) > r:
            left, right = tree.children[node]
            stack.append(right)
            stack.append(left)
        else:
            members = tuple(
                candidates.points[i] for i in sorted(tree.leaves[node])
            )
            clusters.append(Cluster(members))
    return clusters


def estimate_entities(clusters: Sequence[Cluster], timestamp: float) -> FrameEstimate:
    """Entity count and coordinates: one weighted centroid per cluster."""
    return FrameEstimate(timestamp, tuple(c.centroid for c in clusters))
