"""Temporal clustering of danmu offsets into K bursts, plus aggregation.

In one dimension the k-means optimum is contiguous in sorted order, so the
partition minimizing within-cluster squared deviation is computed exactly by
dynamic programming over segment boundaries. This replaces Lloyd iterations:
no initialization sensitivity, fully deterministic. Ties between
equal-objective partitions resolve to the lexicographically smallest boundary
vector.

Videos with fewer distinct offsets than K are padded with empty clusters
flagged degenerate so every video still yields a length-K document sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .corpus import VideoRecord
from .errors import EmptyInput, InvalidInput


@dataclass
class ClusterPartition:
    video_id: str
    assignments: list[int]        # per danmu, non-decreasing (contiguous clusters)
    centroids: list[float]        # burst points; degenerate slots inherit (see below)
    objective: float              # sum of squared offset-to-centroid distances
    degenerate: list[bool]
    k: int


@dataclass
class DanmuDocument:
    """All danmu texts of one burst cluster, concatenated in offset order."""

    video_id: str
    cluster_index: int
    text: str
    burst_point: float
    degenerate: bool = False

    def tokens(self) -> list[str]:
        return self.text.split()


def _segment_cost(prefix: list[float], prefix_sq: list[float], i: int, j: int) -> float:
    # Cost of offsets[i:j]: sum of squares minus (sum)^2 / n.
    n = j - i
    s = prefix[j] - prefix[i]
    sq = prefix_sq[j] - prefix_sq[i]
    return max(sq - s * s / n, 0.0)


def cluster_offsets(offsets: list[float], k: int, video_id: str = "") -> ClusterPartition:
    """Globally optimal contiguous K-partition of sorted offsets.

    If the number of distinct offsets d is smaller than k, d non-empty
    clusters are produced and k-d degenerate empty clusters are appended;
    their centroid slot inherits the previous cluster's centroid (0 for a
    leading slot).
    """
    offsets = [float(x) for x in offsets]
    if not offsets:
        raise EmptyInput("cluster_offsets: no offsets")
    if k < 1:
        raise InvalidInput(f"cluster_offsets: k must be >= 1, got {k}")
    for a, b in zip(offsets, offsets[1:]):
        if b < a:
            raise InvalidInput("cluster_offsets: offsets must be sorted ascending")
    if not all(math.isfinite(x) for x in offsets):
        raise InvalidInput("cluster_offsets: offsets must be finite")

    n = len(offsets)
    distinct = 1 + sum(1 for a, b in zip(offsets, offsets[1:]) if b > a)
    k_eff = min(k, distinct)

    prefix = [0.0] * (n + 1)
    prefix_sq = [0.0] * (n + 1)
    for i, x in enumerate(offsets):
        prefix[i + 1] = prefix[i] + x
        prefix_sq[i + 1] = prefix_sq[i] + x * x

    # suffix[m][i]: optimal cost of splitting offsets[i:] into m segments.
    # Computed bottom-up so boundaries can be reconstructed greedily from the
    # left, which yields the lexicographically smallest optimal boundary set.
    suffix = [[math.inf] * (n + 1) for _ in range(k_eff + 1)]
    for i in range(n):
        suffix[1][i] = _segment_cost(prefix, prefix_sq, i, n)
    for m in range(2, k_eff + 1):
        # segment [i:j) then m-1 segments over [j:], each segment non-empty
        for i in range(n - m + 1):
            best = math.inf
            for j in range(i + 1, n - m + 2):
                c = _segment_cost(prefix, prefix_sq, i, j) + suffix[m - 1][j]
                if c < best:
                    best = c
            suffix[m][i] = best

    boundaries = []
    pos = 0
    for m in range(k_eff, 1, -1):
        target = suffix[m][pos]
        for j in range(pos + 1, n - m + 2):
            if _segment_cost(prefix, prefix_sq, pos, j) + suffix[m - 1][j] == target:
                boundaries.append(j)
                pos = j
                break
    boundaries.append(n)

    assignments = [0] * n
    centroids: list[float] = []
    degenerate: list[bool] = []
    objective = 0.0
    start = 0
    for idx, end in enumerate(boundaries):
        for t in range(start, end):
            assignments[t] = idx
        centroids.append((prefix[end] - prefix[start]) / (end - start))
        degenerate.append(False)
        objective += _segment_cost(prefix, prefix_sq, start, end)
        start = end
    for _ in range(k - k_eff):
        centroids.append(centroids[-1] if centroids else 0.0)
        degenerate.append(True)

    return ClusterPartition(video_id=video_id, assignments=assignments,
                            centroids=centroids, objective=objective,
                            degenerate=degenerate, k=k)


def aggregate_documents(video: VideoRecord, partition: ClusterPartition) -> list[DanmuDocument]:
    """One document per cluster, texts joined in offset order, K documents total."""
    if partition.video_id != video.video_id:
        raise InvalidInput(
            f"partition belongs to {partition.video_id!r}, not {video.video_id!r}")
    if len(partition.assignments) != len(video.danmus):
        raise InvalidInput("partition size does not match danmu count")
    texts: list[list[str]] = [[] for _ in range(partition.k)]
    for danmu, cluster in zip(video.danmus, partition.assignments):
        texts[cluster].append(danmu.text)
    return [
        DanmuDocument(video_id=video.video_id, cluster_index=j,
                      text=" ".join(texts[j]), burst_point=partition.centroids[j],
                      degenerate=partition.degenerate[j])
        for j in range(partition.k)
    ]


def burst_frame_times(partition: ClusterPartition) -> list[float]:
    """Key-frame timestamps: cluster centroids ascending; degenerate slots
    inherit the previous timestamp (0 for a leading degenerate slot)."""
    times: list[float] = []
    for centroid, degen in zip(partition.centroids, partition.degenerate):
        if degen:
            times.append(times[-1] if times else 0.0)
        else:
            times.append(centroid)
    return times
