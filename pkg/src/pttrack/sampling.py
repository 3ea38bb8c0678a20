"""Point-set subsampling and neighborhood search.

Farthest point sampling, seeded random sampling, K-nearest neighbors and
ball queries over (N, 3) float clouds. Everything is deterministic: distance
ties are always broken by the lower index, and random sampling draws from
the package's own SplitMix64 stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64


@dataclass
class SampleResult:
    """Indices drawn by :func:`random_sample`; flags replacement top-up."""

    indices: np.ndarray
    with_replacement: bool = False


def _as_cloud(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"expected (N, 3) cloud, got shape {points.shape}")
    return points


def farthest_point_sample(points: np.ndarray, k: int, start: int = 0) -> np.ndarray:
    """Greedy max-min subsampling.

    The first pick is ``start``; every later pick maximizes its minimum
    squared distance to the picks so far, ties going to the lowest index.
    """
    points = _as_cloud(points)
    n = len(points)
    if n == 0:
        raise ValueError("cannot sample from an empty cloud")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    if not 0 <= start < n:
        raise ValueError(f"start={start} out of range for {n} points")

    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start
    min_d2 = np.sum((points - points[start]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(min_d2))  # argmax returns the lowest index on ties
        chosen[i] = nxt
        d2 = np.sum((points - points[nxt]) ** 2, axis=1)
        np.minimum(min_d2, d2, out=min_d2)
    return chosen


def random_sample(points: np.ndarray, k: int, rng_seed: int) -> SampleResult:
    """Seeded uniform sampling of ``k`` indices.

    For k <= N this is a partial Fisher-Yates draw without replacement
    (k == N yields a full permutation). For k > N the result starts with a
    full permutation and is topped up with replacement, flagged as such.
    """
    points = _as_cloud(points)
    n = len(points)
    if n == 0:
        raise ValueError("cannot sample from an empty cloud")
    if k < 1:
        raise ValueError("k must be >= 1")

    stream = SplitMix64(rng_seed)
    pool = list(range(n))
    take = min(k, n)
    for i in range(take):
        j = i + stream.next_below(n - i)
        pool[i], pool[j] = pool[j], pool[i]
    indices = pool[:take]
    if k > n:
        indices = indices + [stream.next_below(n) for _ in range(k - n)]
        return SampleResult(np.array(indices, dtype=np.int64), with_replacement=True)
    return SampleResult(np.array(indices, dtype=np.int64), with_replacement=False)


def knn(queries: np.ndarray, points: np.ndarray, k: int) -> np.ndarray:
    """Per-query indices of the k nearest points, sorted by (distance, index).

    Returns an int array of shape (Q, k). A query that coincides with a
    stored point includes that point (self-distance 0).
    """
    queries = _as_cloud(queries)
    points = _as_cloud(points)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    d2 = np.sum((queries[:, None, :] - points[None, :, :]) ** 2, axis=2)
    order = np.argsort(d2, axis=1, kind="stable")  # stable sort = index tie-break
    return order[:, :k].astype(np.int64)


def ball_query(
    queries: np.ndarray,
    points: np.ndarray,
    radius: float,
    max_count: int,
) -> list[np.ndarray]:
    """Per-query indices within ``radius``, capped at ``max_count``.

    Candidates are ordered by (distance, index). A query with no point in
    range falls back to its single global nearest point, so groups are
    never empty.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if max_count < 1:
        raise ValueError("max_count must be >= 1")
    queries = _as_cloud(queries)
    points = _as_cloud(points)
    if len(points) == 0:
        raise ValueError("cannot query an empty cloud")

    d2 = np.sum((queries[:, None, :] - points[None, :, :]) ** 2, axis=2)
    r2 = radius * radius
    order = np.argsort(d2, axis=1, kind="stable")
    groups = []
    for qi in range(len(queries)):
        row = order[qi]
        in_range = row[d2[qi, row] <= r2]
        if len(in_range) == 0:
            groups.append(row[:1].astype(np.int64))
        else:
            groups.append(in_range[:max_count].astype(np.int64))
    return groups


def grouped_indices(
    queries: np.ndarray,
    points: np.ndarray,
    radius: float,
    width: int,
) -> np.ndarray:
    """Fixed-width (N, width) neighbor index matrix.

    Row i holds the :func:`ball_query` group for query i, repeated
    cyclically to fill exactly ``width`` slots, so downstream gathers can
    run on one rectangular array.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if width < 1:
        raise ValueError("width must be >= 1")
    queries = _as_cloud(queries)
    points = _as_cloud(points)
    if len(points) == 0:
        raise ValueError("cannot query an empty cloud")

    d2 = np.sum((queries[:, None, :] - points[None, :, :]) ** 2, axis=2)
    in_range = d2 <= radius * radius
    key = np.where(in_range, d2, np.inf)
    order = np.argsort(key, axis=1, kind="stable")[:, :width].astype(np.int64)
    counts = np.minimum(in_range.sum(axis=1), width)
    empty = counts == 0
    if empty.any():
        order[empty, 0] = np.argmin(d2[empty], axis=1)
        counts[empty] = 1
    cols = np.arange(width)[None, :] % counts[:, None]
    return np.take_along_axis(order, cols, axis=1)
