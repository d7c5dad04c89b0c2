"""Deterministic Lloyd k-means over token rows.

Randomness comes from a counter-based Philox generator seeded with a
64-bit value; selections are made by inverse-CDF sampling on
``Generator.random()`` so runs are bit-reproducible for a given
(rows, k, seed, init).

Distances are squared Euclidean with ties broken toward the lowest
centroid index.  Empty clusters are repaired by seizing the row
currently farthest from its assigned centroid.  Internal arithmetic is
float64; centroids are returned as float64 and rounded by callers that
need a storage precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray  # (k, d) float64
    assignments: np.ndarray  # (n,) uint8
    objective: float  # sum of squared distances to assigned centroids
    iterations_used: int


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _pick(rng: np.random.Generator, weights: np.ndarray) -> int:
    """Inverse-CDF draw; uniform fallback when all weights vanish."""
    total = float(weights.sum())
    n = weights.shape[0]
    r = rng.random()
    if total <= 0.0:
        return min(int(r * n), n - 1)
    cum = np.cumsum(weights)
    return int(np.searchsorted(cum, r * total, side="right").clip(0, n - 1))


def kmeans_pp_init(rows: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-means++ seeding: first uniform, then proportional to squared
    distance to the nearest already-chosen centroid."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyInput("need at least one row")
    n = rows.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = _rng(seed)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = min(int(rng.random() * n), n - 1)
    d2 = ((rows - rows[chosen[0]]) ** 2).sum(axis=1)
    for i in range(1, k):
        chosen[i] = _pick(rng, d2)
        d2 = np.minimum(d2, ((rows - rows[chosen[i]]) ** 2).sum(axis=1))
    return rows[chosen].copy()


def _assign(rows: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per row (squared Euclidean, lowest-index ties)."""
    # |x - c|^2 = |x|^2 - 2 x.c + |c|^2; |x|^2 is constant per row.
    cross = rows @ centroids.T
    c2 = (centroids ** 2).sum(axis=1)
    return np.argmin(c2[None, :] - 2.0 * cross, axis=1)


def lloyd_step(
    rows: np.ndarray, centroids: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """One assign + update pass.

    Returns (new centroids, assignments, objective) where the objective
    is the SSE of rows against the *new* centroids under the returned
    assignments (post empty-cluster repair).
    """
    rows = np.asarray(rows, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if rows.shape[1] != centroids.shape[1]:
        raise DimensionMismatch("rows and centroids disagree on d")
    k = centroids.shape[0]

    assign = _assign(rows, centroids)
    counts = np.bincount(assign, minlength=k)
    new_centroids = np.zeros_like(centroids)
    np.add.at(new_centroids, assign, rows)
    nonzero = counts > 0
    new_centroids[nonzero] /= counts[nonzero, None]
    new_centroids[~nonzero] = centroids[~nonzero]

    empties = np.flatnonzero(~nonzero)
    if empties.size:
        dist = ((rows - new_centroids[assign]) ** 2).sum(axis=1)
        for c in empties:
            r = int(np.argmax(dist))
            new_centroids[c] = rows[r]
            assign[r] = c
            dist[r] = -1.0

    objective = float(((rows - new_centroids[assign]) ** 2).sum())
    return new_centroids, assign, objective


def kmeans(
    rows: np.ndarray,
    k: int,
    max_iters: int = 10,
    tol: float = 1e-4,
    seed: int = 0,
    init: np.ndarray | None = None,
) -> KMeansResult:
    """Lloyd iterations until the relative objective improvement falls
    below ``tol`` or ``max_iters`` is reached.

    ``init`` replaces k-means++ seeding (warm start).  A final
    assignment pass synchronizes assignments and objective with the
    returned centroids, so every row ends on a nearest centroid.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyInput("need at least one row")
    if not 1 <= k <= 256:
        raise ValueError("k must be in [1, 256] (one-byte assignments)")
    if init is not None:
        centroids = np.asarray(init, dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape != (k, rows.shape[1]):
            raise DimensionMismatch(
                f"init must be ({k}, {rows.shape[1]}), got {centroids.shape}"
            )
        centroids = centroids.copy()
    else:
        centroids = kmeans_pp_init(rows, k, seed)

    # Objective of the starting centroids, so a warm start that is
    # already converged stops after a single confirming step.
    assign = _assign(rows, centroids)
    prev = float(((rows - centroids[assign]) ** 2).sum())
    iterations = 0
    for _ in range(max_iters):
        centroids, _, objective = lloyd_step(rows, centroids)
        iterations += 1
        denom = max(prev, np.finfo(np.float64).tiny)
        if (prev - objective) / denom < tol:
            break
        prev = objective

    assign = _assign(rows, centroids)
    objective = float(((rows - centroids[assign]) ** 2).sum())
    return KMeansResult(
        centroids=centroids,
        assignments=assign.astype(np.uint8),
        objective=objective,
        iterations_used=iterations,
    )


def warm_start_from_prev(prev: KMeansResult) -> np.ndarray:
    """Centroids to seed the next chunk's k-means with."""
    c = np.asarray(prev.centroids, dtype=np.float64)
    if c.ndim != 2:
        raise DimensionMismatch("previous centroids must be a k x d matrix")
    return c.copy()
