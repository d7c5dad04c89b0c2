"""Token-group smoothing: cluster rows, subtract centroids, keep residuals.

Centroids are rounded to bfloat16 *before* subtraction so the stored
metadata reproduces the exact residual the encoder quantized.

Residual arithmetic runs in float64.  Inputs are float32 planes and
centroids are bf16-exact, so sums and differences of any stage chain
are exact in float64: :func:`add_back` inverts :func:`sa_smoothing`
bit-for-bit, and stacked stages reconstruct with no accumulation error
beyond the final payload quantization.
"""

from __future__ import annotations

import numpy as np

from .clustering import kmeans
from .errors import DimensionMismatch
from .lowprec import round_to_bf16
from .types import StageMeta


def sa_smoothing(
    x: np.ndarray,
    k: int,
    seed: int,
    warm_init: np.ndarray | None = None,
    max_iters: int = 10,
    tol: float = 1e-4,
) -> tuple[np.ndarray, StageMeta]:
    """Cluster the N rows of ``x`` into ``k`` groups and subtract each
    row's (bf16-rounded) centroid.

    Returns the float64 residual matrix and the stage metadata needed to
    invert the subtraction.
    """
    x = np.asarray(x, dtype=np.float64)
    result = kmeans(x, k, max_iters=max_iters, tol=tol, seed=seed, init=warm_init)
    centroids = round_to_bf16(result.centroids.astype(np.float32))
    residual = x - centroids[result.assignments].astype(np.float64)
    return residual, StageMeta(centroids=centroids, assignments=result.assignments)


def add_back(residual: np.ndarray, meta: StageMeta) -> np.ndarray:
    """Row i of the output is ``residual[i] + centroids[assignments[i]]``
    (float64; the exact inverse of :func:`sa_smoothing`'s subtraction)."""
    residual = np.asarray(residual, dtype=np.float64)
    if residual.ndim != 2:
        raise DimensionMismatch("residual must be an N x d matrix")
    if meta.assignments.shape[0] != residual.shape[0]:
        raise DimensionMismatch("assignment count != residual rows")
    if meta.centroids.shape[1] != residual.shape[1]:
        raise DimensionMismatch("centroid width != residual width")
    return residual + meta.centroids[meta.assignments].astype(np.float64)
