"""Error metrics and closed-form memory accounting.

The compression ratio denominator counts only the 16-bit payload of the
uncompressed cache (16 * N * d bits per plane); container framing is
excluded on both sides.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeMismatch
from .types import ChunkSpec, MemoryBreakdown, QuantConfig

PSNR_INF = math.inf  # sentinel returned when MSE is exactly zero


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared elementwise difference, accumulated in float64."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape {a.shape} != {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr(reference: np.ndarray, test: np.ndarray, peak: float = 1.0) -> float:
    """10 * log10(peak^2 / MSE) in dB; ``PSNR_INF`` when MSE is zero."""
    if peak <= 0:
        raise ValueError("peak must be > 0")
    err = mse(reference, test)
    if err == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / err)


def memory_breakdown(config: QuantConfig, spec: ChunkSpec) -> MemoryBreakdown:
    """Exact bit accounting for one compressed chunk.

    payload: b bits per element; scales: one byte per group; per stage:
    one byte per token (assignments) plus 16 bits per centroid element.
    """
    n, d = spec.n_tokens, spec.head_dim
    if d % config.group_size != 0:
        raise ValueError("group_size must divide head_dim")
    return MemoryBreakdown(
        payload_bits=n * d * config.bits,
        assignment_bits=config.stages * n * 8,
        centroid_bits=config.stages * config.centroids * d * 16,
        scale_bits=(n * d // config.group_size) * 8,
        n_tokens=n,
        head_dim=d,
    )


def breakdown_fractions(b: MemoryBreakdown) -> dict[str, float]:
    """Each component's share of the total; the four values sum to 1."""
    if b.total_bits <= 0:
        raise ValueError("total_bits must be > 0")
    t = b.total_bits
    return {
        "payload": b.payload_bits / t,
        "assignments": b.assignment_bits / t,
        "centroids": b.centroid_bits / t,
        "scales": b.scale_bits / t,
    }


def breakdown_report(
    method: str, config: QuantConfig, spec: ChunkSpec
) -> dict[str, object]:
    """JSON-ready record of the accounting for one configuration."""
    b = memory_breakdown(config, spec)
    return {
        "method": method,
        "bits": config.bits,
        "group_size": config.group_size,
        "stages": config.stages,
        "centroids": config.centroids,
        "n_tokens": spec.n_tokens,
        "head_dim": spec.head_dim,
        "payload_bits": b.payload_bits,
        "assignment_bits": b.assignment_bits,
        "centroid_bits": b.centroid_bits,
        "scale_bits": b.scale_bits,
        "ratio": b.ratio_vs_bf16,
    }
