"""Progressive residual compression and its stage-replay decoders.

Compression applies ``stages`` rounds of smoothing, each one clustering
the previous round's residual, then integer-quantizes the final
residual.  Only the final payload, the per-group scales, and each
stage's (centroids, assignments) are kept; intermediate residuals are
discarded.

Decompression dequantizes the payload and adds the stage centroids back
in reverse order.  The residual chain and the add-back accumulation run
in float64, where they are exact for float32 inputs and bf16 centroids,
so reconstruction error comes only from the payload quantization.  Two
decoders are provided: a literal stage-by-stage replay and a fused
single-traversal variant that accumulates into one buffer.  Both
perform identical float additions in identical order, so their outputs
are bit-identical.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .quant import dequantize_plane, quantize_matrix
from .smoothing import add_back, sa_smoothing
from .types import CompressedChunk, KVPlane, QuantConfig, StageMeta, validate_plane


def stage_seed(seed: int, chunk_index: int, stage: int) -> int:
    """Deterministic per-stage seed: blake2b over (seed, chunk, stage)."""
    raw = struct.pack("<QQQ", seed, chunk_index, stage)
    return struct.unpack("<Q", hashlib.blake2b(raw, digest_size=8).digest())[0]


def _smoothing_chain(
    plane: KVPlane,
    config: QuantConfig,
    warm_init: list[np.ndarray] | None,
) -> tuple[np.ndarray, list[StageMeta]]:
    residual = plane.data.astype(np.float64)
    metas: list[StageMeta] = []
    for t in range(1, config.stages + 1):
        residual, meta = sa_smoothing(
            residual,
            config.centroids,
            seed=stage_seed(config.seed, plane.spec.chunk_index, t),
            warm_init=None if warm_init is None else warm_init[t - 1],
            max_iters=config.kmeans_max_iters,
            tol=config.kmeans_tol,
        )
        metas.append(meta)
    return residual, metas


def prq_compress(
    plane: KVPlane,
    config: QuantConfig,
    warm_init: list[np.ndarray] | None = None,
) -> CompressedChunk:
    """Compress one plane into a chunk.

    ``warm_init`` optionally supplies one centroid matrix per stage
    (normally the previous chunk's stage centroids) to seed each stage's
    clustering; stored metadata is always this chunk's own.
    """
    validate_plane(plane, config)
    if warm_init is not None and len(warm_init) != config.stages:
        raise ValueError("warm_init must provide one centroid matrix per stage")
    residual, metas = _smoothing_chain(plane, config, warm_init)
    payload, scales = quantize_matrix(residual, config)
    return CompressedChunk(
        spec=plane.spec,
        config=config,
        payload=payload,
        scales=scales,
        stages=tuple(metas),
    )


def final_residual(plane: KVPlane, config: QuantConfig) -> np.ndarray:
    """Replay the smoothing chain and return the float64 residual that
    compression quantizes (stage seeds are deterministic, so this
    reproduces the encoder's internal state exactly)."""
    validate_plane(plane, config)
    residual, _ = _smoothing_chain(plane, config, None)
    return residual


def prq_decompress(chunk: CompressedChunk) -> KVPlane:
    """Stage-replay decoder: dequantize, then add stages back from last
    to first, materializing each intermediate."""
    n, d = chunk.spec.n_tokens, chunk.spec.head_dim
    out = dequantize_plane(
        chunk.payload, chunk.scales, n, d, chunk.config.bits, chunk.config.group_size
    ).astype(np.float64)
    for meta in reversed(chunk.stages):
        out = add_back(out, meta)
    return KVPlane(spec=chunk.spec, data=out.astype(np.float32))


@dataclass
class DecodeCounters:
    """Instrumentation for the fused decoder (per-token access counts)."""

    payload_reads: int = 0
    centroid_lookups_per_token: int = 0
    tokens: int = 0


def prq_decompress_onepass(
    chunk: CompressedChunk, counters: DecodeCounters | None = None
) -> KVPlane:
    """Fused decoder: one payload read, then per-token accumulation of
    every stage's centroid into a single output buffer.

    Performs the identical float additions in the identical order as
    :func:`prq_decompress`, so the result is bit-identical.
    """
    n, d = chunk.spec.n_tokens, chunk.spec.head_dim
    out = dequantize_plane(
        chunk.payload, chunk.scales, n, d, chunk.config.bits, chunk.config.group_size
    ).astype(np.float64)
    for meta in reversed(chunk.stages):
        out += meta.centroids[meta.assignments].astype(np.float64)
    if counters is not None:
        counters.payload_reads = 1
        counters.centroid_lookups_per_token = len(chunk.stages)
        counters.tokens = n
    return KVPlane(spec=chunk.spec, data=out.astype(np.float32))


def stage_mse_curve(
    plane: KVPlane, config: QuantConfig, max_stages: int
) -> list[float]:
    """MSE of compress->decompress against the original for stage counts
    0..max_stages.

    Stage seeds depend only on (seed, chunk, stage), so the smoothing
    chain for S stages is a prefix of the chain for S+1; the curve is
    computed by extending one chain and quantizing each prefix, which is
    bit-identical to running each stage count independently.
    """
    validate_plane(plane, config)
    original = plane.data.astype(np.float64)
    curve: list[float] = []
    residual = plane.data.astype(np.float64)
    metas: list[StageMeta] = []
    for s in range(0, max_stages + 1):
        if s > 0:
            residual, meta = sa_smoothing(
                residual,
                config.centroids,
                seed=stage_seed(config.seed, plane.spec.chunk_index, s),
                max_iters=config.kmeans_max_iters,
                tol=config.kmeans_tol,
            )
            metas.append(meta)
        cfg_s = config.with_stages(s)
        payload, scales = quantize_matrix(residual, cfg_s)
        chunk = CompressedChunk(
            spec=plane.spec,
            config=cfg_s,
            payload=payload,
            scales=scales,
            stages=tuple(metas),
        )
        recon = prq_decompress(chunk).data.astype(np.float64)
        curve.append(float(np.mean((original - recon) ** 2)))
    return curve
