"""Seeded synthetic KV tensors and raw tensor file ingestion.

The generator produces streams of planes with the structure the codec
targets: tokens fall into tight clusters (small within-cluster noise,
large between-cluster spread), a subset of channels carries outsized
magnitudes that differ per cluster, and cluster means drift slowly from
chunk to chunk.

Raw tensor files ("KVT0") hold a stack of equally-shaped planes:

    magic    4s   b"KVT0"
    dtype    u8   0 = float32, 1 = bfloat16 (high half of float32)
    n_planes u32  \
    n_tokens u32   } little-endian
    head_dim u32  /
    data     row-major planes, concatenated
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, BadParams, Truncated, UnknownDtype
from .lowprec import bf16_pack, bf16_unpack, round_to_bf16
from .types import ChunkSpec, KVPlane

KVT_MAGIC = b"KVT0"
DTYPE_F32 = 0
DTYPE_BF16 = 1


@dataclass(frozen=True)
class ChunkTruth:
    """Generator-side ground truth for one chunk (testing oracle)."""

    assignments: np.ndarray  # (n_tokens,) int64 true cluster of each row
    means: np.ndarray  # (n_clusters, d) float64 drifted means, pre-outlier
    within_sse: float  # SSE of rows against their cluster's empirical mean


def gen_clustered_stream_with_truth(
    n_chunks: int,
    n_tokens: int,
    d: int,
    n_clusters: int,
    sigma_within: float,
    sigma_between: float,
    drift: float = 0.0,
    outlier_channels: tuple[int, ...] = (),
    outlier_scale: float = 1.0,
    seed: int = 0,
) -> tuple[list[KVPlane], list[ChunkTruth]]:
    """Clustered stream plus the ground truth used to build it."""
    if n_chunks < 1 or n_tokens < 1 or d < 1 or n_clusters < 1:
        raise BadParams("counts must be >= 1")
    if n_clusters > n_tokens:
        raise BadParams("n_clusters cannot exceed n_tokens")
    if sigma_within < 0 or sigma_between < 0 or drift < 0 or outlier_scale <= 0:
        raise BadParams("spreads must be >= 0 and outlier_scale > 0")
    channels = tuple(sorted(set(int(c) for c in outlier_channels)))
    if channels and (channels[0] < 0 or channels[-1] >= d):
        raise BadParams("outlier_channels must lie in [0, d)")

    root = np.random.SeedSequence(seed)
    mean_rng = np.random.Generator(np.random.Philox(root.spawn(1)[0]))
    means = mean_rng.normal(0.0, sigma_between, size=(n_clusters, d))

    # Each cluster amplifies its own subset of the designated channels.
    cluster_channels: list[np.ndarray] = []
    for _ in range(n_clusters):
        if channels:
            mask = mean_rng.random(len(channels)) < 0.5
            if not mask.any():
                mask[int(mean_rng.random() * len(channels)) % len(channels)] = True
            cluster_channels.append(np.asarray(channels)[mask])
        else:
            cluster_channels.append(np.empty(0, dtype=np.int64))

    planes: list[KVPlane] = []
    truths: list[ChunkTruth] = []
    for chunk in range(n_chunks):
        rng = np.random.Generator(np.random.Philox(root.spawn(1)[0]))
        if chunk > 0 and drift > 0:
            step = rng.normal(0.0, 1.0, size=(n_clusters, d))
            step /= np.linalg.norm(step, axis=1, keepdims=True)
            means = means + drift * step
        elif chunk > 0:
            rng.normal(0.0, 1.0, size=(n_clusters, d))  # keep stream alignment

        # Every cluster owns at least one token; the rest land uniformly.
        assign = np.concatenate(
            [
                np.arange(n_clusters),
                (rng.random(n_tokens - n_clusters) * n_clusters).astype(np.int64),
            ]
        )
        assign = assign[rng.permutation(n_tokens)]

        rows = means[assign] + rng.normal(0.0, sigma_within, size=(n_tokens, d))
        if channels:
            for c in range(n_clusters):
                members = assign == c
                if members.any() and cluster_channels[c].size:
                    rows[np.ix_(members, cluster_channels[c])] *= outlier_scale

        within_sse = 0.0
        for c in range(n_clusters):
            members = rows[assign == c]
            if len(members):
                within_sse += float(((members - members.mean(axis=0)) ** 2).sum())

        spec = ChunkSpec(n_tokens=n_tokens, head_dim=d, chunk_index=chunk)
        planes.append(KVPlane(spec=spec, data=rows.astype(np.float32)))
        truths.append(
            ChunkTruth(assignments=assign, means=means.copy(), within_sse=within_sse)
        )
    return planes, truths


def gen_clustered_stream(
    n_chunks: int,
    n_tokens: int,
    d: int,
    n_clusters: int,
    sigma_within: float,
    sigma_between: float,
    drift: float = 0.0,
    outlier_channels: tuple[int, ...] = (),
    outlier_scale: float = 1.0,
    seed: int = 0,
) -> list[KVPlane]:
    planes, _ = gen_clustered_stream_with_truth(
        n_chunks,
        n_tokens,
        d,
        n_clusters,
        sigma_within,
        sigma_between,
        drift,
        outlier_channels,
        outlier_scale,
        seed,
    )
    return planes


# Emulates value-cache statistics: 256 tight clusters spread 20x wider
# than the within-cluster noise, 8 amplified channels pushing peak
# magnitudes to the 1e3 range.
CLUSTERED_PRESET = dict(
    n_tokens=4096,
    d=128,
    n_clusters=256,
    sigma_within=0.125,
    sigma_between=2.5,
    outlier_channels=tuple(range(0, 128, 16)),
    outlier_scale=100.0,
)


def clustered_preset_stream(
    n_chunks: int = 1, seed: int = 0, drift: float = 0.0, **overrides
) -> list[KVPlane]:
    params = dict(CLUSTERED_PRESET)
    params.update(overrides)
    return gen_clustered_stream(n_chunks=n_chunks, drift=drift, seed=seed, **params)


# ---------------------------------------------------------------------------
# KVT0 raw tensor files
# ---------------------------------------------------------------------------


def save_raw_tensor(path, planes: list[KVPlane], dtype: int = DTYPE_F32) -> None:
    """Write equally-shaped planes to a KVT0 file."""
    if not planes:
        raise BadParams("need at least one plane")
    n, d = planes[0].spec.n_tokens, planes[0].spec.head_dim
    for p in planes:
        if (p.spec.n_tokens, p.spec.head_dim) != (n, d):
            raise BadParams("all planes in a file must share a shape")
    if dtype not in (DTYPE_F32, DTYPE_BF16):
        raise UnknownDtype(f"dtype code {dtype}")
    with open(path, "wb") as f:
        f.write(KVT_MAGIC)
        f.write(struct.pack("<BIII", dtype, len(planes), n, d))
        for p in planes:
            if dtype == DTYPE_F32:
                f.write(p.data.astype("<f4").tobytes())
            else:
                f.write(bf16_pack(round_to_bf16(p.data)).astype("<u2").tobytes())


def load_raw_tensor(path) -> list[KVPlane]:
    """Read a KVT0 file, widening values to float32 working precision."""
    with open(path, "rb") as f:
        raw = f.read()
    return _parse_raw_tensor(raw)


def _parse_raw_tensor(raw: bytes) -> list[KVPlane]:
    if len(raw) < 4 or raw[:4] != KVT_MAGIC:
        raise BadMagic("not a KVT0 file")
    if len(raw) < 17:
        raise Truncated("KVT0 header incomplete")
    dtype, n_planes, n, d = struct.unpack_from("<BIII", raw, 4)
    if dtype not in (DTYPE_F32, DTYPE_BF16):
        raise UnknownDtype(f"dtype code {dtype}")
    itemsize = 4 if dtype == DTYPE_F32 else 2
    need = 17 + n_planes * n * d * itemsize
    if len(raw) < need:
        raise Truncated(f"KVT0 payload: have {len(raw)} bytes, need {need}")
    planes = []
    offset = 17
    for i in range(n_planes):
        count = n * d
        if dtype == DTYPE_F32:
            data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        else:
            u = np.frombuffer(raw, dtype="<u2", count=count, offset=offset)
            data = bf16_unpack(u)
        offset += count * itemsize
        spec = ChunkSpec(n_tokens=n, head_dim=d, chunk_index=i)
        planes.append(KVPlane(spec=spec, data=data.reshape(n, d)))
    return planes
