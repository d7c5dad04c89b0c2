"""Shared domain types and structural validation.

All types are immutable value objects after construction: ndarray fields
are marked read-only so instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyPlane,
    NonFiniteInput,
)

VALID_BITS = (2, 4, 8)
MAX_CENTROIDS = 256  # assignments are stored as one byte each


def _readonly(a: np.ndarray, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True, order="C")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ChunkSpec:
    """Identity and dimensions of one (layer, head) chunk of tokens."""

    n_tokens: int
    head_dim: int
    layer_index: int = 0
    head_index: int = 0
    chunk_index: int = 0

    def __post_init__(self):
        if self.n_tokens < 1 or self.head_dim < 1:
            raise EmptyPlane(
                f"n_tokens and head_dim must be >= 1, got "
                f"({self.n_tokens}, {self.head_dim})"
            )
        for name in ("layer_index", "head_index", "chunk_index"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True, eq=False)
class KVPlane:
    """One N x d key or value slice, widened to float32 working precision."""

    spec: ChunkSpec
    data: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.data, np.float32)
        object.__setattr__(self, "data", arr)
        if arr.shape != (self.spec.n_tokens, self.spec.head_dim):
            raise DimensionMismatch(
                f"data shape {arr.shape} != spec "
                f"({self.spec.n_tokens}, {self.spec.head_dim})"
            )

    @classmethod
    def from_array(cls, data, **spec_kwargs) -> "KVPlane":
        """Build a plane whose spec dimensions come from the array shape."""
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D array, got ndim={arr.ndim}")
        spec = ChunkSpec(n_tokens=arr.shape[0], head_dim=arr.shape[1], **spec_kwargs)
        return cls(spec=spec, data=arr)


@dataclass(frozen=True)
class QuantConfig:
    """Codec parameters; together with a plane they fully determine the output."""

    bits: int = 2
    group_size: int = 64
    stages: int = 1
    centroids: int = 256
    kmeans_max_iters: int = 10
    kmeans_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.bits not in VALID_BITS:
            raise ValueError(f"bits must be one of {VALID_BITS}, got {self.bits}")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.stages < 0:
            raise ValueError("stages must be >= 0")
        if not 1 <= self.centroids <= MAX_CENTROIDS:
            raise ValueError(f"centroids must be in [1, {MAX_CENTROIDS}]")
        if self.kmeans_max_iters < 1:
            raise ValueError("kmeans_max_iters must be >= 1")
        if self.kmeans_tol < 0:
            raise ValueError("kmeans_tol must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def qmax(self) -> int:
        """Largest emitted integer code: 2^(b-1) - 1 (symmetric range)."""
        return (1 << (self.bits - 1)) - 1

    def with_stages(self, stages: int) -> "QuantConfig":
        return replace(self, stages=stages)


@dataclass(frozen=True, eq=False)
class StageMeta:
    """Centroids (bf16-exact float32) and per-token assignments for one stage."""

    centroids: np.ndarray  # (K, d) float32, bf16-exact
    assignments: np.ndarray  # (N,) uint8

    def __post_init__(self):
        object.__setattr__(self, "centroids", _readonly(self.centroids, np.float32))
        object.__setattr__(self, "assignments", _readonly(self.assignments, np.uint8))
        if self.centroids.ndim != 2:
            raise DimensionMismatch("centroids must be a K x d matrix")
        if self.assignments.ndim != 1:
            raise DimensionMismatch("assignments must be a vector")
        k = self.centroids.shape[0]
        if self.assignments.size and int(self.assignments.max()) >= k:
            raise DimensionMismatch("assignment index out of centroid range")


@dataclass(frozen=True, eq=False)
class CompressedChunk:
    """Packed payload, FP8 scales, and per-stage metadata for one chunk."""

    spec: ChunkSpec
    config: QuantConfig
    payload: bytes
    scales: bytes
    stages: tuple[StageMeta, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        self.validate()

    def validate(self) -> None:
        """Check the structural invariants the format guarantees."""
        n, d = self.spec.n_tokens, self.spec.head_dim
        cfg = self.config
        want_payload = (n * d * cfg.bits + 7) // 8
        if len(self.payload) != want_payload:
            raise DimensionMismatch(
                f"payload is {len(self.payload)} bytes, expected {want_payload}"
            )
        if d % cfg.group_size != 0:
            raise DimensionMismatch(
                f"group_size {cfg.group_size} does not divide head_dim {d}"
            )
        want_scales = n * d // cfg.group_size
        if len(self.scales) != want_scales:
            raise DimensionMismatch(
                f"scales is {len(self.scales)} bytes, expected {want_scales}"
            )
        if len(self.stages) != cfg.stages:
            raise DimensionMismatch(
                f"chunk has {len(self.stages)} stages, config says {cfg.stages}"
            )
        for meta in self.stages:
            if meta.centroids.shape != (cfg.centroids, d):
                raise DimensionMismatch("stage centroid shape mismatch")
            if meta.assignments.shape != (n,):
                raise DimensionMismatch("stage assignment length mismatch")
            if meta.assignments.size and int(meta.assignments.max()) >= cfg.centroids:
                raise DimensionMismatch("stage assignment index out of range")


@dataclass(frozen=True)
class MemoryBreakdown:
    """Bit accounting of one compressed chunk versus its BF16 original."""

    payload_bits: int
    assignment_bits: int
    centroid_bits: int
    scale_bits: int
    total_bits: int = field(init=False)
    ratio_vs_bf16: float = field(init=False)
    n_tokens: int = 0
    head_dim: int = 0

    def __post_init__(self):
        total = (
            self.payload_bits
            + self.assignment_bits
            + self.centroid_bits
            + self.scale_bits
        )
        object.__setattr__(self, "total_bits", total)
        baseline = 16 * self.n_tokens * self.head_dim
        object.__setattr__(self, "ratio_vs_bf16", baseline / total if total else 0.0)


def validate_plane(plane: KVPlane, config: QuantConfig) -> None:
    """Raise unless (plane, config) jointly satisfy every type invariant."""
    n, d = plane.spec.n_tokens, plane.spec.head_dim
    if n < 1 or d < 1 or plane.data.size == 0:
        raise EmptyPlane("plane has no data")
    if d % config.group_size != 0:
        raise DimensionMismatch(
            f"group_size {config.group_size} does not divide head_dim {d}"
        )
    if plane.data.shape != (n, d):
        raise DimensionMismatch("plane data shape disagrees with its spec")
    if not np.all(np.isfinite(plane.data)):
        raise NonFiniteInput("plane contains NaN or Inf")


