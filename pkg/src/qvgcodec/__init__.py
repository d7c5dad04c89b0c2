"""Streaming low-bit KV-cache codec.

Compression stacks k-means token smoothing stages on top of symmetric
per-group integer quantization with FP8 E4M3 scales; decompression
replays the stages in reverse.  See README.md for format documentation
and CLI usage.
"""

from .types import (
    ChunkSpec,
    CompressedChunk,
    KVPlane,
    MemoryBreakdown,
    QuantConfig,
    StageMeta,
    validate_plane,
)

__all__ = [
    "ChunkSpec",
    "CompressedChunk",
    "KVPlane",
    "MemoryBreakdown",
    "QuantConfig",
    "StageMeta",
    "validate_plane",
]

__version__ = "0.1.0"
