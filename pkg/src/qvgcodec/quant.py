"""Symmetric per-group integer quantization with FP8 E4M3 scales.

A group of B consecutive channel values shares one scale
``S = max(|group|) / (2^(b-1) - 1)``, stored as one E4M3 byte.  The
stored (FP8-rounded) scale is the one used for quantization, so encoder
and decoder always agree.  Scales are rounded *up* within the E4M3
grid: a stored scale never undershoots the raw scale, which keeps every
element's round-trip error within S/2 as long as the raw scale is at
most the E4M3 maximum of 448 (above that the scale saturates and the
clamp error grows with the input).

Integer codes use round-half-to-even and clamp to the symmetric range
[-(2^(b-1)-1), 2^(b-1)-1]; the most negative two's-complement code is
never emitted.  Zero-max groups store scale 1.0 and all-zero codes, so
zero reconstructs exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput, RangeOverflow, Truncated
from .lowprec import fp8_e4m3_decode_array, fp8_e4m3_encode_array
from .types import KVPlane, QuantConfig, validate_plane

FP8_ONE = 0x38  # E4M3 encoding of 1.0, used for zero-max groups


@dataclass(frozen=True)
class QuantizedGroup:
    """One quantized group: b-bit signed codes plus its E4M3 scale byte."""

    q: np.ndarray  # (B,) int8 codes in the symmetric range
    scale_fp8: int
    bits: int


def _group_scales(absmax: np.ndarray, qmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-group scale bytes and decoded scales from group max magnitudes."""
    s_raw = absmax.astype(np.float64) / qmax
    codes = fp8_e4m3_encode_array(s_raw, rounding="up")
    codes[absmax == 0] = FP8_ONE
    return codes, fp8_e4m3_decode_array(codes)


def _quantize_groups(groups: np.ndarray, bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized core: (n_groups, B) float -> (codes int8, scale bytes)."""
    qmax = (1 << (bits - 1)) - 1
    absmax = np.abs(groups).max(axis=1)
    scale_bytes, scales = _group_scales(absmax, qmax)
    q = np.rint(groups.astype(np.float64) / scales[:, None])
    np.clip(q, -qmax, qmax, out=q)
    return q.astype(np.int8), scale_bytes


def quantize_group(values, bits: int) -> QuantizedGroup:
    """Quantize one group of B finite reals to b-bit codes."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput("group contains NaN or Inf")
    q, scale_bytes = _quantize_groups(values.reshape(1, -1), bits)
    return QuantizedGroup(q=q[0], scale_fp8=int(scale_bytes[0]), bits=bits)


def dequantize_group(g: QuantizedGroup) -> np.ndarray:
    """Reconstruct S * q for one group (float32)."""
    scale = fp8_e4m3_decode_array(np.array([g.scale_fp8], dtype=np.uint8))[0]
    return (np.float32(scale) * g.q.astype(np.float32)).astype(np.float32)


# ---------------------------------------------------------------------------
# Bit packing
# ---------------------------------------------------------------------------


def pack_payload(q, bits: int) -> bytes:
    """Pack signed integers into b-bit two's-complement fields.

    Element i occupies bits [b*i mod 8, b*i mod 8 + b) of byte
    floor(b*i/8); the trailing byte is zero-padded.  b is 2, 4, or 8, so
    fields never straddle a byte boundary.
    """
    q = np.asarray(q, dtype=np.int64).ravel()
    qmax = (1 << (bits - 1)) - 1
    if q.size and (q.min() < -qmax or q.max() > qmax):
        raise RangeOverflow(f"code outside symmetric {bits}-bit range")
    if q.size == 0:
        return b""
    u = (q & ((1 << bits) - 1)).astype(np.uint8)
    per_byte = 8 // bits
    pad = (-q.size) % per_byte
    if pad:
        u = np.concatenate([u, np.zeros(pad, dtype=np.uint8)])
    u = u.reshape(-1, per_byte)
    out = np.zeros(u.shape[0], dtype=np.uint8)
    for j in range(per_byte):
        out |= u[:, j] << (j * bits)
    return out.tobytes()


def unpack_payload(data: bytes, count: int, bits: int) -> np.ndarray:
    """Exact inverse of :func:`pack_payload`, sign-extended to int8."""
    need = (count * bits + 7) // 8
    if len(data) < need:
        raise Truncated(f"payload has {len(data)} bytes, need {need}")
    raw = np.frombuffer(data, dtype=np.uint8, count=need)
    per_byte = 8 // bits
    mask = (1 << bits) - 1
    fields = np.empty((need, per_byte), dtype=np.uint8)
    for j in range(per_byte):
        fields[:, j] = (raw >> (j * bits)) & mask
    u = fields.ravel()[:count].astype(np.int16)
    sign = 1 << (bits - 1)
    return ((u ^ sign) - sign).astype(np.int8)


# ---------------------------------------------------------------------------
# Whole-plane quantization
# ---------------------------------------------------------------------------


def quantize_plane(plane: KVPlane, config: QuantConfig) -> tuple[bytes, bytes]:
    """Quantize every row's channel groups; returns (payload, scale bytes).

    Groups are contiguous runs of ``group_size`` channels within a token
    row; scale bytes follow the same row-major group order.
    """
    validate_plane(plane, config)
    return quantize_matrix(plane.data, config)


def quantize_matrix(x: np.ndarray, config: QuantConfig) -> tuple[bytes, bytes]:
    """Like :func:`quantize_plane` but on a bare matrix (any float dtype);
    used internally to quantize float64 residuals without a cast."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionMismatch("expected an N x d matrix")
    if x.shape[1] % config.group_size != 0:
        raise DimensionMismatch(
            f"group_size {config.group_size} does not divide width {x.shape[1]}"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("matrix contains NaN or Inf")
    groups = x.reshape(-1, config.group_size)
    q, scale_bytes = _quantize_groups(groups, config.bits)
    return pack_payload(q, config.bits), scale_bytes.tobytes()


def dequantize_plane(
    payload: bytes,
    scales: bytes,
    n_tokens: int,
    head_dim: int,
    bits: int,
    group_size: int,
) -> np.ndarray:
    """Reconstruct the float32 N x d matrix from payload and scale bytes."""
    count = n_tokens * head_dim
    q = unpack_payload(payload, count, bits)
    n_groups = count // group_size
    if len(scales) < n_groups:
        raise Truncated(f"scales has {len(scales)} bytes, need {n_groups}")
    s = fp8_e4m3_decode_array(np.frombuffer(scales, dtype=np.uint8, count=n_groups))
    out = q.reshape(n_groups, group_size).astype(np.float32)
    out *= s.astype(np.float32)[:, None]
    return out.reshape(n_tokens, head_dim)
