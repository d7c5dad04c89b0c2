"""Reference competitors: plain round-to-nearest, axis-asymmetric
grouping for keys vs values, and randomized Hadamard rotation.

All three share the integer quantizer from :mod:`qvgcodec.quant`; they
differ only in the orientation of the quantization groups or in a
pre-rotation of each row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPowerOfTwo
from .quant import dequantize_plane, quantize_plane
from .types import KVPlane, QuantConfig


def _rtn_config(bits: int, group_size: int) -> QuantConfig:
    return QuantConfig(bits=bits, group_size=group_size, stages=0, centroids=1)


def rtn_compress(plane: KVPlane, bits: int, group_size: int) -> tuple[bytes, bytes]:
    """Per-token channel-axis group quantization, no smoothing."""
    return quantize_plane(plane, _rtn_config(bits, group_size))


def rtn_decompress(
    payload: bytes,
    scales: bytes,
    n_tokens: int,
    head_dim: int,
    bits: int,
    group_size: int,
) -> np.ndarray:
    return dequantize_plane(payload, scales, n_tokens, head_dim, bits, group_size)


# ---------------------------------------------------------------------------
# Key/value axis-asymmetric grouping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KiviCompressed:
    """Keys grouped along the token axis, values along the channel axis."""

    keys_payload: bytes
    keys_scales: bytes
    values_payload: bytes
    values_scales: bytes
    n_tokens: int
    head_dim: int
    bits: int
    group_size: int
    padded_tokens: int  # zero rows appended to the key path, 0 if none


def token_axis_compress(
    plane: KVPlane, bits: int, group_size: int
) -> tuple[bytes, bytes, int]:
    """Quantize with groups of ``group_size`` consecutive *tokens* per
    channel.  A final partial token group is zero-padded; the pad count
    is returned so decompression can trim it."""
    n, d = plane.spec.n_tokens, plane.spec.head_dim
    pad = (-n) % group_size
    data = plane.data
    if pad:
        data = np.vstack([data, np.zeros((pad, d), dtype=np.float32)])
    transposed = KVPlane.from_array(np.ascontiguousarray(data.T))
    payload, scales = quantize_plane(transposed, _rtn_config(bits, group_size))
    return payload, scales, pad


def token_axis_decompress(
    payload: bytes,
    scales: bytes,
    n_tokens: int,
    head_dim: int,
    bits: int,
    group_size: int,
) -> np.ndarray:
    pad = (-n_tokens) % group_size
    out = dequantize_plane(
        payload, scales, head_dim, n_tokens + pad, bits, group_size
    )
    return np.ascontiguousarray(out.T[:n_tokens])


def kivi_compress(
    keys_plane: KVPlane, values_plane: KVPlane, bits: int, group_size: int
) -> KiviCompressed:
    if keys_plane.data.shape != values_plane.data.shape:
        raise DimensionMismatch("keys and values planes must share a shape")
    kp, ks, pad = token_axis_compress(keys_plane, bits, group_size)
    vp, vs = quantize_plane(values_plane, _rtn_config(bits, group_size))
    return KiviCompressed(
        keys_payload=kp,
        keys_scales=ks,
        values_payload=vp,
        values_scales=vs,
        n_tokens=keys_plane.spec.n_tokens,
        head_dim=keys_plane.spec.head_dim,
        bits=bits,
        group_size=group_size,
        padded_tokens=pad,
    )


def kivi_decompress(c: KiviCompressed) -> tuple[np.ndarray, np.ndarray]:
    keys = token_axis_decompress(
        c.keys_payload, c.keys_scales, c.n_tokens, c.head_dim, c.bits, c.group_size
    )
    values = dequantize_plane(
        c.values_payload, c.values_scales, c.n_tokens, c.head_dim, c.bits, c.group_size
    )
    return keys, values


# ---------------------------------------------------------------------------
# Randomized Hadamard rotation
# ---------------------------------------------------------------------------


def random_signs(d: int, seed: int) -> np.ndarray:
    """Seeded +/-1 diagonal (float32) for the rotation."""
    rng = np.random.Generator(np.random.Philox(seed))
    return np.where(rng.random(d) < 0.5, -1.0, 1.0).astype(np.float32)


def _fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis."""
    d = x.shape[-1]
    if d & (d - 1):
        raise NotPowerOfTwo(f"length {d} is not a power of two")
    y = x.astype(np.float64).copy()
    h = 1
    while h < d:
        y = y.reshape(*y.shape[:-1], -1, 2, h)
        a = y[..., 0, :] + y[..., 1, :]
        b = y[..., 0, :] - y[..., 1, :]
        y = np.stack([a, b], axis=-2).reshape(*x.shape[:-1], d)
        h *= 2
    return y


def hadamard_transform(row: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Orthonormal transform: sign-flip each coordinate, then apply the
    normalized Walsh-Hadamard transform.  Works on a vector or on a
    matrix of rows."""
    row = np.asarray(row, dtype=np.float64)
    d = row.shape[-1]
    if signs.shape[-1] != d:
        raise DimensionMismatch("signs length != row length")
    return _fwht(row * signs) / np.sqrt(d)


def inverse_hadamard(row: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hadamard_transform` (transform, then sign-flip)."""
    row = np.asarray(row, dtype=np.float64)
    d = row.shape[-1]
    return (_fwht(row) / np.sqrt(d)) * signs


@dataclass(frozen=True)
class QuarotCompressed:
    payload: bytes
    scales: bytes
    n_tokens: int
    head_dim: int
    bits: int
    group_size: int
    seed: int


def quarot_compress(
    plane: KVPlane, bits: int, group_size: int, seed: int
) -> QuarotCompressed:
    """Rotate every token row by the seeded Hadamard transform, then
    quantize as RTN.  Only the seed is stored for the rotation."""
    signs = random_signs(plane.spec.head_dim, seed)
    rotated = hadamard_transform(plane.data, signs).astype(np.float32)
    rotated_plane = KVPlane(spec=plane.spec, data=rotated)
    payload, scales = quantize_plane(rotated_plane, _rtn_config(bits, group_size))
    return QuarotCompressed(
        payload=payload,
        scales=scales,
        n_tokens=plane.spec.n_tokens,
        head_dim=plane.spec.head_dim,
        bits=bits,
        group_size=group_size,
        seed=seed,
    )


def quarot_decompress(c: QuarotCompressed) -> np.ndarray:
    rotated = dequantize_plane(
        c.payload, c.scales, c.n_tokens, c.head_dim, c.bits, c.group_size
    )
    signs = random_signs(c.head_dim, c.seed)
    return inverse_hadamard(rotated, signs).astype(np.float32)
