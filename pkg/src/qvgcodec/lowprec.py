"""Low-precision scalar formats: FP8 E4M3 scales and BF16 centroids.

E4M3 layout: 1 sign bit, 4 exponent bits (bias 7), 3 mantissa bits.
The variant used here has no infinities; exponent 0b1111 with mantissa
0b111 is NaN (0x7F / 0xFF) and the largest normal value is 448.
Subnormals step in units of 2^-9.

Two rounding modes are provided for encoding:

* ``"nearest"`` — round-half-to-even on the mantissa; values above 448
  saturate to 448.
* ``"up"`` — smallest representable value >= x (still saturating at
  448).  Group quantization uses this mode so that a stored scale is
  never below the raw scale, which keeps the per-element reconstruction
  error within half a quantization step whenever the raw scale is
  representable.

BF16 helpers round a float32 array to the nearest bfloat16 (ties to
even) while keeping float32 storage, and convert to/from the packed
16-bit wire form (the high half of the float32 bit pattern).
"""

from __future__ import annotations

import numpy as np

from .errors import NaNPattern, NonFiniteScale

E4M3_MAX = 448.0
E4M3_MIN_SUBNORMAL = 2.0 ** -9
E4M3_NAN_BYTES = (0x7F, 0xFF)

_MODES = ("nearest", "up")


def _build_decode_table() -> np.ndarray:
    """Value of every E4M3 code point; NaN patterns decode to NaN."""
    table = np.empty(256, dtype=np.float64)
    for byte in range(256):
        sign = -1.0 if byte & 0x80 else 1.0
        exp = (byte >> 3) & 0xF
        man = byte & 0x7
        if exp == 0xF and man == 0x7:
            table[byte] = np.nan
        elif exp == 0:
            table[byte] = sign * man * E4M3_MIN_SUBNORMAL
        else:
            table[byte] = sign * (8 + man) * 2.0 ** (exp - 10)
    return table


_DECODE = _build_decode_table()


def fp8_e4m3_encode_array(x: np.ndarray, rounding: str = "nearest") -> np.ndarray:
    """Encode an array of non-negative finite reals to E4M3 bytes."""
    if rounding not in _MODES:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteScale("scale must be finite")
    if np.any(x < 0):
        raise ValueError("scale must be non-negative")

    x = np.minimum(x, E4M3_MAX)
    # Exact exponent via frexp: x = m * 2^e2 with m in [0.5, 1).
    _, e2 = np.frexp(x)
    e = np.maximum(e2 - 1, -6)  # binade floor, subnormals pinned to -6
    step = np.ldexp(1.0, e - 3)  # mantissa ULP within the binade
    scaled = x / step  # exact: power-of-two division
    k = np.rint(scaled) if rounding == "nearest" else np.ceil(scaled)
    k = k.astype(np.int64)
    # Mantissa carry rolls into the next binade.
    carry = k == 16
    e = np.where(carry, e + 1, e)
    k = np.where(carry, 8, k)
    # Top binade has codes for k <= 14 only (k = 15 is the NaN slot).
    k = np.where((e >= 8) & (k > 14), 14, k)
    e = np.minimum(e, 8)

    normal = k >= 8
    byte = np.where(normal, ((e + 7) << 3) | (k - 8), k)
    byte = np.where(x == 0.0, 0, byte)
    return byte.astype(np.uint8)


def fp8_e4m3_decode_array(codes: np.ndarray) -> np.ndarray:
    """Decode E4M3 bytes to float64 values; NaN patterns are rejected."""
    codes = np.asarray(codes, dtype=np.uint8)
    if np.any((codes == 0x7F) | (codes == 0xFF)):
        raise NaNPattern("byte is the E4M3 NaN pattern")
    return _DECODE[codes]


def fp8_e4m3_encode(x: float, rounding: str = "nearest") -> int:
    """Encode one non-negative finite real to an E4M3 byte."""
    return int(fp8_e4m3_encode_array(np.array([x]), rounding)[0])


def fp8_e4m3_decode(byte: int) -> float:
    """Exact real value of one E4M3 byte."""
    if not 0 <= byte <= 255:
        raise ValueError("byte out of range")
    return float(fp8_e4m3_decode_array(np.array([byte], dtype=np.uint8))[0])


# ---------------------------------------------------------------------------
# BF16
# ---------------------------------------------------------------------------


def round_to_bf16(a: np.ndarray) -> np.ndarray:
    """Round a float32 array to bfloat16 precision (ties to even).

    Returns float32 values that are exactly representable in bfloat16.
    """
    a = np.ascontiguousarray(a, dtype=np.float32)
    u = a.view(np.uint32)
    rounded = (u + 0x7FFF + ((u >> 16) & 1)) & 0xFFFF0000
    return rounded.astype(np.uint32).view(np.float32)


def bf16_pack(a: np.ndarray) -> np.ndarray:
    """Pack bf16-exact float32 values into their uint16 wire form."""
    a = np.ascontiguousarray(a, dtype=np.float32)
    return (a.view(np.uint32) >> 16).astype(np.uint16)


def bf16_unpack(u: np.ndarray) -> np.ndarray:
    """Widen uint16 bfloat16 wire values back to float32 (exact)."""
    u = np.asarray(u, dtype=np.uint16)
    return (u.astype(np.uint32) << 16).view(np.float32)
