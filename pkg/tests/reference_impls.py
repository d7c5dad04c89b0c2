"""Independent scalar reference implementations used as test oracles.

Everything here is written from first principles with plain Python
loops and is deliberately kept separate from the vectorized library
code paths it checks.
"""

import math


def e4m3_nonneg_grid() -> list[float]:
    """All non-negative finite E4M3 values, ascending, from the format
    definition: subnormals k * 2^-9, normals (8+m) * 2^(e-10) with
    exponent 1..15 and the (15, 7) slot reserved for NaN."""
    values = [k * 2.0 ** -9 for k in range(8)]
    for e in range(1, 16):
        for m in range(8):
            if e == 15 and m == 7:
                continue
            values.append((8 + m) * 2.0 ** (e - 10))
    return sorted(values)


_GRID = e4m3_nonneg_grid()


def ref_fp8_nearest(x: float) -> float:
    """Nearest grid value with ties to the even-mantissa neighbour."""
    x = min(x, _GRID[-1])
    best = min(_GRID, key=lambda g: (abs(g - x), g))
    # Tie: two neighbours equidistant; even mantissa = even grid index.
    lo = max(g for g in _GRID if g <= x)
    hi = min(g for g in _GRID if g >= x)
    if hi - x == x - lo and lo != hi:
        return lo if _GRID.index(lo) % 2 == 0 else hi
    return best


def ref_fp8_up(x: float) -> float:
    """Smallest grid value >= x, saturating at the grid maximum."""
    if x >= _GRID[-1]:
        return _GRID[-1]
    return min(g for g in _GRID if g >= x)


def ref_quantize_group(values, bits):
    """Scalar group quantization: (codes, decoded scale)."""
    qmax = 2 ** (bits - 1) - 1
    peak = max(abs(v) for v in values)
    if peak == 0.0:
        return [0] * len(values), 1.0
    scale = ref_fp8_up(peak / qmax)
    codes = []
    for v in values:
        c = _round_half_even(v / scale)
        codes.append(max(-qmax, min(qmax, c)))
    return codes, scale


def _round_half_even(x: float) -> int:
    floor = math.floor(x)
    frac = x - floor
    if frac > 0.5:
        return floor + 1
    if frac < 0.5:
        return floor
    return floor if floor % 2 == 0 else floor + 1


def ref_pack(codes, bits):
    """Bit-exact payload packing oracle."""
    out = bytearray((len(codes) * bits + 7) // 8)
    for i, c in enumerate(codes):
        u = c & ((1 << bits) - 1)
        bit = bits * i
        out[bit // 8] |= u << (bit % 8)
    return bytes(out)


def ref_fwht(vec):
    """Recursive Walsh-Hadamard transform (unnormalized)."""
    n = len(vec)
    if n == 1:
        return list(vec)
    half = n // 2
    a = ref_fwht([vec[i] + vec[i + half] for i in range(half)])
    b = ref_fwht([vec[i] - vec[i + half] for i in range(half)])
    return a + b


def ref_mse(a, b):
    """Plain-loop mean squared error."""
    flat_a = [float(v) for row in a for v in row]
    flat_b = [float(v) for row in b for v in row]
    total = 0.0
    for x, y in zip(flat_a, flat_b):
        total += (x - y) ** 2
    return total / len(flat_a)
