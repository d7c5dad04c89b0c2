"""FP8 E4M3 and BF16 conversion tests against bit-level oracles."""

import numpy as np
import pytest

from qvgcodec.errors import NaNPattern, NonFiniteScale
from qvgcodec.lowprec import (
    E4M3_MAX,
    bf16_pack,
    bf16_unpack,
    fp8_e4m3_decode,
    fp8_e4m3_decode_array,
    fp8_e4m3_encode,
    fp8_e4m3_encode_array,
    round_to_bf16,
)

from reference_impls import e4m3_nonneg_grid, ref_fp8_nearest, ref_fp8_up


class TestEncodeDecodeOracles:
    @pytest.mark.parametrize(
        "value,byte",
        [
            (0.0, 0x00),
            (1.0, 0x38),
            (448.0, 0x7E),
            (2.0 ** -9, 0x01),  # smallest subnormal
            (0.015625, 0x08),  # smallest normal, 2^-6
            (3.0, 0x44),
        ],
    )
    def test_exact_values_encode_both_modes(self, value, byte):
        assert fp8_e4m3_encode(value, "nearest") == byte
        assert fp8_e4m3_encode(value, "up") == byte

    @pytest.mark.parametrize(
        "byte,value",
        [(0x00, 0.0), (0x38, 1.0), (0x08, 0.015625), (0x01, 2.0 ** -9), (0x7E, 448.0)],
    )
    def test_decode(self, byte, value):
        assert fp8_e4m3_decode(byte) == value

    def test_decode_negative_codes(self):
        assert fp8_e4m3_decode(0xB8) == -1.0

    def test_nan_patterns_rejected(self):
        for byte in (0x7F, 0xFF):
            with pytest.raises(NaNPattern):
                fp8_e4m3_decode(byte)

    def test_encode_rejects_nonfinite(self):
        for bad in (float("nan"), float("inf")):
            with pytest.raises(NonFiniteScale):
                fp8_e4m3_encode(bad)

    def test_encode_rejects_negative(self):
        with pytest.raises(ValueError):
            fp8_e4m3_encode(-1.0)


class TestRoundTripIdentity:
    def test_encode_decode_identity_on_all_nonneg_codes(self):
        """decode then encode returns the original byte for every
        non-negative non-NaN code point, in both rounding modes."""
        for code in range(0x7F):
            value = fp8_e4m3_decode(code)
            assert fp8_e4m3_encode(value, "nearest") == code
            assert fp8_e4m3_encode(value, "up") == code

    def test_grid_matches_reference_definition(self):
        grid = e4m3_nonneg_grid()
        decoded = sorted(fp8_e4m3_decode(c) for c in range(0x7F))
        assert decoded == grid


class TestRoundingModes:
    def test_one_seventh(self):
        # 1/7 sits between 0.140625 and 0.15625 on the grid
        assert fp8_e4m3_decode(fp8_e4m3_encode(1 / 7, "nearest")) == 0.140625
        assert fp8_e4m3_decode(fp8_e4m3_encode(1 / 7, "up")) == 0.15625

    def test_saturation(self):
        assert fp8_e4m3_encode(1000.0, "nearest") == 0x7E
        assert fp8_e4m3_encode(1000.0, "up") == 0x7E
        assert fp8_e4m3_encode(E4M3_MAX + 1e-3, "up") == 0x7E

    def test_subnormal_underflow(self):
        # Ceiling never drops a positive value to zero.
        assert fp8_e4m3_encode(1e-9, "up") == 0x01
        # Half the smallest subnormal ties to even (zero).
        assert fp8_e4m3_encode(2.0 ** -10, "nearest") == 0x00

    def test_matches_scalar_reference_on_random_values(self):
        rng = np.random.default_rng(11)
        mags = 10.0 ** rng.uniform(-4, 3, size=500)
        enc_near = fp8_e4m3_encode_array(mags, "nearest")
        enc_up = fp8_e4m3_encode_array(mags, "up")
        dec_near = fp8_e4m3_decode_array(enc_near)
        dec_up = fp8_e4m3_decode_array(enc_up)
        for x, dn, du in zip(mags, dec_near, dec_up):
            assert dn == ref_fp8_nearest(float(x))
            assert du == ref_fp8_up(float(x))

    def test_up_mode_never_undershoots(self):
        rng = np.random.default_rng(12)
        mags = 10.0 ** rng.uniform(-5, np.log10(448.0), size=2000)
        dec = fp8_e4m3_decode_array(fp8_e4m3_encode_array(mags, "up"))
        assert np.all(dec >= mags)


class TestBf16:
    def test_round_is_idempotent(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=1000).astype(np.float32)
        r = round_to_bf16(a)
        assert np.array_equal(round_to_bf16(r), r)

    def test_known_roundings(self):
        # bf16 keeps 7 mantissa bits: near 1.0 the grid step is 2^-7.
        # 1 + 2^-8 ties between 1.0 and 1+2^-7; even mantissa wins.
        assert round_to_bf16(np.float32(1.0 + 2.0 ** -8))[()] == np.float32(1.0)
        assert round_to_bf16(np.float32(1.0 + 2.0 ** -8 + 2.0 ** -16))[()] == np.float32(
            1.0 + 2.0 ** -7
        )
        # 1 + 3*2^-8 ties between m=1 and m=2; even mantissa (m=2) wins.
        assert round_to_bf16(np.float32(1.0 + 3 * 2.0 ** -8))[()] == np.float32(
            1.0 + 2.0 ** -6
        )

    def test_pack_unpack_exact(self):
        rng = np.random.default_rng(4)
        a = round_to_bf16(rng.normal(scale=100.0, size=4096).astype(np.float32))
        assert np.array_equal(bf16_unpack(bf16_pack(a)), a)

    def test_bf16_is_prefix_of_f32(self):
        a = round_to_bf16(np.array([1.5, -2.25, 3e-5], dtype=np.float32))
        u32 = a.view(np.uint32)
        assert not np.any(u32 & 0xFFFF)
