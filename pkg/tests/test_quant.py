"""Group quantization, payload packing, and whole-plane quantization."""

import numpy as np
import pytest

from qvgcodec.errors import (
    DimensionMismatch,
    EmptyPlane,
    NonFiniteInput,
    RangeOverflow,
    Truncated,
)
from qvgcodec.lowprec import fp8_e4m3_decode, fp8_e4m3_decode_array
from qvgcodec.quant import (
    QuantizedGroup,
    dequantize_group,
    dequantize_plane,
    pack_payload,
    quantize_group,
    quantize_plane,
    unpack_payload,
)
from qvgcodec.types import ChunkSpec, KVPlane, QuantConfig, validate_plane

from reference_impls import ref_pack, ref_quantize_group


class TestQuantizeGroup:
    def test_zero_group(self):
        g = quantize_group(np.zeros(8), bits=2)
        assert not g.q.any()
        assert fp8_e4m3_decode(g.scale_fp8) == 1.0

    def test_exact_scale_b2(self):
        # max 3.0 is exactly representable, so no scale rounding at all
        g = quantize_group([3.0, -3.0, 1.4, 0.0], bits=2)
        assert list(g.q) == [1, -1, 0, 0]
        assert fp8_e4m3_decode(g.scale_fp8) == 3.0

    def test_rounded_scale_b4(self):
        # raw scale 1/7 rounds up to 0.15625 on the E4M3 grid
        values = np.concatenate([[1.0, -0.5, 0.25, 0.0], np.zeros(12)])
        g = quantize_group(values, bits=4)
        assert fp8_e4m3_decode(g.scale_fp8) == 0.15625
        assert list(g.q[:4]) == [6, -3, 2, 0]

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(21)
        for bits in (2, 4, 8):
            for _ in range(50):
                vals = rng.uniform(-50, 50, size=16)
                g = quantize_group(vals, bits)
                ref_q, ref_scale = ref_quantize_group(vals.tolist(), bits)
                assert list(g.q) == ref_q
                assert fp8_e4m3_decode(g.scale_fp8) == ref_scale

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteInput):
            quantize_group([1.0, np.nan], bits=4)


class TestDequantizeGroup:
    def test_zero_codes(self):
        g = QuantizedGroup(q=np.zeros(8, dtype=np.int8), scale_fp8=0x44, bits=2)
        assert not dequantize_group(g).any()

    def test_known_values(self):
        g = quantize_group(
            np.concatenate([[1.0, -0.5, 0.25, 0.0], np.zeros(12)]), bits=4
        )
        out = dequantize_group(g)
        expect = 0.15625 * np.array([6, -3, 2, 0])
        assert np.allclose(out[:4], expect, atol=0)

    @pytest.mark.parametrize("bits", [2, 4, 8])
    def test_round_trip_error_bound(self, bits):
        rng = np.random.default_rng(31)
        qmax = 2 ** (bits - 1) - 1
        for _ in range(200):
            peak = 10.0 ** rng.uniform(-2, 2)
            vals = rng.uniform(-peak, peak, size=32)
            g = quantize_group(vals, bits)
            scale = fp8_e4m3_decode(g.scale_fp8)
            err = np.abs(vals - dequantize_group(g).astype(np.float64))
            assert np.all(err <= scale / 2 * (1 + 1e-9) + 1e-12)
            assert np.all(np.abs(g.q) <= qmax)

    @pytest.mark.parametrize("bits", [2, 4, 8])
    def test_power_of_two_scaling_invariance(self, bits):
        # Multiplying a group by a power of two shifts the scale and the
        # reconstruction exactly and leaves the codes alone, as long as
        # both scales stay in the normal E4M3 range (the subnormal grid
        # is not self-similar under halving).
        rng = np.random.default_rng(41)
        vals = rng.uniform(-1.0, 1.0, size=16)
        vals[0] = 1.0
        vals *= 8.0  # group max exactly 8 -> scales stay normal
        base = quantize_group(vals, bits)
        for k in (-1, 2, 5):
            scaled = quantize_group(vals * 2.0 ** k, bits)
            assert np.array_equal(scaled.q, base.q)
            assert np.array_equal(
                dequantize_group(scaled),
                dequantize_group(base) * np.float32(2.0 ** k),
            )


class TestPacking:
    def test_known_patterns(self):
        assert pack_payload([1, -1, 0, 1], 2) == bytes([0x4D])
        assert pack_payload([7, -4], 4) == bytes([0xC7])
        assert pack_payload([], 2) == b""

    def test_unpack_known_patterns(self):
        assert list(unpack_payload(bytes([0x4D]), 4, 2)) == [1, -1, 0, 1]
        assert list(unpack_payload(bytes([0xC7]), 2, 4)) == [7, -4]

    @pytest.mark.parametrize("bits", [2, 4, 8])
    def test_inverse_on_random_vectors(self, bits):
        rng = np.random.default_rng(51)
        qmax = 2 ** (bits - 1) - 1
        for n in (1, 2, 3, 7, 8, 64, 1000):
            q = rng.integers(-qmax, qmax + 1, size=n)
            packed = pack_payload(q, bits)
            assert packed == ref_pack(q.tolist(), bits)
            assert np.array_equal(unpack_payload(packed, n, bits), q)

    def test_overflow_rejected(self):
        with pytest.raises(RangeOverflow):
            pack_payload([-2], 2)  # most negative code is never valid
        with pytest.raises(RangeOverflow):
            pack_payload([8], 4)

    def test_truncated_rejected(self):
        with pytest.raises(Truncated):
            unpack_payload(b"\x00", 5, 2)


class TestQuantizePlane:
    def _plane(self, data):
        return KVPlane.from_array(np.asarray(data, dtype=np.float32))

    def test_sizes(self):
        rng = np.random.default_rng(61)
        plane = self._plane(rng.normal(size=(1, 128)))
        payload, scales = quantize_plane(plane, QuantConfig(bits=2, group_size=64))
        assert len(scales) == 2
        assert len(payload) == 32

    def test_identical_rows_identical_output(self):
        row = np.random.default_rng(71).normal(size=64).astype(np.float32)
        plane = self._plane(np.tile(row, (8, 1)))
        payload, scales = quantize_plane(plane, QuantConfig(bits=4, group_size=16))
        per_row_payload = len(payload) // 8
        per_row_scales = len(scales) // 8
        for r in range(1, 8):
            assert (
                payload[r * per_row_payload : (r + 1) * per_row_payload]
                == payload[:per_row_payload]
            )
            assert (
                scales[r * per_row_scales : (r + 1) * per_row_scales]
                == scales[:per_row_scales]
            )

    def test_zero_plane(self):
        plane = self._plane(np.zeros((4, 32)))
        payload, scales = quantize_plane(plane, QuantConfig(bits=2, group_size=16))
        assert payload == bytes(len(payload))
        decoded = fp8_e4m3_decode_array(np.frombuffer(scales, np.uint8))
        assert np.all(decoded == 1.0)
        out = dequantize_plane(payload, scales, 4, 32, 2, 16)
        assert not out.any()

    def test_deterministic(self):
        rng = np.random.default_rng(81)
        plane = self._plane(rng.normal(size=(16, 64)))
        cfg = QuantConfig(bits=2, group_size=16)
        assert quantize_plane(plane, cfg) == quantize_plane(plane, cfg)


class TestValidatePlane:
    def test_ok(self):
        plane = KVPlane.from_array(np.zeros((4, 128), dtype=np.float32))
        validate_plane(plane, QuantConfig(bits=2, group_size=64))

    def test_divisibility(self):
        plane = KVPlane.from_array(np.zeros((4, 100), dtype=np.float32))
        with pytest.raises(DimensionMismatch):
            validate_plane(plane, QuantConfig(bits=2, group_size=64))

    def test_nan_rejected(self):
        data = np.zeros((4, 64), dtype=np.float32)
        data[2, 3] = np.nan
        plane = KVPlane.from_array(data)
        with pytest.raises(NonFiniteInput):
            validate_plane(plane, QuantConfig(bits=2, group_size=64))

    def test_empty_rejected(self):
        with pytest.raises(EmptyPlane):
            ChunkSpec(n_tokens=0, head_dim=4)

    def test_shape_mismatch_at_construction(self):
        with pytest.raises(DimensionMismatch):
            KVPlane(spec=ChunkSpec(n_tokens=4, head_dim=8), data=np.zeros((4, 9)))
