import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sasse import codec
from sasse.errors import DecodeFailure, NonFinite, NonFiniteDecoded, Overflow
from sasse.types import PoseVector


def half_bits_reference(z: float) -> int:
    """Independent float -> binary16 conversion (round half to even) on integers."""
    sign = 1 if math.copysign(1.0, z) < 0 else 0
    a = abs(z)
    if a == 0:
        return sign << 15
    m, e = math.frexp(a)  # a = m * 2**e, 0.5 <= m < 1
    e -= 1  # a = (2m) * 2**e with 1 <= 2m < 2
    if e < -14:
        # subnormal: value = frac * 2**-24
        scaled = a * 2.0**24
        exp_field = 0
    else:
        scaled = (a / 2.0**e - 1.0) * 2**10
        exp_field = e + 15
    q, rem = divmod(scaled, 1.0)
    q = int(q)
    if rem > 0.5 or (rem == 0.5 and q % 2 == 1):
        q += 1
    if exp_field == 0 and q == 1024:
        exp_field, q = 1, 0
    if exp_field and q == 1024:
        exp_field, q = exp_field + 1, 0
    assert exp_field < 31, "overflow"
    return (sign << 15) | (exp_field << 10) | q


def int_to_bits(value: int, width: int):
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def reference_bits(z, b):
    if b == 16:
        return int_to_bits(half_bits_reference(z), 16)
    fmt = {32: (">f", ">I"), 64: (">d", ">Q")}[b]
    return int_to_bits(struct.unpack(fmt[1], struct.pack(fmt[0], z))[0], b)


class TestScalar:
    def test_one_point_five_half(self):
        bits = codec.encode_scalar(1.5, 16)
        assert "".join(map(str, bits)) == "0011111000000000"

    def test_zero_single(self):
        assert not codec.encode_scalar(0.0, 32).any() and codec.encode_scalar(0.0, 32).size == 32

    def test_one_single(self):
        assert codec.encode_scalar(1.0, 32).tolist() == int_to_bits(0x3F800000, 32)

    def test_decode_examples(self):
        assert codec.decode_scalar(int_to_bits(0x3E00, 16), 16) == 1.5
        assert codec.decode_scalar([0] * 16, 16) == 0.0

    @pytest.mark.parametrize("pattern", [0x7C00, 0xFC00, 0x7E00, 0x7C01])
    def test_nonfinite_patterns(self, pattern):
        with pytest.raises(NonFiniteDecoded):
            codec.decode_scalar(int_to_bits(pattern, 16), 16)

    def test_overflow(self):
        codec.encode_scalar(65504.0, 16)
        with pytest.raises(Overflow):
            codec.encode_scalar(65505.0, 16)

    @pytest.mark.parametrize("z", [math.nan, math.inf, -math.inf])
    def test_nonfinite_input(self, z):
        with pytest.raises(NonFinite):
            codec.encode_scalar(z, 32)

    @pytest.mark.parametrize("b", [16, 32, 64])
    def test_round_trip_random(self, b, rng):
        hi = min(codec.max_finite(b), 1e300)
        z = rng.standard_normal(2000) * np.exp(rng.uniform(-20, np.log(hi) - 1, 2000))
        z = np.clip(z, -hi, hi)
        for v in z[:200]:
            assert codec.decode_scalar(codec.encode_scalar(v, b), b) == codec.round_to_precision(v, b)

    @settings(max_examples=300)
    @given(st.floats(-65504, 65504, allow_nan=False))
    def test_half_matches_reference(self, z):
        assert codec.encode_scalar(z, 16).tolist() == reference_bits(z, 16)

    @settings(max_examples=200)
    @given(st.floats(allow_nan=False, allow_infinity=False, width=32))
    def test_single_matches_reference(self, z):
        assert codec.encode_scalar(z, 32).tolist() == reference_bits(z, 32)

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_double_matches_reference(self, z):
        assert codec.encode_scalar(z, 64).tolist() == reference_bits(z, 64)

    def test_ties_round_to_even(self):
        # 1 + 2**-11 lies halfway between 1 and 1 + 2**-10
        assert codec.round_to_precision(1 + 2.0**-11, 16) == 1.0
        assert codec.round_to_precision(1 + 3 * 2.0**-11, 16) == 1 + 2 * 2.0**-10


class TestPose:
    def test_identity_half(self):
        y = codec.encode_pose(PoseVector((1, 0, 0, 0), (0, 0, 0)), 16)
        assert y.size == 112
        assert y[:16].tolist() == int_to_bits(0x3C00, 16)
        assert not y[16:].any()

    @pytest.mark.parametrize("b", [16, 32, 64])
    def test_length(self, b):
        assert codec.encode_pose(PoseVector((1, 0, 0, 0), (1, 2, 3)), b).size == 7 * b

    def test_identity_round_trip(self):
        p = PoseVector((1, 0, 0, 0), (0, 0, 0))
        assert codec.decode_pose(codec.encode_pose(p, 16)) == p

    def test_component_order(self):
        p = PoseVector((0.5, 0.5, 0.5, 0.5), (1.0, -2.0, 3.0))
        y = codec.encode_pose(p, 32)
        vals = [codec.decode_scalar(y[32 * i: 32 * (i + 1)], 32) for i in range(7)]
        assert vals == [0.5, 0.5, 0.5, 0.5, 1.0, -2.0, 3.0]

    def test_random_representable_poses_exact(self, rng):
        # components drawn from binary16 values, compared bit for bit with the oracle
        for _ in range(50):
            raw = rng.integers(0, 0x7BFF, size=7).astype(np.uint16)
            vals = raw.view(np.float16).astype(np.float64) * rng.choice([-1, 1], size=7)
            vals[:4] = np.array([0.5, 0.5, 0.5, 0.5])
            y = codec.encode_pose(PoseVector(vals[:4], vals[4:]), 16)
            ref = sum((reference_bits(v, 16) for v in vals), [])
            assert y.tolist() == ref
            back = codec.decode_pose(y)
            assert back.t == tuple(vals[4:])

    @pytest.mark.parametrize("b", [16, 32, 64])
    def test_round_trip_to_precision(self, b, rng):
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        q *= np.sign(q[0])
        t = rng.uniform(-50, 50, 3)
        p = PoseVector(q, t)
        back = codec.decode_pose(codec.encode_pose(p, b))
        np.testing.assert_array_equal(back.t, codec.round_to_precision(t, b))
        qr = codec.round_to_precision(q, b)
        np.testing.assert_allclose(back.q, qr / np.linalg.norm(qr), rtol=0, atol=1e-15)

    def test_nan_translation_fails_at_component_4(self):
        y = codec.encode_pose(PoseVector((1, 0, 0, 0), (0, 0, 0)), 16)
        y[64:80] = int_to_bits(0x7E00, 16)
        with pytest.raises(DecodeFailure) as err:
            codec.decode_pose(y)
        assert err.value.component_index == 4

    def test_renormalizes(self):
        y = np.concatenate([reference_bits(v, 16) for v in (0.5, 0, 0, 0, 1, 1, 1)])
        p = codec.decode_pose(y)
        assert p.q == (1.0, 0.0, 0.0, 0.0) and p.t == (1.0, 1.0, 1.0)

    def test_zero_quaternion_fails(self):
        with pytest.raises(DecodeFailure):
            codec.decode_pose(np.zeros(112, dtype=np.uint8))

    def test_overflow_names_component(self):
        with pytest.raises(Overflow, match="t2"):
            codec.encode_pose(PoseVector((1, 0, 0, 0), (0, 1e6, 0)), 16)

    def test_batch_encode_matches_single(self, rng):
        P = np.hstack([np.tile([0.5, -0.5, 0.5, 0.5], (20, 1)), rng.uniform(-9, 9, (20, 3))])
        Y = codec.encode_poses(P, 16)
        for i in range(20):
            assert Y[i].tolist() == codec.encode_pose(PoseVector(P[i, :4], P[i, 4:]), 16).tolist()


def test_pack_bits_big_endian():
    bits = [1, 0, 0, 0, 0, 0, 0, 1, 1]
    assert codec.pack_bits(bits) == bytes([0x81, 0x80])
    assert codec.unpack_bits(codec.pack_bits(bits), 9).tolist() == bits
