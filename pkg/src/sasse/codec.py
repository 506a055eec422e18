"""Bit-exact conversion between poses and IEEE-754 binary labels.

Every scalar is stored as its binary16/32/64 pattern, most significant bit
first (sign, exponent, mantissa).  A pose label is the concatenation of the
seven scalar patterns in the order qa, qb, qc, qd, t1, t2, t3, so its length
is ``7 * b``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DecodeFailure, NonFinite, NonFiniteDecoded, Overflow
from .types import PRECISIONS, PoseVector, canonicalize_pose

_FLOAT = {16: np.dtype(">f2"), 32: np.dtype(">f4"), 64: np.dtype(">f8")}
_UINT = {16: np.dtype(">u2"), 32: np.dtype(">u4"), 64: np.dtype(">u8")}
_EXP_BITS = {16: 5, 32: 8, 64: 11}

COMPONENTS = ("qa", "qb", "qc", "qd", "t1", "t2", "t3")


def _check_precision(b):
    if b not in PRECISIONS:
        raise ValueError(f"precision must be one of {PRECISIONS}, got {b}")


def max_finite(b: int) -> float:
    _check_precision(b)
    return float(np.finfo(_FLOAT[b]).max)


def round_to_precision(z, b: int):
    """Round-to-nearest-even of ``z`` at precision ``b``, returned as float64."""
    return np.asarray(z, dtype=np.float64).astype(_FLOAT[b]).astype(np.float64)


def _to_bits(values: np.ndarray, b: int) -> np.ndarray:
    raw = np.ascontiguousarray(values.astype(_FLOAT[b]))
    return np.unpackbits(raw.view(np.uint8).reshape(values.shape + (b // 8,)), axis=-1).reshape(
        values.shape[:-1] + (values.shape[-1] * b,)
    )


def _from_bits(bits: np.ndarray, b: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    packed = np.packbits(bits.reshape(bits.shape[:-1] + (-1, b)), axis=-1)
    return np.ascontiguousarray(packed).view(_FLOAT[b])[..., 0].astype(np.float64)


def encode_scalar(z: float, b: int) -> np.ndarray:
    """Return the ``b`` bits of ``z`` (uint8 array, sign bit first)."""
    _check_precision(b)
    z = float(z)
    if not math.isfinite(z):
        raise NonFinite(f"cannot encode non-finite value {z!r}")
    if abs(z) > max_finite(b):
        raise Overflow(f"|{z!r}| exceeds the largest binary{b} value {max_finite(b)!r}")
    return _to_bits(np.array([z]), b)


def decode_scalar(bits, b: int) -> float:
    _check_precision(b)
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size != b:
        raise ValueError(f"expected {b} bits, got {bits.size}")
    if np.any(bits > 1):
        raise ValueError("bits must be 0 or 1")
    exp = bits[1 : 1 + _EXP_BITS[b]]
    if np.all(exp == 1):
        kind = "Inf" if not np.any(bits[1 + _EXP_BITS[b] :]) else "NaN"
        raise NonFiniteDecoded(f"bit pattern encodes {kind}")
    return float(_from_bits(bits, b)[0])


def encode_poses(P, b: int) -> np.ndarray:
    """Encode an ``N x 7`` pose array into the ``N x 7b`` {0,1} label matrix.

    Poses are taken as given; canonicalize them first.
    """
    _check_precision(b)
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != 7:
        raise ValueError(f"expected N x 7 poses, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        bad = np.argwhere(~np.isfinite(P))[0]
        raise NonFinite(f"row {bad[0]} component {COMPONENTS[bad[1]]} is not finite")
    over = np.abs(P) > max_finite(b)
    if np.any(over):
        bad = np.argwhere(over)[0]
        raise Overflow(f"row {bad[0]} component {COMPONENTS[bad[1]]} overflows binary{b}")
    return _to_bits(P, b)


def encode_pose(p: PoseVector, b: int) -> np.ndarray:
    values = p.as_array()
    for i, z in enumerate(values):
        try:
            encode_scalar(z, b)
        except (Overflow, NonFinite) as exc:
            raise type(exc)(f"component {i} ({COMPONENTS[i]}): {exc}") from exc
    return _to_bits(values, b)


def decode_labels(Y, b: int) -> np.ndarray:
    """Decode an ``N x 7b`` bit matrix to raw ``N x 7`` float64 values.

    No validation: NaN/Inf patterns come back as NaN/Inf.
    """
    Y = np.asarray(Y, dtype=np.uint8)
    return _from_bits(Y, b)


def decode_pose(y, b: int | None = None) -> PoseVector:
    """Invert :func:`encode_pose` and renormalize the quaternion.

    Raises :class:`DecodeFailure` if any component is NaN/Inf or the decoded
    quaternion is (numerically) zero.
    """
    y = np.asarray(y, dtype=np.uint8).ravel()
    if b is None:
        if y.size % 7:
            raise ValueError(f"label length {y.size} is not a multiple of 7")
        b = y.size // 7
    _check_precision(b)
    if y.size != 7 * b:
        raise ValueError(f"expected {7 * b} bits, got {y.size}")
    values = _from_bits(y, b)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise DecodeFailure(i, "NaN" if np.isnan(values[i]) else "Inf")
    n = float(np.linalg.norm(values[:4]))
    if n <= 1e-9:
        raise DecodeFailure(-1, f"quaternion norm {n:g} too small to renormalize")
    return canonicalize_pose(PoseVector(tuple(values[:4]), tuple(values[4:])))


def pack_bits(bits) -> bytes:
    """Pack a bit vector into bytes, first bit in the high bit of byte 0."""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def unpack_bits(data: bytes, nbits: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))[:nbits]
