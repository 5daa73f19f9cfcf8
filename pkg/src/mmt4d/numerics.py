"""IEEE 754 binary16 <-> binary32 conversion.

Half-precision values travel through the package as raw ``uint16`` bit
patterns (numba has no float16 type). Widening is exact; narrowing rounds
to nearest, ties to even.
"""

from __future__ import annotations

from enum import Enum

import numpy as np


class DType(str, Enum):
    F16 = "f16"
    F32 = "f32"

    @property
    def numpy(self) -> type:
        return np.float16 if self is DType.F16 else np.float32


_F32_EXP_MASK = np.uint32(0x7F800000)


def widen_bits(bits: np.ndarray) -> np.ndarray:
    """Convert an array of binary16 bit patterns to float32, exactly."""
    h = np.asarray(bits, dtype=np.uint16).astype(np.uint32)
    sign = (h & 0x8000) << 16
    exp = (h >> 10) & 0x1F
    man = h & 0x3FF

    out = sign | ((exp + 112) << 23) | (man << 13)
    out = np.where(exp == 0x1F, sign | _F32_EXP_MASK | (man << 13), out)

    # subnormals and zeros: man * 2^-24 is exact in float32
    sub = (man.astype(np.float32) * np.float32(2.0**-24)).view(np.uint32) | sign
    out = np.where(exp == 0, sub, out)
    return out.astype(np.uint32).view(np.float32)


def narrow_to_bits(x: np.ndarray) -> np.ndarray:
    """Round float32 values to binary16 bit patterns (round-to-nearest-even).

    NaNs come out as the canonical quiet NaN with the input's sign.
    """
    b = np.asarray(x, dtype=np.float32).view(np.uint32).astype(np.int64)
    sign = (b >> 16) & 0x8000
    exp = (b >> 23) & 0xFF
    man = b & 0x7FFFFF

    # Normal f16 range: drop 13 mantissa bits; a rounding carry ripples into
    # the exponent and, at the top, produces exactly the infinity encoding.
    hexp = exp - 112
    trunc = (hexp << 10) | (man >> 13)
    rem = man & 0x1FFF
    up = (rem > 0x1000) | ((rem == 0x1000) & ((trunc & 1) == 1))
    normal = np.minimum(trunc + up, 0x7C00)

    # Subnormal f16 range: shift the full 24-bit significand down to units
    # of 2^-24. f32 subnormals sit far below that and all round to zero.
    sig = np.where(exp == 0, man, man | 0x800000)
    shift = np.clip(126 - np.maximum(exp, 1), 1, 40)
    q = sig >> shift
    r = sig & ((np.int64(1) << shift) - 1)
    half = np.int64(1) << (shift - 1)
    sub = q + ((r > half) | ((r == half) & ((q & 1) == 1)))

    out = np.where(hexp >= 1, normal, sub)
    out = np.where(hexp >= 0x1F, 0x7C00, out)
    out = np.where(exp == 0xFF, np.where(man != 0, 0x7E00, 0x7C00), out)
    return (out | sign).astype(np.uint16)


def f16_to_f32(bits: int) -> float:
    return float(widen_bits(np.array([bits], dtype=np.uint16))[0])


def f32_to_f16(x: float) -> int:
    return int(narrow_to_bits(np.array([x], dtype=np.float32))[0])


def to_f16(values) -> np.ndarray:
    """Round arbitrary real values to a float16 array (via float32)."""
    bits = narrow_to_bits(np.asarray(values, dtype=np.float32))
    return bits.view(np.float16)


#: float32 value of every binary16 bit pattern, indexed by the pattern.
WIDEN_TABLE: np.ndarray = widen_bits(np.arange(1 << 16, dtype=np.uint32).astype(np.uint16))
WIDEN_TABLE.setflags(write=False)


def as_f32(data: np.ndarray) -> np.ndarray:
    """Widen a float16 or float32 array to float32 without rounding."""
    if data.dtype == np.float16:
        return WIDEN_TABLE[data.view(np.uint16)]
    if data.dtype == np.float32:
        return data
    raise TypeError(f"expected float16 or float32 data, got {data.dtype}")


def same_value(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise float equality that also treats NaN == NaN and +0 == -0."""
    a = np.asarray(a)
    b = np.asarray(b)
    return (a == b) | (np.isnan(a) & np.isnan(b))
