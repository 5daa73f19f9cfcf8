"""mmt4d kernels and the dispatch registry.

All kernels share one result contract: for each accumulator element,

    acc = init
    for p in range(K1):
        for c in range(k0):
            acc += f32(lhs[i, p, r, c]) * f32(rhs[j, p, s, c])

with every product and sum rounded to float32 in exactly that order. A
product of two widened halves is exact in float32, so the only rounding is
in the running sum, and any kernel that keeps this order per element is
bit-equal to any other.

Kernels operate on a half-open range ``tiles`` of linearized output tiles
(``t = i * N1 + j``) so the runtime can hand disjoint ranges to workers.
Numba cores release the GIL.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numba
import numpy as np

from .errors import InvalidArgumentError
from .layout import Mat2D, Packed4D, Role
from .numerics import WIDEN_TABLE, DType, as_f32

VLEN_CHOICES = (128, 256, 512, 1024)


class Phase(str, Enum):
    PREFILL = "prefill"
    DECODE = "decode"


@dataclass(frozen=True)
class Mmt4dFlags:
    accumulate: bool = False


@dataclass(frozen=True)
class KernelKey:
    m0: int
    n0: int
    k0: int
    lhs_dtype: DType
    rhs_dtype: DType
    acc_dtype: DType
    phase: Phase

    def __post_init__(self):
        if min(self.m0, self.n0, self.k0) < 1:
            raise InvalidArgumentError(f"tile sizes must be >= 1: {self}")
        if self.phase is Phase.DECODE and self.m0 != 1:
            raise InvalidArgumentError(f"decode kernels need m0 == 1, got {self.m0}")


Kernel = Callable[..., Packed4D]


# -- numba cores --------------------------------------------------------------


@numba.njit(nogil=True, cache=True)
def _reference_core(lhs, rhs, acc, accumulate, t0, t1):
    n1 = acc.shape[1]
    m0 = acc.shape[2]
    n0 = acc.shape[3]
    k1 = lhs.shape[1]
    k0 = lhs.shape[3]
    for t in range(t0, t1):
        i = t // n1
        j = t % n1
        for r in range(m0):
            for s in range(n0):
                v = acc[i, j, r, s] if accumulate else np.float32(0.0)
                for p in range(k1):
                    for c in range(k0):
                        v += lhs[i, p, r, c] * rhs[j, p, s, c]
                acc[i, j, r, s] = v


@numba.njit(nogil=True, cache=True)
def _reference_core_f16(lhs, rhs, acc, table, accumulate, t0, t1):
    n1 = acc.shape[1]
    m0 = acc.shape[2]
    n0 = acc.shape[3]
    k1 = lhs.shape[1]
    k0 = lhs.shape[3]
    for t in range(t0, t1):
        i = t // n1
        j = t % n1
        for r in range(m0):
            for s in range(n0):
                v = acc[i, j, r, s] if accumulate else np.float32(0.0)
                for p in range(k1):
                    for c in range(k0):
                        v += table[lhs[i, p, r, c]] * table[rhs[j, p, s, c]]
                acc[i, j, r, s] = v


@numba.njit(nogil=True, cache=True)
def _prefill_core(lhs, rhs, acc, table, accumulate, t0, t1):
    # lhs/rhs hold f16 bit patterns; table widens them.
    n1 = acc.shape[1]
    m0 = acc.shape[2]
    n0 = acc.shape[3]
    k1 = lhs.shape[1]
    block = np.empty((m0, n0), dtype=np.float32)
    b_row = np.empty(n0, dtype=np.float32)
    for t in range(t0, t1):
        i = t // n1
        j = t % n1
        if accumulate:
            for r in range(m0):
                for s in range(n0):
                    block[r, s] = acc[i, j, r, s]
        else:
            block[:, :] = np.float32(0.0)
        # the m0 x n0 block stays in registers for the whole K loop
        for p in range(k1):
            for s in range(n0):
                b_row[s] = table[rhs[j, p, s, 0]]
            for r in range(m0):
                a = table[lhs[i, p, r, 0]]
                for s in range(n0):
                    block[r, s] += a * b_row[s]
        for r in range(m0):
            for s in range(n0):
                acc[i, j, r, s] = block[r, s]


@numba.njit(nogil=True, cache=True)
def _decode_core(lhs, rhs, acc, table, accumulate, t0, t1):
    n1 = acc.shape[1]
    n0 = acc.shape[3]
    k1 = lhs.shape[1]
    row = np.empty(n0, dtype=np.float32)
    for t in range(t0, t1):
        i = t // n1
        j = t % n1
        if accumulate:
            for s in range(n0):
                row[s] = acc[i, j, 0, s]
        else:
            row[:] = np.float32(0.0)
        for p in range(k1):
            a = table[lhs[i, p, 0, 0]]  # broadcast scalar
            for s in range(n0):
                row[s] += a * table[rhs[j, p, s, 0]]
        for s in range(n0):
            acc[i, j, 0, s] = row[s]


@numba.njit(nogil=True, cache=True)
def _naive_core(a, b, c, r0, r1):
    n = b.shape[1]
    k = a.shape[1]
    for i in range(r0, r1):
        for j in range(n):
            v = np.float32(0.0)
            for p in range(k):
                v += a[i, p] * b[p, j]
            c[i, j] = v


# -- python entry points ----------------------------------------------------


def _check_operands(lhs: Packed4D, rhs: Packed4D, acc: Packed4D) -> None:
    if (lhs.role, rhs.role, acc.role) != (Role.LHS, Role.RHS_T, Role.ACC):
        raise InvalidArgumentError(
            f"operand roles {lhs.role.value}/{rhs.role.value}/{acc.role.value}, "
            "expected lhs/rhs_t/acc"
        )
    m1, k1, m0, k0 = lhs.shape
    n1, rk1, n0, rk0 = rhs.shape
    if (rk1, rk0) != (k1, k0):
        raise InvalidArgumentError(f"K tiling mismatch: lhs {lhs.shape} vs rhs {rhs.shape}")
    if acc.shape != (m1, n1, m0, n0):
        raise InvalidArgumentError(
            f"accumulator shape {acc.shape} does not match {(m1, n1, m0, n0)}"
        )
    if acc.dtype is not DType.F32:
        raise InvalidArgumentError("accumulator must be f32")


def _tile_range(acc: Packed4D, tiles: Optional[tuple[int, int]]) -> tuple[int, int]:
    total = acc.outer0 * acc.outer1
    if tiles is None:
        return 0, total
    t0, t1 = tiles
    if not 0 <= t0 <= t1 <= total:
        raise InvalidArgumentError(f"tile range {tiles} outside grid of {total}")
    return t0, t1


def mmt4d_reference(
    lhs: Packed4D,
    rhs: Packed4D,
    acc: Packed4D,
    flags: Mmt4dFlags = Mmt4dFlags(),
    vlen_bits: Optional[int] = None,
    tiles: Optional[tuple[int, int]] = None,
) -> Packed4D:
    """Generic mmt4d over any tile sizes; f16 or f32 inputs, f32 accumulator.

    ``vlen_bits`` is accepted for signature compatibility and ignored.
    """
    _check_operands(lhs, rhs, acc)
    t0, t1 = _tile_range(acc, tiles)
    if lhs.dtype is DType.F16 and rhs.dtype is DType.F16:
        _reference_core_f16(
            lhs.data.view(np.uint16), rhs.data.view(np.uint16), acc.data, WIDEN_TABLE,
            flags.accumulate, t0, t1,
        )
    else:
        _reference_core(as_f32(lhs.data), as_f32(rhs.data), acc.data, flags.accumulate, t0, t1)
    return acc


def _check_f16_inputs(lhs: Packed4D, rhs: Packed4D) -> None:
    if lhs.dtype is not DType.F16 or rhs.dtype is not DType.F16:
        raise InvalidArgumentError("f16xf16->f32 kernel given non-f16 inputs")


def _check_vlen(vlen_bits) -> int:
    if vlen_bits not in VLEN_CHOICES:
        raise InvalidArgumentError(f"vlen_bits must be one of {VLEN_CHOICES}, got {vlen_bits}")
    return vlen_bits


def mmt4d_prefill_f16f16f32(
    lhs: Packed4D,
    rhs: Packed4D,
    acc: Packed4D,
    flags: Mmt4dFlags = Mmt4dFlags(),
    vlen_bits: Optional[int] = None,
    tiles: Optional[tuple[int, int]] = None,
) -> Packed4D:
    """GEMM microkernel for 6 x VLEN/8 x 1 tiles."""
    _check_operands(lhs, rhs, acc)
    _check_f16_inputs(lhs, rhs)
    vlen = _check_vlen(vlen_bits)
    _, _, m0, k0 = lhs.shape
    n0 = rhs.inner0
    if (m0, n0, k0) != (6, vlen // 8, 1):
        raise InvalidArgumentError(
            f"prefill kernel needs tiles 6x{vlen // 8}x1 at vlen {vlen}, got {m0}x{n0}x{k0}"
        )
    t0, t1 = _tile_range(acc, tiles)
    _prefill_core(
        lhs.data.view(np.uint16), rhs.data.view(np.uint16), acc.data, WIDEN_TABLE,
        flags.accumulate, t0, t1,
    )
    return acc


def mmt4d_decode_f16f16f32(
    lhs: Packed4D,
    rhs: Packed4D,
    acc: Packed4D,
    flags: Mmt4dFlags = Mmt4dFlags(),
    vlen_bits: Optional[int] = None,
    tiles: Optional[tuple[int, int]] = None,
) -> Packed4D:
    """GEMV microkernel for 1 x VLEN/4 x 1 tiles. Any M1 is accepted."""
    _check_operands(lhs, rhs, acc)
    _check_f16_inputs(lhs, rhs)
    vlen = _check_vlen(vlen_bits)
    _, _, m0, k0 = lhs.shape
    n0 = rhs.inner0
    if (m0, n0, k0) != (1, vlen // 4, 1):
        raise InvalidArgumentError(
            f"decode kernel needs tiles 1x{vlen // 4}x1 at vlen {vlen}, got {m0}x{n0}x{k0}"
        )
    t0, t1 = _tile_range(acc, tiles)
    _decode_core(
        lhs.data.view(np.uint16), rhs.data.view(np.uint16), acc.data, WIDEN_TABLE,
        flags.accumulate, t0, t1,
    )
    return acc


def naive_matmul(
    a: Mat2D, b: Mat2D, rows: Optional[tuple[int, int]] = None, out: Optional[np.ndarray] = None
) -> np.ndarray:
    """Unpacked i-j-k triple loop, widening inputs and summing K in order.

    Returns the float32 ``(M, N)`` result. ``rows`` restricts the work to a
    half-open row range of ``out`` (which must then be supplied).
    """
    if a.cols != b.rows:
        raise InvalidArgumentError(f"inner dims differ: {a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    if out is None:
        out = np.zeros((a.rows, b.cols), dtype=np.float32)
    r0, r1 = rows if rows is not None else (0, a.rows)
    _naive_core(as_f32(a.data), as_f32(b.data), out, r0, r1)
    return out


# -- registry -----------------------------------------------------------------


@dataclass
class KernelRegistry:
    fallback: Kernel = mmt4d_reference
    _table: dict = field(default_factory=dict)

    def register(self, key: KernelKey, kernel: Kernel) -> None:
        self._table[key] = kernel

    def lookup(self, key: KernelKey) -> Kernel:
        return self._table.get(key, self.fallback)

    def __contains__(self, key: KernelKey) -> bool:
        return key in self._table

    def keys(self):
        return list(self._table)


def default_registry() -> KernelRegistry:
    reg = KernelRegistry()
    f16, f32 = DType.F16, DType.F32
    for vlen in VLEN_CHOICES:
        reg.register(KernelKey(6, vlen // 8, 1, f16, f16, f32, Phase.PREFILL), mmt4d_prefill_f16f16f32)
        reg.register(KernelKey(1, vlen // 4, 1, f16, f16, f32, Phase.DECODE), mmt4d_decode_f16f16f32)
    return reg


DEFAULT_REGISTRY = default_registry()


def registry_lookup(key: KernelKey, registry: KernelRegistry = DEFAULT_REGISTRY) -> Kernel:
    return registry.lookup(key)
