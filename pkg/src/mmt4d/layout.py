"""Row-major matrices and the 4-D tiled layout consumed by mmt4d.

Three packed roles exist:

* ``LHS``   -- ``A[M, K]`` stored as ``[M1][K1][m0][k0]``
* ``RHS_T`` -- ``B[K, N]`` stored transposed as ``[N1][K1][n0][k0]``
* ``ACC``   -- ``C[M, N]`` stored as ``[M1][N1][m0][n0]``

Every tile occupies one contiguous run of the buffer. Partial edge tiles
are padded with +0.0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import BinaryIO

import numpy as np

from .errors import InvalidArgumentError
from .numerics import DType, to_f16


class Role(str, Enum):
    LHS = "lhs"
    RHS_T = "rhs_t"
    ACC = "acc"


def _dtype_of(arr: np.ndarray) -> DType:
    if arr.dtype == np.float16:
        return DType.F16
    if arr.dtype == np.float32:
        return DType.F32
    raise InvalidArgumentError(f"unsupported element type {arr.dtype}")


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True, eq=False)
class Mat2D:
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise InvalidArgumentError(f"Mat2D needs a 2-D array, got shape {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise InvalidArgumentError(f"Mat2D extents must be >= 1, got {self.data.shape}")
        _dtype_of(self.data)
        object.__setattr__(self, "data", np.ascontiguousarray(self.data))

    @classmethod
    def from_values(cls, values, dtype: DType = DType.F16) -> "Mat2D":
        """Build a matrix from nested lists/arrays, rounding to ``dtype``."""
        if dtype is DType.F16:
            return cls(to_f16(values))
        return cls(np.asarray(values, dtype=np.float32))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def dtype(self) -> DType:
        return _dtype_of(self.data)

    def __repr__(self):
        return f"Mat2D({self.rows}x{self.cols}, {self.dtype.value})"


@dataclass(frozen=True, eq=False)
class Packed4D:
    data: np.ndarray  # (outer0, outer1, inner0, inner1), C-contiguous
    role: Role
    orig_rows: int
    orig_cols: int

    def __post_init__(self):
        if self.data.ndim != 4:
            raise InvalidArgumentError(f"Packed4D needs a 4-D array, got shape {self.data.shape}")
        _dtype_of(self.data)
        if not self.data.flags.c_contiguous:
            raise InvalidArgumentError("Packed4D data must be C-contiguous")
        d0, d1 = self.logical_dims
        if self.outer0 != ceil_div(d0, self.inner0) or self.outer1 != ceil_div(d1, self.inner1):
            raise InvalidArgumentError(
                f"{self.role.value} tile grid {self.data.shape} does not cover "
                f"{self.orig_rows}x{self.orig_cols}"
            )

    @property
    def outer0(self) -> int:
        return self.data.shape[0]

    @property
    def outer1(self) -> int:
        return self.data.shape[1]

    @property
    def inner0(self) -> int:
        return self.data.shape[2]

    @property
    def inner1(self) -> int:
        return self.data.shape[3]

    @property
    def dtype(self) -> DType:
        return _dtype_of(self.data)

    @property
    def logical_dims(self) -> tuple[int, int]:
        """Logical extents along (outer0, outer1).

        RHS_T is stored transposed, so its dim0 is N (orig_cols).
        """
        if self.role is Role.RHS_T:
            return self.orig_cols, self.orig_rows
        return self.orig_rows, self.orig_cols

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @classmethod
    def zeros_acc(cls, m: int, n: int, m0: int, n0: int) -> "Packed4D":
        _check_tiles(m0, n0)
        data = np.zeros((ceil_div(m, m0), ceil_div(n, n0), m0, n0), dtype=np.float32)
        return cls(data, Role.ACC, m, n)

    def __repr__(self):
        return f"Packed4D({self.role.value}, {list(self.shape)}, {self.dtype.value})"


def _check_tiles(*tiles: int) -> None:
    for t in tiles:
        if int(t) < 1:
            raise InvalidArgumentError(f"tile sizes must be >= 1, got {tiles}")


def _pad_to(data: np.ndarray, rows: int, cols: int) -> np.ndarray:
    if data.shape == (rows, cols):
        return data
    out = np.zeros((rows, cols), dtype=data.dtype)
    out[: data.shape[0], : data.shape[1]] = data
    return out


def pack_lhs(a: Mat2D, m0: int, k0: int) -> Packed4D:
    _check_tiles(m0, k0)
    m, k = a.rows, a.cols
    m1, k1 = ceil_div(m, m0), ceil_div(k, k0)
    padded = _pad_to(a.data, m1 * m0, k1 * k0)
    tiles = padded.reshape(m1, m0, k1, k0).transpose(0, 2, 1, 3)
    return Packed4D(np.ascontiguousarray(tiles), Role.LHS, m, k)


def pack_rhs(b: Mat2D, n0: int, k0: int) -> Packed4D:
    _check_tiles(n0, k0)
    k, n = b.rows, b.cols
    n1, k1 = ceil_div(n, n0), ceil_div(k, k0)
    padded = _pad_to(b.data, k1 * k0, n1 * n0)
    tiles = padded.reshape(k1, k0, n1, n0).transpose(2, 0, 3, 1)
    return Packed4D(np.ascontiguousarray(tiles), Role.RHS_T, k, n)


def pack_acc(c: Mat2D, m0: int, n0: int) -> Packed4D:
    """Pack an existing result matrix as an accumulator (float32)."""
    _check_tiles(m0, n0)
    m, n = c.rows, c.cols
    m1, n1 = ceil_div(m, m0), ceil_div(n, n0)
    padded = _pad_to(c.data.astype(np.float32), m1 * m0, n1 * n0)
    tiles = padded.reshape(m1, m0, n1, n0).transpose(0, 2, 1, 3)
    return Packed4D(np.ascontiguousarray(tiles), Role.ACC, m, n)


def unpack_acc(acc: Packed4D, m: int, n: int) -> Mat2D:
    if acc.role is not Role.ACC:
        raise InvalidArgumentError(f"unpack_acc needs an ACC tensor, got {acc.role.value}")
    m1, n1, m0, n0 = acc.shape
    if not (1 <= m <= m1 * m0 and 1 <= n <= n1 * n0):
        raise InvalidArgumentError(
            f"requested {m}x{n} exceeds padded extent {m1 * m0}x{n1 * n0}"
        )
    full = acc.data.transpose(0, 2, 1, 3).reshape(m1 * m0, n1 * n0)
    return Mat2D(full[:m, :n].copy())


# -- PK4D binary dump -------------------------------------------------------
#
# Header: b"PK4D" then eight little-endian uint32 fields
#   outer0, outer1, inner0, inner1, orig_rows, orig_cols, dtype, role
# followed by the raw little-endian element buffer.

PK4D_MAGIC = b"PK4D"
_HEADER = struct.Struct("<4s8I")
_DTYPE_CODES = {DType.F16: 0, DType.F32: 1}
_ROLE_CODES = {Role.LHS: 0, Role.RHS_T: 1, Role.ACC: 2}


def dump_packed(p: Packed4D, fh: BinaryIO) -> None:
    header = _HEADER.pack(
        PK4D_MAGIC, *p.shape, p.orig_rows, p.orig_cols, _DTYPE_CODES[p.dtype], _ROLE_CODES[p.role]
    )
    fh.write(header)
    fh.write(p.data.astype(p.data.dtype.newbyteorder("<"), copy=False).tobytes())


def load_packed(fh: BinaryIO) -> Packed4D:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise InvalidArgumentError("truncated PK4D header")
    magic, o0, o1, i0, i1, rows, cols, dcode, rcode = _HEADER.unpack(raw)
    if magic != PK4D_MAGIC:
        raise InvalidArgumentError(f"bad PK4D magic {magic!r}")
    try:
        dtype = {v: k for k, v in _DTYPE_CODES.items()}[dcode]
        role = {v: k for k, v in _ROLE_CODES.items()}[rcode]
    except KeyError as exc:
        raise InvalidArgumentError(f"unknown PK4D code {exc}") from None
    count = o0 * o1 * i0 * i1
    np_dtype = np.dtype(dtype.numpy).newbyteorder("<")
    payload = fh.read(count * np_dtype.itemsize)
    if len(payload) != count * np_dtype.itemsize:
        raise InvalidArgumentError("truncated PK4D payload")
    data = np.frombuffer(payload, dtype=np_dtype).astype(dtype.numpy).reshape(o0, o1, i0, i1)
    return Packed4D(data, role, rows, cols)
