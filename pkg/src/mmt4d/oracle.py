"""Brute-force matmul oracle and result comparison.

The oracle widens with numpy's own float16 cast and adds one rank-1 update
per K index, so each output element is summed in ascending K order in
float32, the same order the kernels promise. It shares no code with them.
"""

from __future__ import annotations

from typing import Optional

import numpy as np


def oracle_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a32 = np.asarray(a).astype(np.float32)
    b32 = np.asarray(b).astype(np.float32)
    m, k = a32.shape
    k2, n = b32.shape
    if k != k2:
        raise ValueError(f"inner dims differ: {a32.shape} @ {b32.shape}")
    c = np.zeros((m, n), dtype=np.float32)
    for p in range(k):
        c += a32[:, p, None] * b32[None, p, :]
    return c


def first_mismatch(got: np.ndarray, want: np.ndarray) -> Optional[tuple]:
    """Index of the first element that differs beyond sign of zero, else None.

    NaN matches NaN. A shape difference reports ``()``.
    """
    got = np.asarray(got)
    want = np.asarray(want)
    if got.shape != want.shape:
        return ()
    ok = (got == want) | (np.isnan(got) & np.isnan(want))
    if ok.all():
        return None
    return tuple(int(i) for i in np.argwhere(~ok)[0])


def random_f16(rng: np.random.Generator, shape, scale: float = 1.0, zero_frac: float = 0.1) -> np.ndarray:
    """Finite float16 test data with a sprinkle of signed zeros."""
    x = (rng.standard_normal(shape) * scale).astype(np.float32)
    zeros = rng.random(shape) < zero_frac
    x[zeros] = np.where(rng.random(int(zeros.sum())) < 0.5, 0.0, -0.0)
    return x.astype(np.float16)
