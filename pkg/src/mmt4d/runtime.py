"""Program execution and tile-parallel mmt4d.

Work is split over output tiles, never over K, so every accumulator element
is summed by one worker in the serial order and thread count cannot change
a single output bit. The M1 x N1 tile grid is linearized row-major and cut
into ``threads`` contiguous ranges: whole row-blocks when M1 is large, runs
of N1 tiles when M1 == 1.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import ExecutionError, InvalidArgumentError, ValidationError
from .ir import (
    Input, Matmul, Mmt4d, PackLhs, PackRhs, Program, TargetDesc, TileConfig, UnpackAcc, validate,
)
from .kernels import DEFAULT_REGISTRY, KernelKey, KernelRegistry, Mmt4dFlags, naive_matmul
from .layout import Mat2D, Packed4D, pack_lhs, pack_rhs, unpack_acc
from .numerics import DType, to_f16


def partition_tiles(total: int, threads: int) -> list[tuple[int, int]]:
    """Split ``range(total)`` into ``threads`` contiguous, possibly empty, ranges."""
    if threads < 1:
        raise InvalidArgumentError(f"threads must be >= 1, got {threads}")
    base, extra = divmod(total, threads)
    ranges, start = [], 0
    for w in range(threads):
        stop = start + base + (1 if w < extra else 0)
        ranges.append((start, stop))
        start = stop
    return ranges


def check_ownership(total: int, ranges) -> np.ndarray:
    """Assert every tile has exactly one owning worker; returns the owner map."""
    owner = np.full(total, -1, dtype=np.int64)
    for w, (a, b) in enumerate(ranges):
        if (owner[a:b] != -1).any():
            raise AssertionError(f"worker {w} overlaps tiles already owned in [{a}, {b})")
        owner[a:b] = w
    if (owner == -1).any():
        raise AssertionError(f"tiles {np.flatnonzero(owner == -1)[:8].tolist()} have no owner")
    return owner


def _fan_out(fn, ranges, threads: int) -> None:
    busy = [r for r in ranges if r[1] > r[0]]
    if threads == 1 or len(busy) <= 1:
        for r in busy:
            fn(r)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(fn, r) for r in busy]:
            fut.result()


def parallel_mmt4d(
    lhs: Packed4D,
    rhs: Packed4D,
    acc: Packed4D,
    cfg: TileConfig,
    flags: Mmt4dFlags = Mmt4dFlags(),
    threads: int = 1,
    registry: KernelRegistry = DEFAULT_REGISTRY,
    debug_ownership: bool = False,
) -> Packed4D:
    if (lhs.inner0, rhs.inner0, lhs.inner1) != cfg.tiles:
        raise InvalidArgumentError(
            f"operand tiles {lhs.inner0}x{rhs.inner0}x{lhs.inner1} differ from config {cfg.tiles}"
        )
    key = KernelKey(*cfg.tiles, lhs.dtype, rhs.dtype, acc.dtype, cfg.phase)
    kernel = registry.lookup(key)
    total = acc.outer0 * acc.outer1
    ranges = partition_tiles(total, threads)
    if debug_ownership:
        check_ownership(total, ranges)
    _fan_out(lambda r: kernel(lhs, rhs, acc, flags, vlen_bits=cfg.vlen_bits, tiles=r), ranges, threads)
    return acc


def parallel_naive_matmul(a: Mat2D, b: Mat2D, threads: int = 1) -> np.ndarray:
    """Naive triple loop with output rows split across workers."""
    out = np.zeros((a.rows, b.cols), dtype=np.float32)
    ranges = partition_tiles(a.rows, threads)
    _fan_out(lambda r: naive_matmul(a, b, rows=r, out=out), ranges, threads)
    return out


@dataclass
class ExecSession:
    target: TargetDesc = field(default_factory=TargetDesc)
    registry: KernelRegistry = DEFAULT_REGISTRY
    values: dict = field(default_factory=dict)
    debug_ownership: bool = False


def _run_node(node, session: ExecSession):
    vals = session.values
    threads = session.target.num_threads
    if isinstance(node, Matmul):
        a, b = vals[node.lhs], vals[node.rhs]
        out = parallel_naive_matmul(a, b, threads)
        if node.desc.acc_dtype is DType.F16:
            return Mat2D(to_f16(out))
        return Mat2D(out)
    if isinstance(node, PackLhs):
        return pack_lhs(vals[node.src], node.m0, node.k0)
    if isinstance(node, PackRhs):
        return pack_rhs(vals[node.src], node.n0, node.k0)
    if isinstance(node, Mmt4d):
        lhs, rhs = vals[node.lhs], vals[node.rhs]
        cfg = node.config
        if node.flags.accumulate:
            prior = vals[node.acc]
            acc = Packed4D(prior.data.copy(), prior.role, prior.orig_rows, prior.orig_cols)
        else:
            acc = Packed4D.zeros_acc(lhs.orig_rows, rhs.orig_cols, cfg.m0, cfg.n0)
        return parallel_mmt4d(
            lhs, rhs, acc, cfg, node.flags, threads, session.registry, session.debug_ownership
        )
    if isinstance(node, UnpackAcc):
        return unpack_acc(vals[node.src], node.m, node.n)
    raise ExecutionError(f"cannot execute {type(node).__name__}", node.result)


def execute(
    prog: Program, inputs: Mapping[str, Mat2D], session: Optional[ExecSession] = None
) -> dict:
    """Run ``prog`` and return ``{output id: Mat2D}``."""
    session = session if session is not None else ExecSession()
    try:
        validate(prog)
    except ValidationError as exc:
        raise ExecutionError(str(exc), exc.node_ids[0] if exc.node_ids else None) from exc

    session.values = {}
    for node in prog.nodes:
        if isinstance(node, Input):
            if node.result not in inputs:
                raise ExecutionError("input is not bound", node.result)
            mat = inputs[node.result]
            if (mat.rows, mat.cols, mat.dtype) != (node.rows, node.cols, node.dtype):
                raise ExecutionError(
                    f"bound {mat.rows}x{mat.cols} {mat.dtype.value}, expected "
                    f"{node.rows}x{node.cols} {node.dtype.value}",
                    node.result,
                )
            session.values[node.result] = mat
            continue
        try:
            result = _run_node(node, session)
        except InvalidArgumentError as exc:
            raise ExecutionError(str(exc), node.result) from exc
        if node.result in session.values:
            raise ExecutionError("value bound twice", node.result)
        session.values[node.result] = result
    return {out: session.values[out] for out in prog.outputs}
