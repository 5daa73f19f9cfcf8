"""Tile planning and the matmul -> pack/mmt4d/unpack rewrite."""

from __future__ import annotations

import math

from .errors import UnsupportedEncodingError
from .ir import (
    ContractionDesc, Matmul, Mmt4d, PackLhs, PackRhs, PhaseHint, Program, TargetDesc,
    TileConfig, UnpackAcc, validate,
)
from .kernels import Mmt4dFlags, Phase
from .numerics import DType

SUPPORTED_TYPES = (DType.F16, DType.F16, DType.F32)
F32_BITS = 32


def select_phase(desc: ContractionDesc) -> Phase:
    """GEMV (m == 1) is decode, everything else prefill, unless hinted."""
    if desc.phase_hint is PhaseHint.PREFILL:
        return Phase.PREFILL
    if desc.phase_hint is PhaseHint.DECODE:
        return Phase.DECODE
    return Phase.DECODE if desc.m == 1 else Phase.PREFILL


def select_tiles(desc: ContractionDesc, target: TargetDesc) -> TileConfig:
    if desc.dtypes != SUPPORTED_TYPES:
        names = "x".join(d.value for d in desc.dtypes[:2]) + "->" + desc.acc_dtype.value
        raise UnsupportedEncodingError(f"no tiled encoding for {names}")
    return TileConfig.for_phase(select_phase(desc), target.vlen_bits)


def register_footprint(m0: int, n0: int, vlen_bits: int) -> int:
    """VLEN-wide registers needed to hold an m0 x n0 block of f32 accumulators."""
    return math.ceil(m0 * n0 * F32_BITS / vlen_bits)


def estimate_register_footprint(cfg: TileConfig) -> int:
    return register_footprint(cfg.m0, cfg.n0, cfg.vlen_bits)


def _fresh(base: str, taken: set) -> str:
    name, i = base, 1
    while name in taken:
        name = f"{base}{i}"
        i += 1
    taken.add(name)
    return name


def materialize_encoding(prog: Program, target: TargetDesc) -> Program:
    """Replace every supported Matmul by pack_lhs, pack_rhs, mmt4d, unpack_acc.

    Matmuls without a tiled encoding stay as they are. Already-lowered nodes
    pass through, so the rewrite is idempotent.
    """
    validate(prog)
    taken = {n.result for n in prog.nodes}
    nodes = []
    for node in prog.nodes:
        if not isinstance(node, Matmul):
            nodes.append(node)
            continue
        try:
            cfg = select_tiles(node.desc, target)
        except UnsupportedEncodingError:
            nodes.append(node)
            continue
        d = node.desc
        lhs = _fresh(f"{node.result}_lhs", taken)
        rhs = _fresh(f"{node.result}_rhs", taken)
        acc = _fresh(f"{node.result}_acc", taken)
        nodes += [
            PackLhs(lhs, node.lhs, cfg.m0, cfg.k0),
            PackRhs(rhs, node.rhs, cfg.n0, cfg.k0),
            Mmt4d(acc, lhs, rhs, cfg, Mmt4dFlags(accumulate=False)),
            UnpackAcc(node.result, acc, d.m, d.n),
        ]
    return validate(Program(nodes, prog.outputs))
