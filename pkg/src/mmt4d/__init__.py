"""Packed f16 x f16 -> f32 matmul engine with VLEN-aware tiling.

Matrices are packed into contiguous tiles, multiplied by phase-specific
mmt4d microkernels (GEMM for prefill, GEMV for decode) and unpacked.
"""

from .encoding import estimate_register_footprint, materialize_encoding, select_phase, select_tiles
from .errors import (
    ExecutionError, InvalidArgumentError, UnsupportedEncodingError, ValidationError, VerificationError,
)
from .ir import ContractionDesc, PhaseHint, Program, TargetDesc, TileConfig, matmul_program
from .kernels import (
    DEFAULT_REGISTRY, KernelKey, KernelRegistry, Mmt4dFlags, Phase, mmt4d_decode_f16f16f32,
    mmt4d_prefill_f16f16f32, mmt4d_reference, naive_matmul, registry_lookup,
)
from .layout import Mat2D, Packed4D, Role, pack_lhs, pack_rhs, unpack_acc
from .numerics import DType, f16_to_f32, f32_to_f16
from .runtime import ExecSession, execute, parallel_mmt4d

__all__ = [
    "ContractionDesc", "DEFAULT_REGISTRY", "DType", "ExecSession", "ExecutionError",
    "InvalidArgumentError", "KernelKey", "KernelRegistry", "Mat2D", "Mmt4dFlags", "Packed4D",
    "Phase", "PhaseHint", "Program", "Role", "TargetDesc", "TileConfig",
    "UnsupportedEncodingError", "ValidationError", "VerificationError",
    "estimate_register_footprint", "execute", "f16_to_f32", "f32_to_f16",
    "materialize_encoding", "matmul_program", "mmt4d_decode_f16f16f32",
    "mmt4d_prefill_f16f16f32", "mmt4d_reference", "naive_matmul", "pack_lhs", "pack_rhs",
    "parallel_mmt4d", "registry_lookup", "select_phase", "select_tiles", "unpack_acc",
]
