"""Micro-IR: contraction programs before and after encoding materialization.

Text format, one node per line::

    %a = input() {shape = 128x2048, dtype = f16}
    %b = input() {shape = 2048x2048, dtype = f16}
    %c = matmul(%a, %b) {shape = 128x2048x2048, types = f16xf16->f32, phase = auto}
    return %c

After ``materialize_encoding`` the matmul line becomes::

    %c_lhs = pack_lhs(%a) {tiles = 6x1}
    %c_rhs = pack_rhs(%b) {tiles = 32x1}
    %c_acc = mmt4d(%c_lhs, %c_rhs) {tiles = 6x32x1, phase = prefill, vlen = 256, accumulate = false}
    %c = unpack_acc(%c_acc) {shape = 128x2048}

``shape`` on matmul is MxNxK. An accumulating mmt4d takes the prior
accumulator as a third operand. Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from .errors import InvalidArgumentError, ValidationError
from .kernels import VLEN_CHOICES, Mmt4dFlags, Phase
from .numerics import DType


class PhaseHint(str, Enum):
    AUTO = "auto"
    PREFILL = "prefill"
    DECODE = "decode"


@dataclass(frozen=True)
class TargetDesc:
    vlen_bits: int = 256
    num_threads: int = 1

    def __post_init__(self):
        if self.vlen_bits not in VLEN_CHOICES:
            raise InvalidArgumentError(
                f"vlen {self.vlen_bits} not in {{{','.join(map(str, VLEN_CHOICES))}}}"
            )
        if self.num_threads < 1:
            raise InvalidArgumentError(f"num_threads must be >= 1, got {self.num_threads}")


@dataclass(frozen=True)
class ContractionDesc:
    m: int
    n: int
    k: int
    lhs_dtype: DType = DType.F16
    rhs_dtype: DType = DType.F16
    acc_dtype: DType = DType.F32
    phase_hint: PhaseHint = PhaseHint.AUTO

    def __post_init__(self):
        if min(self.m, self.n, self.k) < 1:
            raise InvalidArgumentError(f"matmul extents must be >= 1: {self.m}x{self.n}x{self.k}")

    @property
    def dtypes(self) -> tuple[DType, DType, DType]:
        return self.lhs_dtype, self.rhs_dtype, self.acc_dtype


@dataclass(frozen=True)
class TileConfig:
    m0: int
    n0: int
    k0: int
    phase: Phase
    vlen_bits: int

    def __post_init__(self):
        expected = tiles_for(self.phase, self.vlen_bits)
        if (self.m0, self.n0, self.k0) != expected:
            raise InvalidArgumentError(
                f"{self.phase.value} tiles at vlen {self.vlen_bits} must be "
                f"{'x'.join(map(str, expected))}, got {self.m0}x{self.n0}x{self.k0}"
            )

    @property
    def tiles(self) -> tuple[int, int, int]:
        return self.m0, self.n0, self.k0

    @classmethod
    def for_phase(cls, phase: Phase, vlen_bits: int) -> "TileConfig":
        return cls(*tiles_for(phase, vlen_bits), phase, vlen_bits)


def tiles_for(phase: Phase, vlen_bits: int) -> tuple[int, int, int]:
    """Inner tile sizes (m0, n0, k0) for a phase; n0 counts elements."""
    if vlen_bits not in VLEN_CHOICES:
        raise InvalidArgumentError(f"vlen {vlen_bits} not in {VLEN_CHOICES}")
    if phase is Phase.PREFILL:
        return 6, vlen_bits // 8, 1
    return 1, vlen_bits // 4, 1


# -- nodes --------------------------------------------------------------------


@dataclass(frozen=True)
class Input:
    result: str
    rows: int
    cols: int
    dtype: DType = DType.F16

    @property
    def operands(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class Matmul:
    result: str
    lhs: str
    rhs: str
    desc: ContractionDesc

    @property
    def operands(self) -> tuple[str, ...]:
        return self.lhs, self.rhs


@dataclass(frozen=True)
class PackLhs:
    result: str
    src: str
    m0: int
    k0: int

    @property
    def operands(self) -> tuple[str, ...]:
        return (self.src,)


@dataclass(frozen=True)
class PackRhs:
    result: str
    src: str
    n0: int
    k0: int

    @property
    def operands(self) -> tuple[str, ...]:
        return (self.src,)


@dataclass(frozen=True)
class Mmt4d:
    result: str
    lhs: str
    rhs: str
    config: TileConfig
    flags: Mmt4dFlags = Mmt4dFlags()
    acc: Optional[str] = None

    @property
    def operands(self) -> tuple[str, ...]:
        return (self.lhs, self.rhs) + ((self.acc,) if self.acc is not None else ())


@dataclass(frozen=True)
class UnpackAcc:
    result: str
    src: str
    m: int
    n: int

    @property
    def operands(self) -> tuple[str, ...]:
        return (self.src,)


Node = Union[Input, Matmul, PackLhs, PackRhs, Mmt4d, UnpackAcc]


@dataclass(frozen=True)
class Program:
    nodes: tuple = ()
    outputs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "outputs", tuple(self.outputs))

    @property
    def inputs(self) -> list[Input]:
        return [n for n in self.nodes if isinstance(n, Input)]

    def producer(self, value: str) -> Optional[Node]:
        for node in self.nodes:
            if node.result == value:
                return node
        return None

    def __str__(self):
        return format_program(self)


def matmul_program(desc: ContractionDesc, lhs="a", rhs="b", result="c") -> Program:
    """One-matmul program with its two operand inputs."""
    return Program(
        [
            Input(lhs, desc.m, desc.k, desc.lhs_dtype),
            Input(rhs, desc.k, desc.n, desc.rhs_dtype),
            Matmul(result, lhs, rhs, desc),
        ],
        [result],
    )


# -- validation -----------------------------------------------------------------


@dataclass(frozen=True)
class _MatType:
    rows: int
    cols: int
    dtype: DType


@dataclass(frozen=True)
class _PackedType:
    kind: str  # "lhs" | "rhs" | "acc"
    dims: tuple  # logical (rows, cols)
    tiles: tuple  # inner tile sizes
    dtype: DType


def infer_types(prog: Program) -> dict:
    """Type every value of ``prog``; raises ValidationError listing bad nodes."""
    types: dict = {}
    bad: list[str] = []
    reasons: list[str] = []

    def fail(node, why):
        bad.append(node.result)
        reasons.append(f"{node.result}: {why}")

    for node in prog.nodes:
        if node.result in types:
            fail(node, "value defined twice")
            continue
        missing = [v for v in node.operands if v not in types]
        if missing:
            fail(node, f"uses undefined value(s) {', '.join(missing)}")
            continue
        ops = [types[v] for v in node.operands]

        if isinstance(node, Input):
            if node.rows < 1 or node.cols < 1:
                fail(node, "input extents must be >= 1")
                continue
            types[node.result] = _MatType(node.rows, node.cols, node.dtype)
        elif isinstance(node, Matmul):
            a, b = ops
            d = node.desc
            if not (isinstance(a, _MatType) and isinstance(b, _MatType)):
                fail(node, "matmul operands must be 2-D matrices")
            elif (a.rows, a.cols, b.rows, b.cols) != (d.m, d.k, d.k, d.n):
                fail(node, f"operands {a.rows}x{a.cols} @ {b.rows}x{b.cols} "
                           f"disagree with {d.m}x{d.n}x{d.k}")
            elif (a.dtype, b.dtype) != (d.lhs_dtype, d.rhs_dtype):
                fail(node, "operand dtypes disagree with matmul types")
            else:
                types[node.result] = _MatType(d.m, d.n, d.acc_dtype)
        elif isinstance(node, (PackLhs, PackRhs)):
            (src,) = ops
            if not isinstance(src, _MatType):
                fail(node, "pack source must be a 2-D matrix")
            elif isinstance(node, PackLhs):
                types[node.result] = _PackedType("lhs", (src.rows, src.cols), (node.m0, node.k0), src.dtype)
            else:
                types[node.result] = _PackedType("rhs", (src.rows, src.cols), (node.n0, node.k0), src.dtype)
        elif isinstance(node, Mmt4d):
            lhs_p, rhs_p = prog.producer(node.lhs), prog.producer(node.rhs)
            cfg = node.config
            lt, rt = ops[0], ops[1]
            if not isinstance(lhs_p, PackLhs) or not isinstance(rhs_p, PackRhs):
                fail(node, "mmt4d operands must come from pack_lhs and pack_rhs")
            elif (lhs_p.m0, lhs_p.k0) != (cfg.m0, cfg.k0) or (rhs_p.n0, rhs_p.k0) != (cfg.n0, cfg.k0):
                fail(node, "pack tiles do not match mmt4d tiles")
            elif lt.dims[1] != rt.dims[0]:
                fail(node, f"K extents differ ({lt.dims[1]} vs {rt.dims[0]})")
            else:
                acc_t = _PackedType("acc", (lt.dims[0], rt.dims[1]), (cfg.m0, cfg.n0), DType.F32)
                if node.flags.accumulate != (node.acc is not None):
                    fail(node, "accumulate flag requires exactly one accumulator operand")
                elif node.acc is not None and ops[2] != acc_t:
                    fail(node, "accumulator operand has the wrong shape or tiles")
                else:
                    types[node.result] = acc_t
        elif isinstance(node, UnpackAcc):
            (src,) = ops
            if not isinstance(src, _PackedType) or src.kind != "acc":
                fail(node, "unpack_acc source must be an mmt4d accumulator")
            elif (node.m, node.n) != src.dims:
                fail(node, f"unpack extent {node.m}x{node.n} differs from {src.dims}")
            else:
                types[node.result] = _MatType(node.m, node.n, src.dtype)
        else:
            bad.append(getattr(node, "result", "?"))
            reasons.append(f"unknown node {node!r}")

    for out in prog.outputs:
        if out not in types and out not in bad:
            bad.append(out)
            reasons.append(f"{out}: output is never defined")

    if bad:
        raise ValidationError("invalid program: " + "; ".join(reasons), bad)
    return types


def validate(prog: Program) -> Program:
    infer_types(prog)
    return prog


# -- text format --------------------------------------------------------------


def _dims(*xs: int) -> str:
    return "x".join(str(x) for x in xs)


def _attrs(**kw) -> str:
    return "{" + ", ".join(f"{k} = {v}" for k, v in kw.items()) + "}"


def format_node(node: Node) -> str:
    if isinstance(node, Input):
        op, attrs = "input", _attrs(shape=_dims(node.rows, node.cols), dtype=node.dtype.value)
    elif isinstance(node, Matmul):
        d = node.desc
        types = f"{d.lhs_dtype.value}x{d.rhs_dtype.value}->{d.acc_dtype.value}"
        op = "matmul"
        attrs = _attrs(shape=_dims(d.m, d.n, d.k), types=types, phase=d.phase_hint.value)
    elif isinstance(node, PackLhs):
        op, attrs = "pack_lhs", _attrs(tiles=_dims(node.m0, node.k0))
    elif isinstance(node, PackRhs):
        op, attrs = "pack_rhs", _attrs(tiles=_dims(node.n0, node.k0))
    elif isinstance(node, Mmt4d):
        c = node.config
        op = "mmt4d"
        attrs = _attrs(
            tiles=_dims(*c.tiles), phase=c.phase.value, vlen=c.vlen_bits,
            accumulate=str(node.flags.accumulate).lower(),
        )
    elif isinstance(node, UnpackAcc):
        op, attrs = "unpack_acc", _attrs(shape=_dims(node.m, node.n))
    else:
        raise InvalidArgumentError(f"cannot format {node!r}")
    args = ", ".join(f"%{v}" for v in node.operands)
    return f"%{node.result} = {op}({args}) {attrs}"


def format_program(prog: Program) -> str:
    lines = [format_node(n) for n in prog.nodes]
    if prog.outputs:
        lines.append("return " + ", ".join(f"%{v}" for v in prog.outputs))
    return "\n".join(lines) + "\n"


_VALUE = r"%([A-Za-z0-9_.]+)"
_NODE_RE = re.compile(rf"^{_VALUE}\s*=\s*(\w+)\(([^)]*)\)\s*(?:\{{(.*)\}})?$")


def _parse_dims(text: str, count: int) -> tuple[int, ...]:
    parts = text.split("x")
    if len(parts) != count:
        raise ValueError(f"expected {count} dims in {text!r}")
    return tuple(int(p) for p in parts)


def parse_node(line: str) -> Node:
    m = _NODE_RE.match(line.strip())
    if not m:
        raise InvalidArgumentError(f"cannot parse IR line: {line!r}")
    result, op, args_text, attrs_text = m.groups()
    args = [a.strip() for a in args_text.split(",") if a.strip()]
    if not all(a.startswith("%") for a in args):
        raise InvalidArgumentError(f"operands must be %values: {line!r}")
    args = [a[1:] for a in args]
    attrs = {}
    for item in (attrs_text or "").split(","):
        if item.strip():
            key, _, val = item.partition("=")
            attrs[key.strip()] = val.strip()

    try:
        if op == "input":
            rows, cols = _parse_dims(attrs["shape"], 2)
            return Input(result, rows, cols, DType(attrs.get("dtype", "f16")))
        if op == "matmul":
            mm, nn, kk = _parse_dims(attrs["shape"], 3)
            ins, acc = attrs.get("types", "f16xf16->f32").split("->")
            lt, rt = ins.split("x")
            desc = ContractionDesc(
                mm, nn, kk, DType(lt), DType(rt), DType(acc), PhaseHint(attrs.get("phase", "auto"))
            )
            return Matmul(result, args[0], args[1], desc)
        if op == "pack_lhs":
            m0, k0 = _parse_dims(attrs["tiles"], 2)
            return PackLhs(result, args[0], m0, k0)
        if op == "pack_rhs":
            n0, k0 = _parse_dims(attrs["tiles"], 2)
            return PackRhs(result, args[0], n0, k0)
        if op == "mmt4d":
            m0, n0, k0 = _parse_dims(attrs["tiles"], 3)
            cfg = TileConfig(m0, n0, k0, Phase(attrs["phase"]), int(attrs["vlen"]))
            accumulate = attrs.get("accumulate", "false") == "true"
            acc = args[2] if len(args) > 2 else None
            return Mmt4d(result, args[0], args[1], cfg, Mmt4dFlags(accumulate), acc)
        if op == "unpack_acc":
            mm, nn = _parse_dims(attrs["shape"], 2)
            return UnpackAcc(result, args[0], mm, nn)
    except (KeyError, IndexError, ValueError) as exc:
        raise InvalidArgumentError(f"bad {op} line {line!r}: {exc}") from None
    raise InvalidArgumentError(f"unknown op {op!r}")


def parse_program(text: str) -> Program:
    nodes, outputs = [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("return"):
            rest = line[len("return"):]
            outputs.extend(v.strip()[1:] for v in rest.split(",") if v.strip())
            continue
        nodes.append(parse_node(line))
    return Program(nodes, outputs)
