"""Prefill/decode benchmark harness.

Each workload matmul is timed along three paths:

* ``naive``               -- unpacked triple loop (rows split across threads)
* ``packed-reference``    -- pack, generic mmt4d kernel, unpack
* ``packed-microkernel``  -- pack, registry-dispatched microkernel, unpack

Before timing, every path is checked against the oracle on a small probe
shape; a path that disagrees aborts the run instead of producing numbers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .encoding import materialize_encoding
from .errors import InvalidArgumentError, VerificationError
from .ir import ContractionDesc, Mmt4d, PhaseHint, TargetDesc, matmul_program
from .kernels import KernelRegistry, Phase
from .layout import Mat2D
from .numerics import DType
from .oracle import first_mismatch, oracle_matmul, random_f16
from .runtime import ExecSession, execute, parallel_naive_matmul

PATHS = ("naive", "packed-reference", "packed-microkernel")


@dataclass(frozen=True)
class MatmulShape:
    m: int
    n: int
    k: int
    lhs_dtype: DType = DType.F16
    rhs_dtype: DType = DType.F16
    acc_dtype: DType = DType.F32


@dataclass
class WorkloadSpec:
    name: str
    phase: Phase
    matmuls: list
    repetitions: int = 3
    threads: tuple = (1,)

    def __post_init__(self):
        self.phase = Phase(self.phase)
        self.threads = tuple(int(t) for t in self.threads)
        if self.repetitions < 1:
            raise InvalidArgumentError(f"repetitions must be >= 1, got {self.repetitions}")
        if not self.matmuls:
            raise InvalidArgumentError(f"workload {self.name!r} has no matmuls")
        if not self.threads or min(self.threads) < 1:
            raise InvalidArgumentError(f"thread counts must be >= 1, got {self.threads}")
        if self.phase is Phase.DECODE and any(mm.m != 1 for mm in self.matmuls):
            raise InvalidArgumentError(f"decode workload {self.name!r} needs m == 1 everywhere")

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadSpec":
        try:
            matmuls = []
            for mm in d["matmuls"]:
                types = mm.get("types", "f16xf16->f32")
                ins, acc = types.split("->")
                lt, rt = ins.split("x")
                matmuls.append(MatmulShape(int(mm["m"]), int(mm["n"]), int(mm["k"]),
                                           DType(lt), DType(rt), DType(acc)))
            return cls(
                name=d["name"],
                phase=Phase(d["phase"]),
                matmuls=matmuls,
                repetitions=int(d.get("repetitions", 3)),
                threads=tuple(d.get("threads", (1,))),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidArgumentError(f"invalid workload: {exc}") from None

    @classmethod
    def load(cls, path) -> "WorkloadSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


# Desk-scale defaults; not the shapes of any published measurement.
PRESETS = {
    "prefill-default": WorkloadSpec("prefill-default", Phase.PREFILL, [MatmulShape(128, 2048, 2048)], 3, (1, 8)),
    "decode-default": WorkloadSpec("decode-default", Phase.DECODE, [MatmulShape(1, 2048, 2048)], 3, (1, 8)),
}


@dataclass
class BenchRow:
    workload: str
    phase: str
    path: str
    threads: int
    m: int
    n: int
    k: int
    m0: int
    n0: int
    k0: int
    reps: int
    wall_ns: int
    matmuls_per_s: float
    gflops: float
    speedup_vs_naive: float


COLUMNS = [f.name for f in fields(BenchRow)]


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    # sha256 of each path's output buffer; equal seeds give equal digests
    digests: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.rows], indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise InvalidArgumentError(f"unknown format {fmt!r}")


def rows_from_csv(text: str) -> list[BenchRow]:
    types = {f.name: f.type for f in fields(BenchRow)}
    conv = {"str": str, "int": int, "float": float}
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append(BenchRow(**{k: conv[types[k]](v) for k, v in rec.items()}))
    return out


def rows_from_json(text: str) -> list[BenchRow]:
    return [BenchRow(**d) for d in json.loads(text)]


def warmup_count(reps: int) -> int:
    return max(1, reps // 5)


def _path_runner(path: str, shape: MatmulShape, phase: Phase, vlen: int, threads: int) -> tuple[Callable, tuple]:
    """Return (fn(a, b) -> float32 result, tile sizes or zeros)."""
    if path == "naive":
        return (lambda a, b: parallel_naive_matmul(a, b, threads)), (0, 0, 0)
    desc = ContractionDesc(shape.m, shape.n, shape.k, shape.lhs_dtype, shape.rhs_dtype,
                           shape.acc_dtype, PhaseHint(phase.value))
    target = TargetDesc(vlen, threads)
    prog = materialize_encoding(matmul_program(desc), target)
    mmt = [n for n in prog.nodes if isinstance(n, Mmt4d)]
    tiles = mmt[0].config.tiles if mmt else (0, 0, 0)
    registry = KernelRegistry() if path == "packed-reference" else ExecSession().registry

    def run(a, b):
        session = ExecSession(target, registry)
        return execute(prog, {"a": a, "b": b}, session)["c"].data.astype(np.float32, copy=False)

    return run, tiles


def _operands(rng, shape: MatmulShape) -> tuple[Mat2D, Mat2D]:
    def make(dtype, dims):
        x = random_f16(rng, dims)
        return Mat2D(x if dtype is DType.F16 else x.astype(np.float32))

    return make(shape.lhs_dtype, (shape.m, shape.k)), make(shape.rhs_dtype, (shape.k, shape.n))


def probe_path(path: str, shape: MatmulShape, phase: Phase, vlen: int, threads: int, seed: int) -> None:
    """Raise VerificationError unless ``path`` matches the oracle on a small shape."""
    probe = MatmulShape(1 if phase is Phase.DECODE else 7, 37, 13,
                        shape.lhs_dtype, shape.rhs_dtype, shape.acc_dtype)
    a, b = _operands(np.random.default_rng([seed, 1]), probe)
    run, _ = _path_runner(path, probe, phase, vlen, threads)
    got = run(a, b)
    want = oracle_matmul(a.data, b.data)
    if probe.acc_dtype is DType.F16:
        want = want.astype(np.float16).astype(np.float32)
    idx = first_mismatch(got, want)
    if idx is not None:
        raise VerificationError(
            f"path {path} (threads={threads}) disagrees with the oracle on probe "
            f"{probe.m}x{probe.n}x{probe.k} at index {idx}"
        )


def time_path(run: Callable, a: Mat2D, b: Mat2D, reps: int) -> tuple[int, np.ndarray]:
    """Median wall time (ns) over ``reps`` timed runs after warmup."""
    result = None
    for _ in range(warmup_count(reps)):
        result = run(a, b)
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        result = run(a, b)
        samples.append(time.perf_counter_ns() - t0)
    return int(statistics.median(samples)), result


def run_bench(
    workloads: Sequence[WorkloadSpec],
    vlen: int = 256,
    seed: int = 0,
    paths: Sequence[str] = PATHS,
    log: Callable[[str], None] = lambda msg: None,
) -> BenchReport:
    if "naive" not in paths:
        raise InvalidArgumentError("the naive path is the speedup baseline and cannot be skipped")
    report = BenchReport()
    for wl in workloads:
        for threads in wl.threads:
            for path in paths:
                probe_path(path, wl.matmuls[0], wl.phase, vlen, threads, seed)
        for idx, shape in enumerate(wl.matmuls):
            a, b = _operands(np.random.default_rng([seed, 0, idx]), shape)
            flops = 2.0 * shape.m * shape.n * shape.k
            for threads in wl.threads:
                naive_ns = None
                for path in paths:
                    run, tiles = _path_runner(path, shape, wl.phase, vlen, threads)
                    wall_ns, result = time_path(run, a, b, wl.repetitions)
                    if path == "naive":
                        naive_ns = wall_ns
                    key = (wl.name, idx, path, threads)
                    report.digests[key] = hashlib.sha256(result.tobytes()).hexdigest()
                    row = BenchRow(
                        workload=wl.name, phase=wl.phase.value, path=path, threads=threads,
                        m=shape.m, n=shape.n, k=shape.k, m0=tiles[0], n0=tiles[1], k0=tiles[2],
                        reps=wl.repetitions, wall_ns=wall_ns,
                        matmuls_per_s=1e9 / wall_ns,
                        gflops=flops / wall_ns,
                        speedup_vs_naive=naive_ns / wall_ns,
                    )
                    report.rows.append(row)
                    log(f"{wl.name} {path:<19} threads={threads} {wall_ns / 1e6:9.2f} ms "
                        f"{row.gflops:7.3f} GFLOP/s x{row.speedup_vs_naive:.2f}")
    return report
