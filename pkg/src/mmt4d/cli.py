"""Command line: ``python -m mmt4d {plan,verify,bench,trace}``.

Exit codes: 0 success, 1 usage, 2 verification failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bench import PRESETS, WorkloadSpec, run_bench
from .encoding import estimate_register_footprint, materialize_encoding, select_tiles
from .errors import InvalidArgumentError, UnsupportedEncodingError, ValidationError, VerificationError
from .ir import ContractionDesc, Mmt4d, PackLhs, PackRhs, PhaseHint, TargetDesc, format_program, matmul_program, parse_program
from .kernels import VLEN_CHOICES
from .layout import Mat2D, dump_packed
from .numerics import DType
from .oracle import random_f16
from .runtime import ExecSession, execute
from .verify import run_verify

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _vlen(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"vlen must be an integer, got {text!r}")
    if v not in VLEN_CHOICES:
        raise argparse.ArgumentTypeError(f"vlen {v} not in {{{','.join(map(str, VLEN_CHOICES))}}}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _vlen_list(text: str) -> list[int]:
    return [_vlen(t) for t in text.split(",") if t.strip()]


def _types(text: str) -> tuple[DType, DType, DType]:
    try:
        ins, acc = text.split("->")
        lt, rt = ins.split("x")
        return DType(lt), DType(rt), DType(acc)
    except ValueError:
        raise argparse.ArgumentTypeError(f"types look like f16xf16->f32, got {text!r}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--vlen", type=_vlen, default=256, help="vector register width in bits (default 256)")
    p.add_argument("--threads", type=_int_list, default=None,
                   help="worker count(s), comma separated (bench default: the workload's list; else 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", type=Path, default=None, help="write output here instead of stdout")
    return p


def _shape_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--m", type=int, required=required)
    p.add_argument("--n", type=int, required=required)
    p.add_argument("--k", type=int, required=required)
    p.add_argument("--types", type=_types, default=(DType.F16, DType.F16, DType.F32),
                   help="lhs x rhs -> acc element types (default f16xf16->f32)")
    p.add_argument("--phase", choices=[h.value for h in PhaseHint], default="auto")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="mmt4d", description="Packed f16 matmul engine: planning, verification, tracing, benchmarks.")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    plan = sub.add_parser("plan", parents=[common], help="show tile sizes and accumulator register use")
    _shape_args(plan)

    ver = sub.add_parser("verify", parents=[common], help="randomized check of the rewritten pipeline against the oracle")
    ver.add_argument("--cases", type=int, default=200)
    ver.add_argument("--vlens", type=_vlen_list, default=[128, 256], help="VLENs to cycle through (default 128,256)")
    ver.add_argument("--max-m", type=int, default=12)
    ver.add_argument("--max-n", type=int, default=12)
    ver.add_argument("--max-k", type=int, default=12)
    ver.add_argument("--case", type=int, default=None, help="rerun a single case index")

    preset_help = ", ".join(
        f"{name} (m={wl.matmuls[0].m}, n={wl.matmuls[0].n}, k={wl.matmuls[0].k})" for name, wl in PRESETS.items()
    )
    bench = sub.add_parser(
        "bench", parents=[common], help="time naive vs packed paths",
        description="Presets are arbitrary power-of-two desk-scale shapes, not published "
                    f"benchmark shapes: {preset_help}.",
    )
    src = bench.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), default=None)
    src.add_argument("--workload", type=Path, default=None, help="JSON workload file")
    bench.add_argument("--reps", type=int, default=None, help="override the workload's repetitions")

    trace = sub.add_parser("trace", parents=[common], help="print the micro-IR before and after encoding")
    _shape_args(trace, required=False)
    trace.add_argument("--program", type=Path, default=None, help="read a textual program instead of --m/--n/--k")
    trace.add_argument("--dump-dir", type=Path, default=None,
                       help="run on seeded random data and write packed operands as PK4D files")
    return parser


def _emit(text: str, out) -> int:
    if out is None:
        sys.stdout.write(text)
        return EXIT_OK
    try:
        out.write_text(text)
    except OSError as exc:
        print(f"error: cannot write {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _desc(args) -> ContractionDesc:
    return ContractionDesc(args.m, args.n, args.k, *args.types, PhaseHint(args.phase))


def cmd_plan(args) -> int:
    desc = _desc(args)
    try:
        cfg = select_tiles(desc, TargetDesc(args.vlen))
    except UnsupportedEncodingError as exc:
        print(f"error: {exc}; this matmul runs on the naive path", file=sys.stderr)
        return EXIT_USAGE
    text = (
        f"{cfg.phase.value} tiles {cfg.m0}x{cfg.n0}x{cfg.k0}, acc regs {estimate_register_footprint(cfg)}\n"
        f"vlen {cfg.vlen_bits}, grid {-(-desc.m // cfg.m0)}x{-(-desc.n // cfg.n0)}x{-(-desc.k // cfg.k0)} tiles\n"
    )
    return _emit(text, args.out)


def cmd_verify(args) -> int:
    threads = (args.threads or [1])[0]
    report = run_verify(
        cases=args.cases, seed=args.seed, vlens=args.vlens, max_m=args.max_m,
        max_n=args.max_n, max_k=args.max_k, threads=threads, only_case=args.case,
    )
    lines = [report.summary()]
    if report.failures:
        first = report.failures[0]
        lines.append("first failure: " + first.describe())
        lines.append(f"reproduce: mmt4d verify --seed {args.seed} --case {first.case.index} "
                     f"--max-m {args.max_m} --max-n {args.max_n} --max-k {args.max_k} "
                     f"--vlens {','.join(map(str, args.vlens))}")
    status = _emit("\n".join(lines) + "\n", args.out)
    return status if status else (EXIT_OK if report.ok else EXIT_VERIFY)


def cmd_bench(args) -> int:
    if args.workload is not None:
        try:
            wl = WorkloadSpec.load(args.workload)
        except OSError as exc:
            print(f"error: cannot read {args.workload}: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        wl = PRESETS[args.preset or "prefill-default"]
    wl = WorkloadSpec(
        wl.name, wl.phase, wl.matmuls,
        args.reps if args.reps is not None else wl.repetitions,
        tuple(args.threads) if args.threads else wl.threads,
    )
    report = run_bench([wl], vlen=args.vlen, seed=args.seed, log=lambda m: print(m, file=sys.stderr))
    return _emit(report.render(args.format), args.out)


def cmd_trace(args) -> int:
    target = TargetDesc(args.vlen, (args.threads or [1])[0])
    if args.program is not None:
        try:
            prog = parse_program(args.program.read_text())
        except OSError as exc:
            print(f"error: cannot read {args.program}: {exc}", file=sys.stderr)
            return EXIT_IO
    elif None in (args.m, args.n, args.k):
        print("error: trace needs --m, --n and --k, or --program", file=sys.stderr)
        return EXIT_USAGE
    else:
        prog = matmul_program(_desc(args))
    after = materialize_encoding(prog, target)
    text = "// before\n" + format_program(prog) + "// after\n" + format_program(after)
    status = _emit(text, args.out)
    if status or args.dump_dir is None:
        return status

    rng = np.random.default_rng(args.seed)
    inputs = {}
    for node in prog.inputs:
        x = random_f16(rng, (node.rows, node.cols))
        inputs[node.result] = Mat2D(x if node.dtype is DType.F16 else x.astype(np.float32))
    session = ExecSession(target)
    execute(after, inputs, session)
    try:
        args.dump_dir.mkdir(parents=True, exist_ok=True)
        for node in after.nodes:
            if isinstance(node, (PackLhs, PackRhs, Mmt4d)):
                path = args.dump_dir / f"{node.result}.pk4d"
                with open(path, "wb") as fh:
                    dump_packed(session.values[node.result], fh)
                print(f"wrote {path}", file=sys.stderr)
    except OSError as exc:
        print(f"error: cannot write dumps: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


COMMANDS = {"plan": cmd_plan, "verify": cmd_verify, "bench": cmd_bench, "trace": cmd_trace}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        if exc.code in (None, 0):
            raise
        return int(exc.code)
    try:
        return COMMANDS[args.cmd](args)
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (InvalidArgumentError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
