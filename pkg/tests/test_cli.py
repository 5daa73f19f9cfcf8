import json

import numpy as np
import pytest

from mmt4d import bench
from mmt4d.bench import (
    COLUMNS, PRESETS, BenchReport, MatmulShape, WorkloadSpec, rows_from_csv, rows_from_json, run_bench,
    warmup_count,
)
from mmt4d.cli import main
from mmt4d.errors import InvalidArgumentError, VerificationError
from mmt4d.kernels import Phase
from mmt4d.layout import load_packed
from mmt4d.verify import run_verify


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- plan ---------------------------------------------------------------------


def test_plan_prefill(capsys):
    code, out, _ = run_cli(capsys, "plan", "--m", "128", "--n", "2048", "--k", "2048", "--vlen", "256")
    assert code == 0
    assert out.splitlines()[0] == "prefill tiles 6x32x1, acc regs 24"


def test_plan_decode(capsys):
    code, out, _ = run_cli(capsys, "plan", "--m", "1", "--n", "2048", "--k", "2048", "--vlen", "256")
    assert code == 0
    assert out.splitlines()[0] == "decode tiles 1x64x1, acc regs 8"


def test_plan_bad_vlen(capsys):
    code, _, err = run_cli(capsys, "plan", "--m", "1", "--n", "2", "--k", "2", "--vlen", "192")
    assert code == 1
    assert "vlen 192 not in {128,256,512,1024}" in err


def test_plan_unsupported_types(capsys):
    code, _, err = run_cli(capsys, "plan", "--m", "4", "--n", "4", "--k", "4", "--types", "f32xf32->f32")
    assert code != 0
    assert "no tiled encoding" in err


def test_usage_errors_exit_1(capsys):
    assert run_cli(capsys, "plan", "--m", "4")[0] == 1
    assert run_cli(capsys, "frobnicate")[0] == 1
    assert run_cli(capsys, "plan", "--m", "0", "--n", "1", "--k", "1")[0] == 1


# -- verify -------------------------------------------------------------------


def test_verify_default(capsys):
    code, out, _ = run_cli(capsys, "verify")
    assert code == 0
    assert out.strip() == "200/200 pass"


def test_verify_zero_cases(capsys):
    code, out, _ = run_cli(capsys, "verify", "--cases", "0")
    assert code == 0
    assert out.strip() == "0/0 pass"


def test_verify_reports_reproducible_failure(capsys, monkeypatch):
    from mmt4d import kernels

    real = kernels._decode_core

    def broken(lhs, rhs, acc, table, accumulate, t0, t1):
        real(lhs, rhs, acc, table, accumulate, t0, t1)
        acc[0, 0, 0, 0] += np.float32(1.0)

    monkeypatch.setattr(kernels, "_decode_core", broken)
    code, out, _ = run_cli(capsys, "verify", "--cases", "40", "--seed", "5")
    assert code == 2
    assert "first failure" in out and "first differing index (0, 0)" in out
    case = int(out.split("--case ")[1].split()[0])
    again = run_verify(cases=40, seed=5, only_case=case)
    assert not again.ok
    assert again.failures[0].describe() in out


# -- trace --------------------------------------------------------------------


def _listing(out, which):
    before, after = out.split("// after\n")
    return (before if which == "before" else after).replace("// before\n", "")


def test_trace_f16(capsys):
    code, out, _ = run_cli(capsys, "trace", "--m", "128", "--n", "2048", "--k", "2048")
    assert code == 0
    ops = [line.split(" = ")[1].split("(")[0] for line in _listing(out, "after").splitlines() if " = " in line]
    assert ops == ["input", "input", "pack_lhs", "pack_rhs", "mmt4d", "unpack_acc"]
    assert "tiles = 6x32x1" in _listing(out, "after")


def test_trace_f32_unchanged(capsys):
    code, out, _ = run_cli(capsys, "trace", "--m", "8", "--n", "8", "--k", "8", "--types", "f32xf32->f32")
    assert code == 0
    assert _listing(out, "before") == _listing(out, "after")


def test_trace_decode_vlen128(capsys):
    code, out, _ = run_cli(capsys, "trace", "--m", "1", "--n", "64", "--k", "64", "--vlen", "128")
    assert code == 0
    assert "mmt4d(%c_lhs, %c_rhs) {tiles = 1x32x1, phase = decode" in out


def test_trace_program_file_and_dumps(capsys, tmp_path):
    src = tmp_path / "prog.ir"
    src.write_text(
        "%x = input() {shape = 5x9, dtype = f16}\n"
        "%w = input() {shape = 9x20, dtype = f16}\n"
        "%y = matmul(%x, %w) {shape = 5x20x9, types = f16xf16->f32, phase = auto}\n"
        "return %y\n"
    )
    dumps = tmp_path / "dumps"
    code, out, err = run_cli(capsys, "trace", "--program", str(src), "--vlen", "128", "--dump-dir", str(dumps))
    assert code == 0
    assert "%y_acc = mmt4d(%y_lhs, %y_rhs) {tiles = 6x16x1" in out
    names = sorted(p.name for p in dumps.iterdir())
    assert names == ["y_acc.pk4d", "y_lhs.pk4d", "y_rhs.pk4d"]
    with open(dumps / "y_acc.pk4d", "rb") as fh:
        acc = load_packed(fh)
    assert acc.shape == (1, 2, 6, 16)


def test_trace_missing_program_is_io_error(capsys, tmp_path):
    assert run_cli(capsys, "trace", "--program", str(tmp_path / "nope.ir"))[0] == 3


def test_trace_needs_shape(capsys):
    assert run_cli(capsys, "trace")[0] == 1


# -- bench --------------------------------------------------------------------


SMALL = {
    "name": "tiny",
    "phase": "prefill",
    "matmuls": [{"m": 9, "n": 40, "k": 17}],
    "repetitions": 1,
    "threads": [1],
}


def test_workload_spec_validation():
    with pytest.raises(InvalidArgumentError):
        WorkloadSpec("d", Phase.DECODE, [MatmulShape(2, 4, 4)])
    with pytest.raises(InvalidArgumentError):
        WorkloadSpec("p", Phase.PREFILL, [MatmulShape(2, 4, 4)], repetitions=0)
    with pytest.raises(InvalidArgumentError):
        WorkloadSpec.from_dict({"name": "x"})
    assert PRESETS["decode-default"].matmuls[0].m == 1
    assert PRESETS["prefill-default"].matmuls[0] == MatmulShape(128, 2048, 2048)


@pytest.mark.parametrize("reps, warm", [(1, 1), (4, 1), (5, 1), (10, 2), (20, 4)])
def test_warmup_count(reps, warm):
    assert warmup_count(reps) == warm


def test_bench_three_rows_per_thread(tmp_path, capsys):
    wl = tmp_path / "w.json"
    wl.write_text(json.dumps(SMALL))
    out = tmp_path / "r.csv"
    code, _, _ = run_cli(capsys, "bench", "--workload", str(wl), "--out", str(out))
    assert code == 0
    text = out.read_text()
    assert text.splitlines()[0] == ",".join(COLUMNS)
    rows = rows_from_csv(text)
    assert [r.path for r in rows] == ["naive", "packed-reference", "packed-microkernel"]
    naive = rows[0]
    for r in rows:
        assert r.speedup_vs_naive == pytest.approx(naive.wall_ns / r.wall_ns, rel=1e-12)
        assert r.gflops == pytest.approx(2 * 9 * 40 * 17 / r.wall_ns, rel=1e-12)
        assert r.reps == 1
    assert (rows[2].m0, rows[2].n0, rows[2].k0) == (6, 32, 1)
    assert (naive.m0, naive.n0, naive.k0) == (0, 0, 0)


def test_bench_columns_exact():
    assert COLUMNS == [
        "workload", "phase", "path", "threads", "m", "n", "k", "m0", "n0", "k0", "reps",
        "wall_ns", "matmuls_per_s", "gflops", "speedup_vs_naive",
    ]


def test_bench_csv_json_same_values():
    wl = WorkloadSpec.from_dict({**SMALL, "threads": [1, 3], "repetitions": 2})
    report = run_bench([wl], vlen=128)
    assert len(report.rows) == 6
    assert rows_from_csv(report.to_csv()) == report.rows
    assert rows_from_json(report.to_json()) == report.rows
    assert rows_from_csv(report.to_csv()) == rows_from_json(report.to_json())


def test_bench_results_deterministic_per_seed():
    wl = WorkloadSpec.from_dict({**SMALL, "threads": [1, 2]})
    one = run_bench([wl], seed=3)
    two = run_bench([wl], seed=3)
    other = run_bench([wl], seed=4)
    assert one.digests == two.digests
    assert one.digests != other.digests
    # all paths and thread counts produce the same bits
    assert len(set(one.digests.values())) == 1


def test_bench_decode_and_f32_workloads():
    wl = WorkloadSpec.from_dict(
        {"name": "gemv", "phase": "decode", "repetitions": 1, "threads": [2],
         "matmuls": [{"m": 1, "n": 70, "k": 9}, {"m": 1, "n": 8, "k": 8, "types": "f32xf32->f32"}]}
    )
    report = run_bench([wl])
    assert len(report.rows) == 6
    assert (report.rows[2].m0, report.rows[2].n0) == (1, 64)
    assert (report.rows[5].m0, report.rows[5].n0) == (0, 0)  # f32 stays naive


def test_bench_refuses_incorrect_path(monkeypatch):
    from mmt4d import kernels

    real = kernels._prefill_core

    def broken(lhs, rhs, acc, table, accumulate, t0, t1):
        real(lhs, rhs, acc, table, accumulate, t0, t1)
        acc[...] = 0.0

    monkeypatch.setattr(kernels, "_prefill_core", broken)
    with pytest.raises(VerificationError, match="packed-microkernel"):
        run_bench([WorkloadSpec.from_dict(SMALL)])


def test_bench_cli_verification_exit_code(monkeypatch, tmp_path, capsys):
    def always_fail(*args, **kwargs):
        raise VerificationError("forced")

    monkeypatch.setattr(bench, "probe_path", always_fail)
    wl = tmp_path / "w.json"
    wl.write_text(json.dumps(SMALL))
    assert run_cli(capsys, "bench", "--workload", str(wl))[0] == 2


def test_bench_io_errors(tmp_path, capsys):
    wl = tmp_path / "w.json"
    wl.write_text(json.dumps(SMALL))
    assert run_cli(capsys, "bench", "--workload", str(tmp_path / "missing.json"))[0] == 3
    assert run_cli(capsys, "bench", "--workload", str(wl), "--out", str(tmp_path / "no" / "dir.csv"))[0] == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "b", "phase": "decode", "matmuls": [{"m": 4, "n": 4, "k": 4}]}))
    assert run_cli(capsys, "bench", "--workload", str(bad))[0] == 1


def test_bench_help_labels_presets(capsys):
    with pytest.raises(SystemExit):
        main(["bench", "--help"])
    out = capsys.readouterr().out
    assert "not published" in out and "prefill-default" in out


def test_empty_report_renders():
    assert BenchReport().to_csv().strip() == ",".join(COLUMNS)
    assert json.loads(BenchReport().to_json()) == []
