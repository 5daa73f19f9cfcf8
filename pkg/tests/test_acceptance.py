"""Acceptance criteria 1-8. Each test prints one line; the session summary lists them all.

JIT compilation is paid in a warmup call before any timed region: the budgets
bound the operation, not numba's one-off compile.
"""
import os
import time

import numpy as np
import pytest

from mmt4d.bench import PRESETS, WorkloadSpec, run_bench
from mmt4d.encoding import materialize_encoding, select_tiles
from mmt4d.ir import ContractionDesc, Input, Matmul, Program, TargetDesc, TileConfig, matmul_program
from mmt4d.kernels import (
    VLEN_CHOICES, Mmt4dFlags, Phase, mmt4d_decode_f16f16f32, mmt4d_prefill_f16f16f32, mmt4d_reference,
)
from mmt4d.layout import Mat2D, Packed4D, Role, pack_lhs, pack_rhs, unpack_acc
from mmt4d.numerics import DType, narrow_to_bits, widen_bits
from mmt4d.oracle import random_f16
from mmt4d.runtime import parallel_mmt4d
from mmt4d.verify import run_verify

F16, F32 = DType.F16, DType.F32
KERNELS = {Phase.PREFILL: mmt4d_prefill_f16f16f32, Phase.DECODE: mmt4d_decode_f16f16f32}


def report(criterion, ok, detail):
    print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")


def test_c1_f16_exhaustive_round_trip():
    bits = np.arange(1 << 16, dtype=np.uint32).astype(np.uint16)
    widen_bits(bits[:4]), narrow_to_bits(np.zeros(4, np.float32))
    t0 = time.perf_counter()
    wide = widen_bits(bits)
    back = narrow_to_bits(wide)
    elapsed = time.perf_counter() - t0
    nan = np.isnan(wide)
    exact = np.array_equal(back[~nan], bits[~nan])
    nan_class = bool(np.isnan(widen_bits(back[nan])).all()) and nan.sum() == 2 * 1023
    ok = exact and nan_class and elapsed < 1.0
    report(1, ok, f"65536 patterns, non-NaN exact={exact}, NaN class kept={nan_class}, {elapsed:.3f}s < 1s")
    assert exact and nan_class
    assert elapsed < 1.0


def test_c2_pack_unpack_round_trip():
    tiles = (1, 2, 3, 6, 8)
    t0 = time.perf_counter()
    checked = 0
    for m in range(1, 18):
        for k in range(1, 18):
            a = np.arange(1, m * k + 1, dtype=np.float32).reshape(m, k).astype(np.float16)
            mat = Mat2D(a)
            for t0_ in tiles:
                for t1_ in tiles:
                    # LHS layout
                    p = pack_lhs(mat, t0_, t1_)
                    view = p.data.transpose(0, 2, 1, 3).reshape(p.outer0 * t0_, p.outer1 * t1_)
                    assert np.array_equal(view[:m, :k], a)
                    pad = view.copy()
                    pad[:m, :k] = 0
                    assert not pad.view(np.uint16).any()  # +0.0 bits only
                    # ACC layout: unpack(pack(x)) == x
                    acc = Packed4D(np.zeros_like(p.data, dtype=np.float32), Role.ACC, m, k)
                    acc.data[...] = p.data
                    assert np.array_equal(unpack_acc(acc, m, k).data, a.astype(np.float32))
                    # RHS-transposed layout of a K x N matrix
                    r = pack_rhs(mat, t0_, t1_)
                    rview = r.data.transpose(1, 3, 0, 2).reshape(r.outer1 * t1_, r.outer0 * t0_)
                    assert np.array_equal(rview[:m, :k], a)
                    rpad = rview.copy()
                    rpad[:m, :k] = 0
                    assert not rpad.view(np.uint16).any()
                    checked += 1
    elapsed = time.perf_counter() - t0
    ok = elapsed < 10.0
    report(2, ok, f"{checked} (M,K,tile) combos, identity and +0 padding, {elapsed:.2f}s < 10s")
    assert elapsed < 10.0


def test_c3_pipeline_matches_oracle():
    run_verify(cases=4, seed=99)
    t0 = time.perf_counter()
    rep = run_verify(cases=500, seed=0, vlens=(128, 256), max_m=12, max_n=12, max_k=12)
    elapsed = time.perf_counter() - t0
    detail = rep.summary() if rep.ok else f"{rep.summary()}, {rep.failures[0].describe()}"
    report(3, rep.ok and elapsed < 30.0, f"{detail} vs widening oracle, {elapsed:.2f}s < 30s")
    assert rep.ok, detail
    assert rep.total == 500
    assert elapsed < 30.0


def _random_case(rng, cfg):
    m = 1 if cfg.phase is Phase.DECODE else int(rng.integers(1, 3 * cfg.m0 + 2))
    n = int(rng.integers(1, 2 * cfg.n0 + 2))
    k = int(rng.integers(1, 24))
    return m, n, k, random_f16(rng, (m, k)), random_f16(rng, (k, n))


def test_c4_microkernels_equal_reference():
    configs = [TileConfig.for_phase(ph, v) for ph in Phase for v in VLEN_CHOICES]
    for cfg in configs:  # compile
        _single(cfg, *_random_case(np.random.default_rng(0), cfg)[3:])
    t0 = time.perf_counter()
    bad = []
    for ci, cfg in enumerate(configs):
        rng = np.random.default_rng([4, ci])
        kernel = KERNELS[cfg.phase]
        for _ in range(1000):
            m, n, k, a, b = _random_case(rng, cfg)
            lhs = pack_lhs(Mat2D(a), cfg.m0, cfg.k0)
            rhs = pack_rhs(Mat2D(b), cfg.n0, cfg.k0)
            init = rng.standard_normal((lhs.outer0, rhs.outer0, cfg.m0, cfg.n0)).astype(np.float32)
            flags = Mmt4dFlags(accumulate=bool(rng.integers(2)))
            want = Packed4D(init.copy(), Role.ACC, m, n)
            got = Packed4D(init.copy(), Role.ACC, m, n)
            mmt4d_reference(lhs, rhs, want, flags)
            kernel(lhs, rhs, got, flags, vlen_bits=cfg.vlen_bits)
            if not np.array_equal(got.data, want.data):
                bad.append((cfg.tiles, cfg.vlen_bits, "reference"))
            if k >= 2:
                split = int(rng.integers(1, k))
                whole = _single(cfg, a, b)
                parts = Packed4D.zeros_acc(m, n, cfg.m0, cfg.n0)
                kernel(pack_lhs(Mat2D(a[:, :split]), cfg.m0, cfg.k0), pack_rhs(Mat2D(b[:split]), cfg.n0, cfg.k0),
                       parts, Mmt4dFlags(False), vlen_bits=cfg.vlen_bits)
                kernel(pack_lhs(Mat2D(a[:, split:]), cfg.m0, cfg.k0), pack_rhs(Mat2D(b[split:]), cfg.n0, cfg.k0),
                       parts, Mmt4dFlags(True), vlen_bits=cfg.vlen_bits)
                if not np.array_equal(parts.data, whole.data):
                    bad.append((cfg.tiles, cfg.vlen_bits, "k-split"))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60.0
    report(4, ok, f"{len(configs)} configs x 1000 cases plus K-splits, {len(bad)} mismatches, {elapsed:.2f}s < 60s")
    assert not bad, bad[:5]
    assert elapsed < 60.0


def _single(cfg, a, b):
    acc = Packed4D.zeros_acc(a.shape[0], b.shape[1], cfg.m0, cfg.n0)
    KERNELS[cfg.phase](pack_lhs(Mat2D(a), cfg.m0, cfg.k0), pack_rhs(Mat2D(b), cfg.n0, cfg.k0), acc,
                       vlen_bits=cfg.vlen_bits)
    return acc.data


@pytest.mark.parametrize(
    "vlen, prefill, decode", [(256, (6, 32, 1), (1, 64, 1)), (128, (6, 16, 1), (1, 32, 1))]
)
def test_c5_planner_tiles(vlen, prefill, decode):
    target = TargetDesc(vlen)
    got_p = select_tiles(ContractionDesc(128, 2048, 2048), target)
    got_d = select_tiles(ContractionDesc(1, 2048, 2048), target)
    ok = (got_p.tiles, got_p.phase, got_d.tiles, got_d.phase) == (prefill, Phase.PREFILL, decode, Phase.DECODE)
    report(5, ok, f"VLEN {vlen}: prefill {got_p.tiles}, decode {got_d.tiles}")
    assert got_p.tiles == prefill and got_p.phase is Phase.PREFILL
    assert got_d.tiles == decode and got_d.phase is Phase.DECODE


def test_c6_thread_count_determinism():
    m, n, k = 128, 2048, 2048
    rng = np.random.default_rng(6)
    cfg = select_tiles(ContractionDesc(m, n, k), TargetDesc(256))
    lhs = pack_lhs(Mat2D(random_f16(rng, (m, k))), cfg.m0, cfg.k0)
    rhs = pack_rhs(Mat2D(random_f16(rng, (k, n))), cfg.n0, cfg.k0)
    digests = {}
    for threads in (1, 2, 4, 8):
        acc = Packed4D.zeros_acc(m, n, cfg.m0, cfg.n0)
        parallel_mmt4d(lhs, rhs, acc, cfg, threads=threads, debug_ownership=True)
        digests[threads] = unpack_acc(acc, m, n).data.tobytes()
    ok = len(set(digests.values())) == 1
    report(6, ok, f"{m}x{n}x{k} prefill, threads 1/2/4/8 bit-identical={ok}")
    assert ok


def test_c7a_microkernel_beats_naive():
    wl = PRESETS["prefill-default"]
    single = WorkloadSpec(wl.name, wl.phase, wl.matmuls, wl.repetitions, (1,))
    t0 = time.perf_counter()
    rep = run_bench([single], vlen=256, paths=("naive", "packed-microkernel"))
    elapsed = time.perf_counter() - t0
    naive, micro = rep.rows
    speedup = micro.matmuls_per_s / naive.matmuls_per_s
    ok = speedup >= 2.0 and elapsed < 300
    report("7a", ok, f"prefill preset 1 thread: microkernel {speedup:.1f}x naive (need >= 2x), {elapsed:.1f}s")
    assert speedup >= 2.0
    assert elapsed < 300


CORES = len(os.sched_getaffinity(0))


@pytest.mark.skipif(CORES < 8, reason=f"needs >= 8 cores, host has {CORES}")
def test_c7b_eight_thread_scaling():
    m, n, k = PRESETS["prefill-default"].matmuls[0].m, 2048, 2048
    rng = np.random.default_rng(7)
    cfg = select_tiles(ContractionDesc(m, n, k), TargetDesc(256))
    lhs = pack_lhs(Mat2D(random_f16(rng, (m, k))), cfg.m0, cfg.k0)
    rhs = pack_rhs(Mat2D(random_f16(rng, (k, n))), cfg.n0, cfg.k0)

    def median_ns(threads, reps=5):
        samples = []
        for i in range(reps + 1):
            acc = Packed4D.zeros_acc(m, n, cfg.m0, cfg.n0)
            t = time.perf_counter_ns()
            parallel_mmt4d(lhs, rhs, acc, cfg, threads=threads)
            if i:  # first run is warmup
                samples.append(time.perf_counter_ns() - t)
        return float(np.median(samples))

    scale = median_ns(1) / median_ns(8)
    report("7b", scale >= 3.0, f"parallel_mmt4d 8 threads = {scale:.2f}x its 1-thread throughput (need >= 3x)")
    assert scale >= 3.0


def test_c8_rewrite_idempotent_and_f32_passthrough():
    prog = Program(
        [
            Input("x", 1, 64), Input("w", 64, 96), Input("y", 20, 64),
            Input("g", 20, 64, F32), Input("f", 64, 96, F32),
            Matmul("d", "x", "w", ContractionDesc(1, 96, 64)),
            Matmul("p", "y", "w", ContractionDesc(20, 96, 64)),
            Matmul("q", "g", "f", ContractionDesc(20, 96, 64, F32, F32, F32)),
        ],
        ["d", "p", "q"],
    )
    results = []
    for vlen in VLEN_CHOICES:
        once = materialize_encoding(prog, TargetDesc(vlen))
        twice = materialize_encoding(once, TargetDesc(vlen))
        f32_kept = [n for n in once.nodes if isinstance(n, Matmul)] == [prog.nodes[-1]]
        results.append(twice == once and f32_kept)
    lone = matmul_program(ContractionDesc(8, 8, 8, F32, F32, F32))
    lone_kept = materialize_encoding(lone, TargetDesc()) == lone
    ok = all(results) and lone_kept
    report(8, ok, f"idempotent at every VLEN={all(results)}, f32 matmul unchanged={lone_kept}")
    assert all(results) and lone_kept
