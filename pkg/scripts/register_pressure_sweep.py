#!/usr/bin/env python3
"""Sweep the prefill row-tile m0 at fixed n0 = VLEN/8 and report accumulator
register footprint next to measured throughput of the generic packed kernel.

The footprint column shows where a 32-register vector file (31 usable for
accumulators) would start spilling; the timing column is this host's view.

    python scripts/register_pressure_sweep.py --vlen 256 --m0 1-10
"""
import argparse
import sys
import time
from dataclasses import dataclass

import numpy as np

from mmt4d.encoding import register_footprint
from mmt4d.kernels import mmt4d_reference
from mmt4d.layout import Mat2D, Packed4D, pack_lhs, pack_rhs
from mmt4d.oracle import random_f16

USABLE_REGS = 31


@dataclass
class Config:
    vlen: int = 256
    m0_lo: int = 1
    m0_hi: int = 10
    m: int = 120
    n: int = 1024
    k: int = 512
    reps: int = 5
    seed: int = 0


def parse_args(argv=None) -> Config:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--vlen", type=int, default=Config.vlen)
    ap.add_argument("--m0", default=f"{Config.m0_lo}-{Config.m0_hi}", help="inclusive range lo-hi")
    ap.add_argument("--shape", default=f"{Config.m}x{Config.n}x{Config.k}", help="MxNxK")
    ap.add_argument("--reps", type=int, default=Config.reps)
    ap.add_argument("--seed", type=int, default=Config.seed)
    ns = ap.parse_args(argv)
    lo, hi = (int(x) for x in ns.m0.split("-"))
    m, n, k = (int(x) for x in ns.shape.split("x"))
    return Config(ns.vlen, lo, hi, m, n, k, ns.reps, ns.seed)


def time_tiles(a, b, m0, n0, reps):
    lhs = pack_lhs(Mat2D(a), m0, 1)
    rhs = pack_rhs(Mat2D(b), n0, 1)
    samples = []
    for i in range(reps + 1):
        acc = Packed4D.zeros_acc(a.shape[0], b.shape[1], m0, n0)
        t0 = time.perf_counter_ns()
        mmt4d_reference(lhs, rhs, acc)
        if i:
            samples.append(time.perf_counter_ns() - t0)
    return float(np.median(samples))


def main(argv=None) -> int:
    cfg = parse_args(argv)
    rng = np.random.default_rng(cfg.seed)
    a = random_f16(rng, (cfg.m, cfg.k))
    b = random_f16(rng, (cfg.k, cfg.n))
    n0 = cfg.vlen // 8
    flops = 2.0 * cfg.m * cfg.n * cfg.k
    print("m0,n0,acc_regs,spills,wall_ns,gflops")
    for m0 in range(cfg.m0_lo, cfg.m0_hi + 1):
        regs = register_footprint(m0, n0, cfg.vlen)
        ns = time_tiles(a, b, m0, n0, cfg.reps)
        print(f"{m0},{n0},{regs},{int(regs > USABLE_REGS)},{ns:.0f},{flops / ns:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
