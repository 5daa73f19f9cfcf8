#!/usr/bin/env python3
"""Plan and time one prefill and one decode matmul at every supported VLEN.

    python scripts/vlen_sweep.py --threads 1
"""
import argparse
import sys
from dataclasses import dataclass

from mmt4d.bench import MatmulShape, WorkloadSpec, run_bench
from mmt4d.encoding import estimate_register_footprint, select_tiles
from mmt4d.ir import ContractionDesc, TargetDesc
from mmt4d.kernels import VLEN_CHOICES, Phase


@dataclass
class Config:
    prefill: tuple[int, int, int] = (64, 1024, 1024)
    decode: tuple[int, int, int] = (1, 2048, 2048)
    threads: int = 1
    reps: int = 3
    seed: int = 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--threads", type=int, default=Config.threads)
    ap.add_argument("--reps", type=int, default=Config.reps)
    ap.add_argument("--seed", type=int, default=Config.seed)
    ns = ap.parse_args(argv)
    cfg = Config(threads=ns.threads, reps=ns.reps, seed=ns.seed)

    print("vlen,phase,m0,n0,k0,acc_regs,microkernel_gflops,speedup_vs_naive")
    for vlen in VLEN_CHOICES:
        for phase, dims in ((Phase.PREFILL, cfg.prefill), (Phase.DECODE, cfg.decode)):
            tiles = select_tiles(ContractionDesc(*dims), TargetDesc(vlen))
            wl = WorkloadSpec(f"{phase.value}-{vlen}", phase, [MatmulShape(*dims)], cfg.reps, (cfg.threads,))
            rows = run_bench([wl], vlen=vlen, seed=cfg.seed, paths=("naive", "packed-microkernel")).rows
            micro = rows[-1]
            print(f"{vlen},{phase.value},{tiles.m0},{tiles.n0},{tiles.k0},"
                  f"{estimate_register_footprint(tiles)},{micro.gflops:.3f},{micro.speedup_vs_naive:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
