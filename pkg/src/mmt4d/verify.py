"""Randomized equivalence runs: rewritten pipeline vs. the oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .encoding import materialize_encoding
from .ir import ContractionDesc, PhaseHint, TargetDesc, matmul_program
from .layout import Mat2D
from .oracle import first_mismatch, oracle_matmul, random_f16
from .runtime import ExecSession, execute


@dataclass(frozen=True)
class CaseSpec:
    index: int
    m: int
    n: int
    k: int
    vlen: int
    hint: PhaseHint


@dataclass
class Mismatch:
    case: CaseSpec
    seed: int
    index: tuple
    got: float
    want: float

    def describe(self) -> str:
        c = self.case
        return (
            f"case {c.index}: m={c.m} n={c.n} k={c.k} vlen={c.vlen} phase={c.hint.value} "
            f"seed={self.seed} first differing index {self.index}: got {self.got!r}, want {self.want!r}"
        )


@dataclass
class VerifyReport:
    total: int = 0
    passed: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def summary(self) -> str:
        return f"{self.passed}/{self.total} pass"


def case_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, index, stream])


def draw_case(seed: int, index: int, max_m: int, max_n: int, max_k: int, vlens: Sequence[int]) -> CaseSpec:
    rng = case_rng(seed, index, 0)
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(1, max_n + 1))
    k = int(rng.integers(1, max_k + 1))
    hint = [PhaseHint.AUTO, PhaseHint.AUTO, PhaseHint.PREFILL, PhaseHint.DECODE][int(rng.integers(4))]
    return CaseSpec(index, m, n, k, vlens[index % len(vlens)], hint)


def run_case(seed: int, case: CaseSpec, threads: int = 1) -> Optional[Mismatch]:
    rng = case_rng(seed, case.index, 1)
    a = random_f16(rng, (case.m, case.k))
    b = random_f16(rng, (case.k, case.n))

    desc = ContractionDesc(case.m, case.n, case.k, phase_hint=case.hint)
    target = TargetDesc(case.vlen, threads)
    prog = materialize_encoding(matmul_program(desc), target)
    got = execute(prog, {"a": Mat2D(a), "b": Mat2D(b)}, ExecSession(target))["c"].data
    want = oracle_matmul(a, b)
    idx = first_mismatch(got, want)
    if idx is None:
        return None
    g = float(got[idx]) if idx else float("nan")
    w = float(want[idx]) if idx else float("nan")
    return Mismatch(case, seed, idx, g, w)


def run_verify(
    cases: int = 200,
    seed: int = 0,
    vlens: Sequence[int] = (128, 256),
    max_m: int = 12,
    max_n: int = 12,
    max_k: int = 12,
    threads: int = 1,
    only_case: Optional[int] = None,
) -> VerifyReport:
    report = VerifyReport()
    indices = [only_case] if only_case is not None else range(cases)
    for i in indices:
        case = draw_case(seed, i, max_m, max_n, max_k, vlens)
        report.total += 1
        bad = run_case(seed, case, threads)
        if bad is None:
            report.passed += 1
        else:
            report.failures.append(bad)
    return report
