"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--trials N] [--repeat R]

Prints wall time per backend for contention batches and full rounding
batches, checks both backends return identical arrays, and reports the
speedup.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fairround import _backend, contention, suites
from fairround.lp import solve_instance
from fairround.sched_round import SchedTables, objective_samples


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def workloads(trials):
    case = suites.contention_suite(1)[0]
    yield f"resolve {case.name} ({case.frac.machine_count}x{case.frac.job_count})", lambda b: (
        contention.resolve_many(case.frac, case.groups, 1, trials, backend=b).assign
    )
    inst, rects = suites.bad_rich()
    rich = SchedTables.build(inst, rects)
    yield "round badrich (12x36)", lambda b: objective_samples(rich, 1, trials, backend=b).objective
    name, desk = suites.desk_suite()[18]
    _, drects = solve_instance(desk)
    dt = SchedTables.build(desk, drects)
    yield f"round {name}", lambda b: objective_samples(dt, 1, trials, backend=b).objective
    yield f"baseline {name}", lambda b: objective_samples(dt, 1, trials, baseline=True, backend=b).objective


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=5_000)
    ap.add_argument("--repeat", type=int, default=2)
    args = ap.parse_args()
    if "compiled" not in _backend.available():
        raise SystemExit("compiled kernels are not built; reinstall without FAIRROUND_NO_EXT")
    print(f"{'workload':34s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}  identical")
    for label, fn in workloads(args.trials):
        tp, a = best_of(lambda: fn("python"), args.repeat)
        tc, b = best_of(lambda: fn("compiled"), args.repeat)
        same = np.array_equal(a, b)
        print(f"{label:34s} {tp:10.3f} {tc:11.3f} {tp / tc:8.1f}  {same}")


if __name__ == "__main__":
    main()
