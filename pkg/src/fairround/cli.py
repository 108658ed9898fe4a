"""Command line: ``fairround gen | solve | verify | bench``.

Exit codes: 0 success, 1 a statistical test failed, 2 usage or input
error, 3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, _backend, oracle, suites
from .contention import FracAssignment
from .instance import GenParams, Instance, InstanceError, generate_random, parse_instance, serialize_instance
from .lp import InfeasibleHorizon, RectangleSet, solve_instance
from .sched_round import SchedTables, objective_samples, round_rectangles

log = logging.getLogger("fairround")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
RATIO_COLUMNS = (
    "instance_id", "lp_obj", "alg_mean", "alg_ci95", "baseline_mean", "baseline_ci95", "trials", "seed", "tool_version",
)
GRID_THETAS = (0.3, 1.0, 7.0, 42.0)
OVERLAP_RHOS = 100
Z95 = 1.96


class UsageError(Exception):
    pass


class SolverError(Exception):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    for row in rows:
        out.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def _read_instance(path: str) -> Instance:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    try:
        return parse_instance(text)
    except InstanceError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _solve_lp(inst: Instance, horizon: int | None):
    try:
        return solve_instance(inst, horizon)
    except InfeasibleHorizon as exc:
        raise SolverError(f"LP infeasible: {exc}") from exc


# -- solve / bench ------------------------------------------------------------


@dataclass
class RatioRow:
    instance_id: str
    lp_obj: float
    alg_mean: float
    alg_ci95: float
    baseline_mean: float | None
    baseline_ci95: float | None
    trials: int
    seed: int
    best_trial: int = 0

    def cells(self):
        return [
            self.instance_id, self.lp_obj, self.alg_mean, self.alg_ci95,
            self.baseline_mean, self.baseline_ci95, self.trials, self.seed, __version__,
        ]

    @property
    def ratio(self) -> float:
        return self.alg_mean / self.lp_obj

    @property
    def baseline_ratio(self) -> float | None:
        return None if self.baseline_mean is None else self.baseline_mean / self.lp_obj


def ratio_row(name, inst, sol_obj, rects, seed, trials, baseline) -> RatioRow:
    tables = SchedTables.build(inst, rects)
    alg = objective_samples(tables, seed, trials)
    row = RatioRow(name, sol_obj, alg.mean, Z95 * alg.stderr, None, None, trials, seed,
                   int(np.argmin(alg.objective)))
    if baseline:
        base = objective_samples(tables, seed, trials, baseline=True)
        row.baseline_mean, row.baseline_ci95 = base.mean, Z95 * base.stderr
    return row


def cmd_gen(args) -> int:
    params = GenParams(args.machines, args.jobs, args.pmin, args.pmax, args.wmin, args.wmax, args.absent)
    problems = params.check()
    if problems:
        raise UsageError("; ".join(problems))
    inst = generate_random(params, args.seed)
    meta = {
        "generator": {
            "machines": args.machines, "jobs": args.jobs, "pmin": args.pmin, "pmax": args.pmax,
            "wmin": args.wmin, "wmax": args.wmax, "absent": args.absent,
        },
        "seed": args.seed,
        "trials": None,
        "tool_version": __version__,
    }
    text = serialize_instance(inst, meta)
    out = args.out or f"instance-m{args.machines}-n{args.jobs}-s{args.seed}.json"
    _write(out, text)
    print(f"{out} sha256:{hashlib.sha256(text.encode()).hexdigest()}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _read_instance(args.instance)
    sol, rects = _solve_lp(inst, args.horizon)
    name = Path(args.instance).stem
    row = ratio_row(name, inst, sol.objective, rects, args.seed, args.trials, args.baseline)
    _, _, best = round_rectangles(inst, rects, args.seed, row.best_trial)
    print(f"instance   {name}  (m={inst.machine_count}, n={inst.job_count})")
    print(f"lp         {sol.objective:.6f}")
    print(f"algorithm  {row.alg_mean:.6f} +- {row.alg_ci95:.6f}  ratio {row.ratio:.6f}")
    if args.baseline:
        print(f"baseline   {row.baseline_mean:.6f} +- {row.baseline_ci95:.6f}  ratio {row.baseline_ratio:.6f}")
    print(f"best       {best.objective:.6f}  (trial {row.best_trial})")
    prefix = args.out or name
    _write(f"{prefix}.ratio.csv", _csv([row.cells()], RATIO_COLUMNS))
    _write(
        f"{prefix}.schedule.json",
        best.to_json(seed=args.seed, trials=args.trials, trial=row.best_trial, tool_version=__version__) + "\n",
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    cases: list[tuple[str, Instance]] = []
    if args.synthetic:
        if args.synthetic != "desk":
            raise UsageError(f"unknown bench suite {args.synthetic!r} (expected 'desk')")
        cases = suites.desk_suite()
    elif args.instance_dir:
        root = Path(args.instance_dir)
        if not root.is_dir():
            raise UsageError(f"{root} is not a directory")
        for path in sorted(root.glob("*.json")):
            try:
                cases.append((path.stem, parse_instance(path.read_text(encoding="utf-8"))))
            except (OSError, InstanceError) as exc:
                log.warning("skipping %s: %s", path.name, exc)
    else:
        raise UsageError("bench needs an instance directory or --synthetic desk")
    rows = []
    for name, inst in cases:
        sol, rects = _solve_lp(inst, None)
        rows.append(ratio_row(name, inst, sol.objective, rects, args.seed, args.trials, True))
    cells = [r.cells() for r in rows]
    if rows:
        ratios = [r.ratio for r in rows]
        base = [r.baseline_ratio for r in rows]
        for label, alg, bas in (("max", max(ratios), max(base)), ("mean", float(np.mean(ratios)), float(np.mean(base)))):
            cells.append([f"aggregate:{label}_ratio", None, alg, None, bas, None, args.trials, args.seed, __version__])
        print(f"{len(rows)} instances  max ratio {max(ratios):.6f}  mean ratio {np.mean(ratios):.6f}", file=sys.stderr)
    _write(args.out, _csv(cells, RATIO_COLUMNS))
    return EXIT_OK


# -- verify -------------------------------------------------------------------


def verify_instance(inst: Instance, rects: RectangleSet, trials: int, seed: int, tamper: bool, name: str):
    report = oracle.McReport()
    ctx, _, _ = round_rectangles(inst, rects, seed, 0)
    frac = FracAssignment(rects.frac())
    report.extend(oracle.verify_rounding_properties(frac, ctx.groups, trials, seed, name, independent_groups=tamper))
    report.extend(oracle.tail_bound_check(inst, rects, trials, seed, name=f"{name}:tail"))
    rhos = oracle.rho_draws(seed, OVERLAP_RHOS)
    for i in range(inst.machine_count):
        decomp = oracle.config_decompose(rects, i)
        report.extend(oracle.decomposition_report(decomp, f"{name}:decomp"))
        report.extend(oracle.bad_overlap_check(decomp, rhos, seed, f"{name}:overlap"))
    return report


def cmd_verify(args) -> int:
    try:
        oracle.check_trials(args.trials)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = oracle.McReport()
    if args.synthetic and args.instance:
        raise UsageError("give an instance path or --synthetic, not both")
    if args.synthetic == "badrich":
        inst, rects = suites.bad_rich()
        report.extend(verify_instance(inst, rects, args.trials, args.seed, args.tamper, "badrich"))
    elif args.synthetic:
        try:
            cases = suites.synthetic_suite(args.synthetic)
        except KeyError as exc:
            names = ", ".join((*suites.SYNTHETIC_NAMES, "badrich"))
            raise UsageError(f"unknown synthetic suite {args.synthetic!r} (choose from {names})") from exc
        for case in cases:
            report.extend(
                oracle.verify_rounding_properties(
                    case.frac, case.groups, args.trials, args.seed, case.name, independent_groups=args.tamper
                )
            )
    elif args.instance:
        inst = _read_instance(args.instance)
        _, rects = _solve_lp(inst, args.horizon)
        report.extend(verify_instance(inst, rects, args.trials, args.seed, args.tamper, Path(args.instance).stem))
    else:
        raise UsageError("verify needs an instance path or --synthetic")
    report.extend(oracle.grid_start_check(GRID_THETAS, args.trials, args.seed))
    _write(args.out, report.to_csv())
    failed = report.failures()
    print(f"{len(report.rows) - len(failed)}/{len(report.rows)} checks passed", file=sys.stderr)
    for row in failed[:20]:
        print(f"FAIL {row.test_id}: estimate {row.estimate:.6g} bound {row.bound:.6g} stderr {row.stderr:.3g}",
              file=sys.stderr)
    return EXIT_OK if not failed else EXIT_FAIL


# -- argument parsing ---------------------------------------------------------


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairround", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fairround {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("--machines", type=_positive, required=True)
    g.add_argument("--jobs", type=_positive, required=True)
    g.add_argument("--pmin", type=int, default=1)
    g.add_argument("--pmax", type=int, default=10)
    g.add_argument("--wmin", type=float, default=1.0)
    g.add_argument("--wmax", type=float, default=1.0)
    g.add_argument("--absent", type=float, default=0.0, help="probability a pair is absent")
    g.add_argument("--seed", type=_u64, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve the LP and round it many times")
    s.add_argument("instance")
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--trials", type=_positive, default=2000)
    s.add_argument("--horizon", type=_positive)
    s.add_argument("--baseline", action="store_true", help="also run independent rounding")
    s.add_argument("--out", help="output prefix for .ratio.csv and .schedule.json")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="statistically certify the rounding")
    v.add_argument("instance", nargs="?")
    v.add_argument("--synthetic", help="built-in suite: pairs, mixed, single or badrich")
    v.add_argument("--seed", type=_u64, default=0)
    v.add_argument("--trials", type=_positive, default=oracle.TRIALS_FLOOR)
    v.add_argument("--horizon", type=_positive)
    v.add_argument("--out", help="report CSV (stdout when omitted)")
    v.add_argument("--tamper", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="ratio report over a directory of instances")
    b.add_argument("instance_dir", nargs="?")
    b.add_argument("--synthetic", help="built-in suite instead of a directory: desk")
    b.add_argument("--seed", type=_u64, default=0)
    b.add_argument("--trials", type=_positive, default=2000)
    b.add_argument("--out", help="report CSV (stdout when omitted)")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        _backend.thread_count()
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        if "FAIRROUND_THREADS" in str(exc):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        raise
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
