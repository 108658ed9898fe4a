"""Scheduling rounding on top of the time-indexed LP.

Per machine/job pair one representative rectangle is sampled, shifted right
and given a uniform offset inside its length; the resulting theta value
orders jobs on their machine.  Bad representatives (early start, small
height) are thrown onto a random geometric grid and jobs sharing a grid
interval are grouped before contention resolution, so they tend not to
land on the same machine together.

The stage functions below are the literal, one-trial reference.  Monte
Carlo batches go through :func:`objective_samples`, which runs the same
addressed draws on the fast backend; trial t of a batch reproduces
``round_rectangles(..., trial=t)`` exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend, contention, rng as rngmod
from .contention import Assignment, FracAssignment, Grouping, NonTermination
from .instance import Instance
from .lp import LpSolution, RectangleSet, extract_rectangles, solve_instance
from .rng import Stream

BAD_HEIGHT = 0.09
BAD_START = 0.1  # bad iff s < BAD_START * p
SHIFT = 0.34
COIN_P = 0.5
RHO_LOW = 0.1
GOOD = "good"
BAD = "bad"

KMIN = -40
POW10 = np.array([10.0**k for k in range(KMIN, 41)])


# -- stage primitives ---------------------------------------------------------


def shift_amount(s: float, p: float, x_ij: float) -> float:
    if x_ij >= BAD_HEIGHT:
        return SHIFT * (s + x_ij * p)
    return SHIFT * s


def classify_rectangle(s: float, p: float, x_ij: float) -> str:
    return BAD if 10.0 * s < p and x_ij < BAD_HEIGHT else GOOD


def sample_rho(stream: Stream) -> float:
    """rho uniform on the open interval (0.1, 1)."""
    return rngmod.rho_from(stream.raw(0, 0, 0, rngmod.RHO))


def grid_interval(theta: float, rho: float) -> tuple[int, float]:
    """(k, g) with rho*10^k < theta <= rho*10^(k+1) and g = rho*10^k."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if not RHO_LOW <= rho < 1:
        raise ValueError("rho must lie in (0.1, 1)")
    top = POW10.size - 2
    k = int(math.floor(math.log10(theta) - math.log10(rho)))
    k = min(max(k, KMIN), KMIN + top)
    for _ in range(64):
        if rho * POW10[k - KMIN] >= theta:
            k -= 1
        elif rho * POW10[k - KMIN + 1] < theta:
            k += 1
        else:
            break
    if not (k - KMIN >= 0 and k - KMIN + 1 < POW10.size):
        raise ValueError(f"theta {theta} outside the supported grid range")
    return k, float(rho * POW10[k - KMIN])


def choice_cdf(heights) -> np.ndarray:
    """Cumulative selection probabilities for a list of heights (in order)."""
    total = 0.0
    for h in heights:
        total += h
    cum, out = 0.0, []
    for h in heights:
        cum += h
        out.append(cum / total)
    return np.array(out)


def pick_from_cdf(cdf: np.ndarray, u: float) -> int:
    return contention.tickets_from_cdf(cdf, u)


# -- representatives and grouping ---------------------------------------------


@dataclass(frozen=True)
class Representative:
    machine: int
    job: int
    start: int  # s of the chosen rectangle
    length: int  # p_ij
    height: float  # x_ij, the pair's total height
    tau: float
    shifted: float  # s plus its shift
    theta: float
    kind: str  # GOOD or BAD

    @property
    def bad(self) -> bool:
        return self.kind == BAD


@dataclass(frozen=True)
class GridContext:
    rho: float
    assoc: dict  # (i, j) -> k for associated bad representatives
    coin_p: float = COIN_P

    def interval(self, theta: float) -> tuple[int, float]:
        return grid_interval(theta, self.rho)


@dataclass(frozen=True)
class RoundingContext:
    reps: dict  # (i, j) -> Representative
    grid: GridContext
    groups: Grouping


def choose_representatives(rects: RectangleSet, stream: Stream) -> dict:
    reps = {}
    heights = rects.pair_height
    for (i, j), rs in sorted(rects.by_pair.items()):
        x_ij = heights[(i, j)]
        cdf = choice_cdf([r.height for r in rs])
        r = rs[pick_from_cdf(cdf, stream.unit(0, i, j, rngmod.REP))]
        p = r.length
        tau = p * stream.open_unit(0, i, j, rngmod.TAU)
        shifted = r.start + shift_amount(r.start, p, x_ij)
        reps[(i, j)] = Representative(
            i, j, r.start, p, x_ij, tau, shifted, shifted + tau, classify_rectangle(r.start, p, x_ij)
        )
    return reps


def associate(reps: dict, rho: float, stream: Stream) -> GridContext:
    """Flip the association coin for every bad representative."""
    assoc = {}
    for key, rep in sorted(reps.items()):
        if rep.bad and stream.unit(0, rep.machine, rep.job, rngmod.COIN) < COIN_P:
            assoc[key] = grid_interval(rep.theta, rho)[0]
    return GridContext(rho, assoc)


def candidate_groups(reps: dict, grid: GridContext) -> dict:
    """(machine, k) -> sorted jobs associated with that interval."""
    out: dict = {}
    for (i, j), k in sorted(grid.assoc.items()):
        out.setdefault((i, k), []).append(j)
    return out


def build_groups(reps: dict, grid: GridContext, machine_count: int) -> Grouping:
    """Keep a candidate group when its total height is at most one."""
    rows: list[list] = [[] for _ in range(machine_count)]
    for (i, _k), jobs in candidate_groups(reps, grid).items():
        total = 0.0
        for j in jobs:
            total += reps[(i, j)].height
        if total <= 1.0 and len(jobs) > 1:
            rows[i].append(jobs)
    return Grouping.from_lists(machine_count, rows)


# -- schedules ----------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    machines: tuple  # per machine: tuple of (job, start, end) in processing order
    completion: tuple  # per job
    objective: float
    meta: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "machines": [[{"job": j, "start": a, "end": b} for j, a, b in row] for row in self.machines],
        }

    def to_json(self, **extra) -> str:
        data = self.to_dict()
        data.update(extra)
        return json.dumps(data, sort_keys=True)


def sequence(inst: Instance, machine_of, theta_of) -> Schedule:
    """Stack each machine's jobs back to back in increasing theta (ties by index)."""
    m, n = inst.machine_count, inst.job_count
    rows = []
    completion = [0] * n
    for i in range(m):
        jobs = sorted((j for j in range(n) if machine_of[j] == i), key=lambda j: (theta_of[j], j))
        t, row = 0, []
        for j in jobs:
            p = inst.proc[i][j]
            row.append((j, t, t + p))
            t += p
            completion[j] = t
        rows.append(tuple(row))
    obj = 0.0
    for j in range(n):
        obj = obj + inst.weight[j] * float(completion[j])
    return Schedule(tuple(rows), tuple(completion), obj)


def assemble_schedule(assign: Assignment, reps: dict, inst: Instance) -> Schedule:
    machine = assign.machine
    theta = [reps[(machine[j], j)].theta for j in range(inst.job_count)]
    return sequence(inst, machine, theta)


def round_rectangles(
    inst: Instance,
    rects: RectangleSet,
    seed: int,
    trial: int = 0,
    max_iters: int | None = None,
) -> tuple[RoundingContext, Assignment, Schedule]:
    """One full rounding of an LP solution (reference path)."""
    stream = Stream(seed, trial)
    reps = choose_representatives(rects, stream)
    grid = associate(reps, sample_rho(stream), stream)
    groups = build_groups(reps, grid, inst.machine_count)
    frac = FracAssignment(rects.frac())
    groups.check(frac)
    assign = contention._resolve_labels(frac.x, groups.labels(inst.job_count), seed, trial, max_iters)
    ctx = RoundingContext(reps, grid, groups)
    return ctx, assign, assemble_schedule(assign, reps, inst)


def approx_solve(
    inst: Instance, seed: int, trial: int = 0, horizon: int | None = None
) -> tuple[Schedule, float]:
    """LP, rounding and sequencing; returns the schedule and the LP objective."""
    sol, rects = solve_instance(inst, horizon)
    return round_rectangles(inst, rects, seed, trial)[2], sol.objective


def independent_round_solve(inst: Instance, sol: LpSolution | RectangleSet, seed: int, trial: int = 0) -> Schedule:
    """Baseline: every job picks one of its rectangles independently, unshifted."""
    rects = sol if isinstance(sol, RectangleSet) else extract_rectangles(sol)
    stream = Stream(seed, trial)
    machine, theta = [], []
    for j in range(inst.job_count):
        rs = [r for r in rects.rects if r.job == j]
        cdf = choice_cdf([r.height for r in rs])
        r = rs[pick_from_cdf(cdf, stream.unit(0, 0, j, rngmod.BASE))]
        tau = r.length * stream.open_unit(0, r.machine, j, rngmod.TAU)
        machine.append(r.machine)
        theta.append(r.start + tau)
    return sequence(inst, machine, theta)


# -- batch Monte Carlo --------------------------------------------------------


@dataclass(frozen=True)
class SchedTables:
    """Flat arrays consumed by the batch kernels."""

    x: np.ndarray  # (m, n) pair heights
    p: np.ndarray  # (m, n) processing times, 0 where absent
    w: np.ndarray  # (n,)
    cdf: np.ndarray  # (m, n, CDF_LEN) ticket tables
    rep_cdf: np.ndarray  # (m, n, R) representative choice, padded with 2.0
    rep_s: np.ndarray  # (m, n, R) starts
    rep_cnt: np.ndarray  # (m, n)
    base_cdf: np.ndarray  # (n, Q) baseline choice over (i, s), padded with 2.0
    base_i: np.ndarray  # (n, Q)
    base_s: np.ndarray  # (n, Q)
    base_cnt: np.ndarray  # (n,)
    pow10: np.ndarray
    kmin: int

    @classmethod
    def build(cls, inst: Instance, rects: RectangleSet) -> "SchedTables":
        m, n = inst.machine_count, inst.job_count
        x = rects.frac()
        by_pair = rects.by_pair
        R = max(len(v) for v in by_pair.values())
        rep_cdf = np.full((m, n, R), 2.0)
        rep_s = np.zeros((m, n, R))
        rep_cnt = np.ones((m, n), dtype=np.int64)
        for (i, j), rs in by_pair.items():
            rep_cdf[i, j, : len(rs)] = choice_cdf([r.height for r in rs])
            rep_s[i, j, : len(rs)] = [r.start for r in rs]
            rep_cnt[i, j] = len(rs)
        per_job = [[r for r in rects.rects if r.job == j] for j in range(n)]
        Q = max(len(v) for v in per_job)
        base_cdf = np.full((n, Q), 2.0)
        base_i = np.zeros((n, Q), dtype=np.int64)
        base_s = np.zeros((n, Q))
        base_cnt = np.zeros(n, dtype=np.int64)
        for j, rs in enumerate(per_job):
            base_cdf[j, : len(rs)] = choice_cdf([r.height for r in rs])
            base_i[j, : len(rs)] = [r.machine for r in rs]
            base_s[j, : len(rs)] = [r.start for r in rs]
            base_cnt[j] = len(rs)
        return cls(
            x=np.ascontiguousarray(x),
            p=np.ascontiguousarray(inst.proc_array(), dtype=np.float64),
            w=np.array(inst.weight, dtype=np.float64),
            cdf=contention.tilde_pois_cdf_table(x),
            rep_cdf=rep_cdf,
            rep_s=rep_s,
            rep_cnt=rep_cnt,
            base_cdf=base_cdf,
            base_i=base_i,
            base_s=base_s,
            base_cnt=base_cnt,
            pow10=POW10,
            kmin=KMIN,
        )


@dataclass
class ObjectiveSamples:
    objective: np.ndarray  # (trials,)
    iterations: np.ndarray  # (trials,) rounds used by the slowest job (0 for the baseline)

    @property
    def mean(self) -> float:
        return float(self.objective.mean())

    @property
    def stderr(self) -> float:
        n = self.objective.size
        return float(self.objective.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def objective_samples(
    tables: SchedTables,
    seed: int,
    trials: int,
    baseline: bool = False,
    trial_start: int = 0,
    max_iters: int | None = None,
    backend: str | None = None,
) -> ObjectiveSamples:
    n = tables.x.shape[1]
    max_iters = contention.default_max_iters(n) if max_iters is None else max_iters
    obj, its = _backend.sched_batch(tables, seed, trial_start, trials, baseline, max_iters, backend=backend)
    if (its < 0).any():
        raise NonTermination(f"some job unassigned after {max_iters} iterations")
    return ObjectiveSamples(obj, its)
