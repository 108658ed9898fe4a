"""Time-indexed LP relaxation and its rectangle view.

Variable x[i, j, s] means job j starts on machine i at integer time s and
occupies (s, s + p_ij].  The relaxation minimizes
sum_j w_j sum_{i,s} x[i,j,s] (s + p_ij) subject to every job being covered
once and every machine carrying at most one unit at each time t in 1..T.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import simplex
from .instance import Instance

CLAMP = 1e-12


class InfeasibleHorizon(ValueError):
    """Some job cannot finish by the horizon on any machine."""


@dataclass(frozen=True)
class LpProblem:
    inst: Instance
    horizon: int
    columns: tuple[tuple[int, int, int], ...]  # (i, j, s), sorted
    cost: np.ndarray = field(repr=False)
    cover: np.ndarray = field(repr=False)  # (n, cols)
    capacity: np.ndarray = field(repr=False)  # (m * T, cols); row i*T + (t-1)

    @property
    def column_count(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class LpSolution:
    problem: LpProblem
    values: np.ndarray = field(repr=False)
    objective: float
    status: str
    pivots: int = 0

    def positive(self):
        """(i, j, s, value) for strictly positive entries, sorted by (i, j, s)."""
        return [(i, j, s, float(v)) for (i, j, s), v in zip(self.problem.columns, self.values) if v > 0]

    def to_json(self, **extra) -> str:
        data = {
            "objective": self.objective,
            "x": [{"i": i, "j": j, "s": s, "v": v} for i, j, s, v in self.positive()],
        }
        data.update(extra)
        return json.dumps(data, sort_keys=True)


@dataclass(frozen=True)
class Rectangle:
    machine: int
    job: int
    start: int
    length: int
    height: float

    @property
    def end(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class RectangleSet:
    machine_count: int
    job_count: int
    rects: tuple[Rectangle, ...]  # sorted by (machine, job, start)

    @cached_property
    def by_pair(self) -> dict[tuple[int, int], tuple[Rectangle, ...]]:
        out: dict[tuple[int, int], list[Rectangle]] = {}
        for r in self.rects:
            out.setdefault((r.machine, r.job), []).append(r)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def pair_height(self) -> dict[tuple[int, int], float]:
        """x_ij: total height of job j on machine i (summed in start order)."""
        out = {}
        for key, rs in self.by_pair.items():
            total = 0.0
            for r in rs:
                total += r.height
            out[key] = total
        return out

    def frac(self) -> np.ndarray:
        x = np.zeros((self.machine_count, self.job_count))
        for (i, j), h in self.pair_height.items():
            x[i, j] = h
        return x

    def on_machine(self, i: int) -> list[Rectangle]:
        return [r for r in self.rects if r.machine == i]

    def max_load(self, i: int) -> float:
        """Largest total height over integer times on machine i."""
        rs = self.on_machine(i)
        if not rs:
            return 0.0
        horizon = max(r.end for r in rs)
        load = np.zeros(horizon + 2)
        for r in rs:
            load[r.start + 1] += r.height
            load[r.end + 1] -= r.height
        return float(np.cumsum(load).max())

    def objective(self, weight) -> float:
        return float(sum(weight[r.job] * r.height * (r.start + r.length) for r in self.rects))


def default_horizon(inst: Instance) -> int:
    """Sum over jobs of their largest finite processing time; always feasible."""
    return sum(max(inst.proc[i][j] for i in inst.eligible(j)) for j in range(inst.job_count))


def build_lp(inst: Instance, horizon: int | None = None) -> LpProblem:
    T = default_horizon(inst) if horizon is None else int(horizon)
    m, n = inst.machine_count, inst.job_count
    for j in range(n):
        if min(inst.proc[i][j] for i in inst.eligible(j)) > T:
            raise InfeasibleHorizon(f"job {j + 1} cannot complete by horizon {T}")
    columns = [
        (i, j, s)
        for i in range(m)
        for j in range(n)
        if inst.proc[i][j] is not None
        for s in range(T - inst.proc[i][j] + 1)
    ]
    k = len(columns)
    cost = np.empty(k)
    cover = np.zeros((n, k))
    capacity = np.zeros((m * T, k))
    for c, (i, j, s) in enumerate(columns):
        p = inst.proc[i][j]
        cost[c] = inst.weight[j] * (s + p)
        cover[j, c] = 1.0
        # rectangle (s, s+p] covers integer times s+1 .. s+p
        capacity[i * T + s:i * T + s + p, c] = 1.0
    return LpProblem(inst, T, tuple(columns), cost, cover, capacity)


def solve_lp(prob: LpProblem) -> LpSolution:
    res = simplex.solve(
        prob.cost, prob.cover, np.ones(prob.inst.job_count), prob.capacity, np.ones(prob.capacity.shape[0])
    )
    if res.status != "optimal":
        return LpSolution(prob, np.zeros(prob.column_count), float("nan"), res.status, res.pivots)
    x = res.x.copy()
    x[np.abs(x) < CLAMP] = 0.0
    x[x < 0] = 0.0
    jobs = np.array([j for _, j, _ in prob.columns], dtype=int)
    totals = np.bincount(jobs, weights=x, minlength=prob.inst.job_count)
    x /= totals[jobs]
    return LpSolution(prob, x, float(prob.cost @ x), "optimal", res.pivots)


def lp_objective(sol: LpSolution) -> float:
    inst = sol.problem.inst
    return float(
        sum(inst.weight[j] * v * (s + inst.proc[i][j]) for i, j, s, v in sol.positive())
    )


def extract_rectangles(sol: LpSolution) -> RectangleSet:
    inst = sol.problem.inst
    rects = tuple(
        Rectangle(i, j, s, inst.proc[i][j], v) for i, j, s, v in sol.positive()
    )
    return RectangleSet(inst.machine_count, inst.job_count, rects)


def solve_instance(inst: Instance, horizon: int | None = None) -> tuple[LpSolution, RectangleSet]:
    sol = solve_lp(build_lp(inst, horizon))
    if sol.status != "optimal":
        raise InfeasibleHorizon(f"LP status {sol.status}")
    return sol, extract_rectangles(sol)
