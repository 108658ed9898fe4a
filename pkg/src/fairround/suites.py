"""Fixed test suites shared by the CLI, the acceptance tests and the benchmark."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contention import FracAssignment, Grouping
from .instance import GenParams, Instance, generate_random, make_instance
from .lp import Rectangle, RectangleSet

DESK_SIZE = 20
DESK_SEED = 1000


def desk_params(k: int) -> GenParams:
    return GenParams(
        machine_count=2 + k % 2,
        job_count=4 + k % 5,
        p_min=1,
        p_max=6,
        w_min=1.0,
        w_max=10.0,
        absent_prob=0.1,
    )


def desk_suite() -> list[tuple[str, Instance]]:
    """Twenty small instances: m in {2, 3}, n in 4..8, p in [1, 6]."""
    return [(f"desk-{k:02d}", generate_random(desk_params(k), DESK_SEED + k)) for k in range(DESK_SIZE)]


@dataclass(frozen=True)
class ContentionCase:
    name: str
    frac: FracAssignment
    groups: Grouping


def random_contention_case(name: str, seed: int) -> ContentionCase:
    """Random fractional assignment (m <= 4, 2 <= n <= 8) with random legal groups."""
    gen = np.random.default_rng(seed)
    m = int(gen.integers(2, 5))
    n = int(gen.integers(2, 9))
    x = gen.dirichlet(np.full(m, 0.7), size=n).T
    x[x < 0.03] = 0.0
    x = x / x.sum(axis=0)
    rows = []
    for i in range(m):
        jobs = [int(j) for j in gen.permutation(n) if x[i, j] > 0]
        row, cur, height = [], [], 0.0
        for j in jobs:
            if height + x[i, j] <= 1.0 and gen.random() < 0.7:
                cur.append(j)
                height += x[i, j]
            elif len(cur) > 1:
                row.append(sorted(cur))
                cur, height = [j], x[i, j]
            else:
                cur, height = [j], x[i, j]
        if len(cur) > 1:
            row.append(sorted(cur))
        rows.append(row)
    return ContentionCase(name, FracAssignment(x), Grouping.from_lists(m, rows))


def contention_suite(count: int = 10, seed: int = 2024) -> list[ContentionCase]:
    return [random_contention_case(f"mix-{k:02d}", seed + k) for k in range(count)]


def pairs_suite() -> list[ContentionCase]:
    """Grouped pairs of height 0.09 each on machine 0."""
    two = np.array([[0.09, 0.09], [0.91, 0.91]])
    six = np.vstack([np.full(6, 0.09), np.full(6, 0.41), np.full(6, 0.5)])
    return [
        ContentionCase("pair-2", FracAssignment(two), Grouping.from_lists(2, {0: [[0, 1]]})),
        ContentionCase("pair-6", FracAssignment(six), Grouping.from_lists(3, {0: [[0, 1], [2, 3], [4, 5]]})),
    ]


def single_job_case() -> ContentionCase:
    return ContentionCase("single", FracAssignment(np.ones((1, 1))), Grouping.singletons(1))


def synthetic_suite(name: str) -> list[ContentionCase]:
    if name == "pairs":
        return pairs_suite()
    if name == "mixed":
        return contention_suite()
    if name == "single":
        return [single_job_case()]
    raise KeyError(name)


SYNTHETIC_NAMES = ("pairs", "mixed", "single")


def bad_rich(layers: int = 12, chain: int = 3, stride: int = 5) -> tuple[Instance, RectangleSet]:
    """A feasible fractional solution in which every rectangle is bad.

    ``layers`` machines each carry ``layers`` stacked layers of height
    1/layers.  A layer holds a chain of ``chain`` rectangles, each starting
    before a tenth of its own length.  Job j occupies one slot on every
    machine (slot (j + stride*i) mod jobs), so its heights sum to one.
    """
    m = layers
    n = layers * chain
    h = 1.0 / layers
    slots = []  # (start, length) per slot
    for layer in range(layers):
        base = 1 + layer % 3
        start = 0
        for _ in range(chain):
            length = 10 * start + base if start else base
            slots.append((start, length))
            start += length
    proc = [[0] * n for _ in range(m)]
    rects = []
    for i in range(m):
        for j in range(n):
            s, p = slots[(j + stride * i) % n]
            proc[i][j] = p
            rects.append(Rectangle(i, j, s, p, h))
    weight = [1.0 + (j % 4) for j in range(n)]
    rects.sort(key=lambda r: (r.machine, r.job, r.start))
    return make_instance(proc, weight), RectangleSet(m, n, tuple(rects))
