"""Ground truth and verification machinery.

Exact oracles (Smith's rule, brute-force optimum, configuration
decomposition, shifted prefix lengths) plus the Monte Carlo statistics
used to certify the rounding.  Statistical verdicts are 4 sigma: one-sided
for bounds, two-sided for equalities.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__, _fallback, contention, rng as rngmod
from .contention import FracAssignment, Grouping
from .instance import Instance
from .lp import Rectangle, RectangleSet
from .sched_round import BAD, POW10, KMIN, SchedTables, classify_rectangle, shift_amount

SIGMA_K = 4.0
TRIALS_FLOOR = 10_000
TAIL_LEVEL = 0.82
TAIL_BOUND = 0.5317
ETA_PAIR = 2 * math.exp(0.09) / (math.e + 1)
GRID_FACTOR = 0.55
DECOMP_EPS = 1e-4
LOAD_TOL = 1e-7
OVERLAP_TOL = 1e-9
BRUTE_LIMIT = 10**7
CSV_COLUMNS = ("test_id", "estimate", "stderr", "bound", "sigma_k", "verdict", "trials", "seed", "tool_version")


class TooLarge(ValueError):
    pass


class LoadViolation(ValueError):
    pass


# -- reports ------------------------------------------------------------------


@dataclass(frozen=True)
class McRow:
    """One statistical statement.

    ``kind`` is "upper" (estimate <= bound + k*stderr), "lower"
    (estimate >= bound - k*stderr), "equal" (|estimate - bound| <= k*stderr)
    or "above" (estimate > bound, exact).
    """

    test_id: str
    estimate: float
    stderr: float
    bound: float
    kind: str = "upper"
    sigma_k: float = SIGMA_K
    trials: int = 0
    seed: int = 0

    @property
    def passed(self) -> bool:
        slack = self.sigma_k * self.stderr
        if self.kind == "upper":
            return self.estimate <= self.bound + slack
        if self.kind == "lower":
            return self.estimate >= self.bound - slack
        if self.kind == "above":
            return self.estimate > self.bound
        return abs(self.estimate - self.bound) <= slack


@dataclass
class McReport:
    rows: list[McRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[McRow]:
        return [r for r in self.rows if not r.passed]

    def extend(self, other: "McReport") -> "McReport":
        self.rows.extend(other.rows)
        return self

    def find(self, prefix: str) -> list[McRow]:
        return [r for r in self.rows if r.test_id.startswith(prefix)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(CSV_COLUMNS)
        for r in self.rows:
            out.writerow(
                [
                    r.test_id,
                    repr(float(r.estimate)),
                    repr(float(r.stderr)),
                    repr(float(r.bound)),
                    repr(float(r.sigma_k)),
                    "pass" if r.passed else "fail",
                    r.trials,
                    r.seed,
                    __version__,
                ]
            )
        return buf.getvalue()


def binomial_stderr(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1 - p_hat), 0.0) / n)


def mc_estimate(indicator, trials: int, seed: int) -> tuple[float, float]:
    """Mean and binomial stderr of ``indicator(gen, trials)`` (a 0/1 array)."""
    if trials < 2:
        raise ValueError("need at least two trials")
    hits = np.asarray(indicator(np.random.default_rng(seed), trials), dtype=float)
    p = float(hits.mean())
    return p, binomial_stderr(p, trials)


# -- exact scheduling oracles -------------------------------------------------


def smith_order(jobs) -> list[int]:
    """Indices of ``jobs`` = [(p, w), ...] by nonincreasing w/p, ties by smaller p then index."""
    return sorted(range(len(jobs)), key=lambda k: (-jobs[k][1] / jobs[k][0], jobs[k][0], k))


def single_machine_cost(jobs) -> float:
    t, total = 0, 0.0
    for k in smith_order(jobs):
        p, w = jobs[k]
        t += p
        total += w * t
    return total


def brute_force_opt(inst: Instance) -> tuple[float, tuple[int, ...]]:
    """Exact optimum over all assignments (Smith order on each machine)."""
    m, n = inst.machine_count, inst.job_count
    if m**n > BRUTE_LIMIT:
        raise TooLarge(f"{m}^{n} assignments exceed the enumeration limit")
    # cost of every job subset on every machine, by bitmask
    cost = np.full((m, 1 << n), np.inf)
    for i in range(m):
        for mask in range(1 << n):
            jobs = [j for j in range(n) if mask >> j & 1]
            if all(inst.proc[i][j] is not None for j in jobs):
                cost[i, mask] = single_machine_cost([(inst.proc[i][j], inst.weight[j]) for j in jobs])
    best, arg = math.inf, None
    for choice in itertools.product(*[inst.eligible(j) for j in range(n)]):
        masks = [0] * m
        for j, i in enumerate(choice):
            masks[i] |= 1 << j
        total = sum(cost[i, masks[i]] for i in range(m))
        if total < best:
            best, arg = total, choice
    return float(best), tuple(arg)


# -- configuration decomposition ----------------------------------------------


@dataclass(frozen=True)
class ConfigDecomposition:
    machine: int
    eps: float
    configs: tuple[tuple[float, tuple[Rectangle, ...]], ...]  # (z_f, rectangles sorted by start)
    rects: tuple[Rectangle, ...]
    pair_height: dict = field(repr=False)
    loss: float = 0.0  # total height dropped by quantization

    def total_weight(self) -> float:
        return float(sum(z for z, _ in self.configs))

    def disjoint(self) -> bool:
        for _, f in self.configs:
            for a, b in zip(f, f[1:]):
                if a.end > b.start:
                    return False
        return True

    def reconstruction_error(self) -> float:
        got: dict = {}
        for z, f in self.configs:
            for r in f:
                got[r] = got.get(r, 0.0) + z
        return max((abs(got.get(r, 0.0) - r.height) for r in self.rects), default=0.0)

    def budget(self) -> float:
        return self.eps * max(len(self.rects), 1)


def config_decompose(rects: RectangleSet, machine: int, eps: float = DECOMP_EPS) -> ConfigDecomposition:
    """Split machine ``machine``'s rectangles into weighted sets of disjoint rectangles.

    Heights are cut into copies of height ``eps``; copies are taken in start
    order and each goes to the lowest layer that is already free at its
    start.  Every layer is a configuration of weight ``eps``; identical
    layers are merged.
    """
    own = sorted(rects.on_machine(machine), key=lambda r: (r.start, r.end, r.job))
    if rects.max_load(machine) > 1 + LOAD_TOL:
        raise LoadViolation(f"machine {machine} load exceeds one")
    ends = np.zeros(0)
    members: list[list[int]] = []
    loss = 0.0
    for idx, r in enumerate(own):
        c = int(math.floor(r.height / eps + 1e-9))
        loss += max(r.height - c * eps, 0.0)
        if c == 0:
            continue
        free = np.nonzero(ends <= r.start)[0][:c]
        for layer in free:
            members[layer].append(idx)
        ends[free] = r.end
        extra = c - free.size
        if extra:
            ends = np.concatenate([ends, np.full(extra, float(r.end))])
            members.extend([idx] for _ in range(extra))
    merged: dict = {}
    for layer in members:
        key = tuple(layer)
        merged[key] = merged.get(key, 0) + 1
    configs = tuple(
        (count * eps, tuple(own[k] for k in key)) for key, count in sorted(merged.items())
    )
    return ConfigDecomposition(machine, eps, configs, tuple(own), dict(rects.pair_height), loss)


# -- analysis quantities ------------------------------------------------------


def shifted_prefix_length(s: float, p: float, x_ij: float, theta: float) -> float:
    """Length of the shifted rectangle (s_hat, s_hat + p] lying before theta."""
    s_hat = s + shift_amount(s, p, x_ij)
    if theta <= s_hat:
        return 0.0
    if theta >= s_hat + p:
        return float(p)
    return theta - s_hat


def _prefix_np(s_hat: float, p: float, theta: np.ndarray) -> np.ndarray:
    return np.clip(theta - s_hat, 0.0, p)


def _simpson(f, a: float, b: float, breaks, panels: int) -> float:
    """Composite Simpson on [a, b], split at ``breaks`` so every piece is smooth."""
    cuts = sorted({a, b, *(t for t in breaks if a < t < b)})
    total = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        k = max(2, int(math.ceil(panels * (hi - lo) / (b - a))))
        k += k % 2
        t = np.linspace(lo, hi, k + 1)
        y = f(t)
        h = (hi - lo) / k
        total += h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())
    return total


def mutual_delay_residual(s_star: float, s: float, p: float, x_ij: float, panels: int = 10_000) -> float:
    """|(1/p) * integral_0^p [L_s(s*_hat + t) + L_s*(s_hat + t)] dt - p|."""
    a = s_star + shift_amount(s_star, p, x_ij)
    b = s + shift_amount(s, p, x_ij)

    def f(t):
        return _prefix_np(b, p, a + t) + _prefix_np(a, p, b + t)

    breaks = [b - a, b + p - a, a - b, a + p - b]
    return abs(_simpson(f, 0.0, p, breaks, panels) / p - p)


def self_delay_residual(s: float, p: float, x_ij: float, panels: int = 10_000) -> float:
    """|(1/p) * integral_0^p L_s(s_hat + t) dt - p/2|."""
    a = s + shift_amount(s, p, x_ij)
    return abs(_simpson(lambda t: _prefix_np(a, p, a + t), 0.0, p, [], panels) / p - p / 2)


def capacity_excess(rects: RectangleSet, machine: int, thetas) -> float:
    """max over theta of sum x_ijs * L_ijs(theta) - theta (nonpositive when the law holds)."""
    own = rects.on_machine(machine)
    heights = rects.pair_height
    worst = -math.inf
    for theta in thetas:
        vol = 0.0
        for r in own:
            vol += r.height * shifted_prefix_length(r.start, r.length, heights[(r.machine, r.job)], theta)
        worst = max(worst, vol - theta)
    return worst


# -- contention certification --------------------------------------------------


def check_trials(trials: int) -> None:
    if trials < TRIALS_FLOOR:
        raise ValueError(f"trials below statistical floor ({trials} < {TRIALS_FLOOR})")


def pair_bound(x1: float, x2: float, grouped: bool) -> float:
    if grouped:
        return (math.exp(x1) + math.exp(x2)) / (1 + math.e) * x1 * x2
    return x1 * x2


def verify_rounding_properties(
    frac: FracAssignment,
    groups: Grouping,
    trials: int,
    seed: int,
    name: str = "cfg",
    independent_groups: bool = False,
    backend: str | None = None,
    max_decay: int = 3,
) -> McReport:
    check_trials(trials)
    batch = contention.resolve_many(
        frac, groups, seed, trials, independent_groups=independent_groups, backend=backend
    )
    x = frac.x
    m, n = x.shape
    N = trials
    report = McReport()

    def add(test, est, se, bound, kind):
        report.rows.append(McRow(f"{name}:{test}", est, se, bound, kind, SIGMA_K, N, seed))

    hit = [batch.assign == i for i in range(m)]
    for i in range(m):
        freq = hit[i].mean(axis=0)
        for j in range(n):
            p = float(freq[j])
            add(f"marginal[i={i},j={j}]", p, binomial_stderr(p, N), float(x[i, j]), "equal")
    for i in range(m):
        for j in range(n):
            for k in range(j + 1, n):
                if x[i, j] <= 0 or x[i, k] <= 0:
                    continue
                grouped = groups.together(i, j, k)
                p = float((hit[i][:, j] & hit[i][:, k]).mean())
                label = "strong" if grouped else "negcorr"
                add(f"{label}[i={i},j={j},k={k}]", p, binomial_stderr(p, N), pair_bound(x[i, j], x[i, k], grouped), "upper")
    first = (batch.iters == 1).mean(axis=1)
    p = float(first.mean())
    add("assigned-iter1", p, float(first.std(ddof=1) / math.sqrt(N)), 1 - math.exp(-1), "equal")
    for ell in range(1, max_decay + 1):
        left = (batch.iters > ell).mean(axis=1)
        add(f"unassigned-after[{ell}]", float(left.mean()), float(left.std(ddof=1) / math.sqrt(N)), math.exp(-ell), "equal")
    return report


def iteration_counts(batch) -> np.ndarray:
    """Rounds used per trial (the slowest job's iteration)."""
    return batch.iters.max(axis=1)


# -- grid and grouping checks -------------------------------------------------


def rho_draws(seed: int, trials: int, trial_start: int = 0) -> np.ndarray:
    prefix = rngmod.trial_prefix_np(seed, np.arange(trial_start, trial_start + trials, dtype=np.uint64))
    return rngmod.rho_from_np(rngmod.draw_np(prefix, 0, 0, 0, rngmod.RHO))


def grid_starts(theta: float, rho: np.ndarray) -> np.ndarray:
    k = _fallback.grid_index(np.full(rho.shape, float(theta)), rho, POW10, KMIN)
    return rho * POW10[k - KMIN]


def grid_start_check(thetas, trials: int, seed: int) -> McReport:
    rho = rho_draws(seed, trials)
    report = McReport()
    for theta in thetas:
        g = grid_starts(theta, rho)
        report.rows.append(
            McRow(f"grid-mean[theta={theta:g}]", float(g.mean()), float(g.std(ddof=1) / math.sqrt(trials)),
                  GRID_FACTOR * theta, "upper", SIGMA_K, trials, seed)
        )
        report.rows.append(
            McRow(f"grid-min[theta={theta:g}]", float(g.min()), 0.0, 0.1 * theta, "above", 0.0, trials, seed)
        )
    return report


def _association(tables: SchedTables, seed: int, trial_start: int, trials: int):
    prefix = rngmod.trial_prefix_np(seed, np.arange(trial_start, trial_start + trials, dtype=np.uint64))
    I, J, _theta, assoc, k, _rho = _fallback.sched_context(tables, prefix)
    return I, J, assoc, k


def tail_bound_check(
    inst: Instance, rects: RectangleSet, trials: int, seed: int, chunk: int = 2000, name: str = "tail"
) -> McReport:
    """Associated height per grid interval.

    For every associated bad pair (i, j) the other jobs associated with the
    same interval on i should total at most TAIL_LEVEL with probability at
    least TAIL_BOUND; for every interval index the expected associated
    height should be at most the coin probability.
    """
    tables = SchedTables.build(inst, rects)
    x = tables.x
    m = x.shape[0]
    hits: dict = {}
    seen: dict = {}
    height_sum: dict = {}
    height_sq: dict = {}
    for start in range(0, trials, chunk):
        T = min(chunk, trials - start)
        I, J, assoc, k = _association(tables, seed, start, T)
        if I.size == 0:
            break
        xp = x[I, J]
        kmin = int(k.min())
        span = int(k.max()) - kmin + 1
        slot = I[None, :] * span + (k - kmin)
        totals = np.zeros((T, m * span))
        rows = np.broadcast_to(np.arange(T)[:, None], slot.shape)
        np.add.at(totals, (rows[assoc], slot[assoc]), np.broadcast_to(xp, slot.shape)[assoc])
        others = totals[rows, slot] - xp[None, :]
        ok = others <= TAIL_LEVEL + 1e-12
        for q in range(I.size):
            a = assoc[:, q]
            c = int(a.sum())
            if c:
                key = (int(I[q]), int(J[q]))
                seen[key] = seen.get(key, 0) + c
                hits[key] = hits.get(key, 0) + int((ok[:, q] & a).sum())
        for col in range(m * span):
            i, kk = divmod(col, span)
            key = (i, kk + kmin)
            v = totals[:, col]
            height_sum[key] = height_sum.get(key, 0.0) + float(v.sum())
            height_sq[key] = height_sq.get(key, 0.0) + float((v * v).sum())
    report = McReport()
    for key in sorted(seen):
        c = seen[key]
        p = hits[key] / c
        report.rows.append(
            McRow(f"{name}:tail[i={key[0]},j={key[1]}]", p, binomial_stderr(p, c), TAIL_BOUND, "lower", SIGMA_K, c, seed)
        )
    for key in sorted(height_sum):
        mean = height_sum[key] / trials
        var = max(height_sq[key] / trials - mean * mean, 0.0) * trials / max(trials - 1, 1)
        if height_sum[key] == 0:
            continue
        report.rows.append(
            McRow(f"{name}:height[i={key[0]},k={key[1]}]", mean, math.sqrt(var / trials), 0.5, "upper", SIGMA_K, trials, seed)
        )
    return report


def bad_overlap_sums(decomp: ConfigDecomposition, rho: float) -> list[float]:
    """Per (configuration, interval): sum over bad rectangles of |I cap R_hat| / p."""
    out = []
    for _, f in decomp.configs:
        per_k: dict = {}
        for r in f:
            x_ij = decomp.pair_height[(r.machine, r.job)]
            if classify_rectangle(r.start, r.length, x_ij) != BAD:
                continue
            lo = r.start + shift_amount(r.start, r.length, x_ij)
            hi = lo + r.length
            # a rectangle starting at 0 touches every interval below hi; 30 decades is plenty
            k = _interval_of(lo, rho) if lo > 0 else max(KMIN, _interval_of(hi, rho) - 30)
            while True:
                a, b = rho * POW10[k - KMIN], rho * POW10[k - KMIN + 1]
                if a >= hi:
                    break
                cover = min(b, hi) - max(a, lo)
                if cover > 0:
                    per_k[k] = per_k.get(k, 0.0) + cover / r.length
                k += 1
        out.extend(per_k.values())
    return out


def _interval_of(t: float, rho: float) -> int:
    k = _fallback.grid_index(np.array([t]), np.array([rho]), POW10, KMIN)
    return int(k[0])


def bad_overlap_check(decomp: ConfigDecomposition, rho, seed: int = 0, name: str = "overlap") -> McReport:
    """Worst bad-rectangle coverage of any grid interval, per rho value."""
    rhos = np.atleast_1d(np.asarray(rho, dtype=float))
    worst = 0.0
    for r in rhos:
        sums = bad_overlap_sums(decomp, float(r))
        if sums:
            worst = max(worst, max(sums))
    row = McRow(f"{name}[i={decomp.machine}]", worst, 0.0, 1.0 + OVERLAP_TOL, "upper", 0.0, int(rhos.size), seed)
    return McReport([row])


def decomposition_report(decomp: ConfigDecomposition, name: str = "decomp") -> McReport:
    i = decomp.machine
    return McReport(
        [
            McRow(f"{name}:weight[i={i}]", decomp.total_weight(), 0.0, 1 + 1e-6, "upper", 0.0),
            McRow(f"{name}:disjoint[i={i}]", 0.0 if decomp.disjoint() else 1.0, 0.0, 0.0, "upper", 0.0),
            McRow(f"{name}:rebuild[i={i}]", decomp.reconstruction_error(), 0.0, decomp.budget(), "upper", 0.0),
        ]
    )
