"""Iterative fair contention resolution.

Given a fractional assignment x[i, j] (each column summing to one) and,
per machine, a family of disjoint job groups whose heights sum to at most
one, every iteration:

1. draws potential tickets N~[i, j] ~ Pois~(x[i, j]) for each pair;
2. lets every group on every machine recommend one member j with
   probability x[i, j] (or nobody);
3. turns the potential tickets of recommended pairs into real tickets;
4. assigns each job to the machine of one of its real tickets, chosen
   uniformly; jobs without real tickets wait for the next iteration.

Iterations repeat on the unassigned jobs with fresh randomness.  Each job
lands on machine i with probability exactly x[i, j]; two jobs sharing a
group on i land there together with probability at most
(e^x + e^x') / (1 + e) * x * x'.

Two execution paths exist.  :func:`run_round_iteration` / :func:`resolve`
follow the steps literally for one trial; :func:`resolve_many` runs whole
Monte Carlo batches on the compiled kernel (or its numpy fallback).  Both
consume the same addressed random stream, so trial t of a batch equals
``resolve(..., trial=t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend, rng as rngmod
from .rng import Stream

GROUP_TOL = 1e-9
CDF_LEN = 24  # Pois~(lambda <= 1) mass beyond k = 23 is < 1e-22
TAIL_CUTOFF = 1e-15
_FACT = np.array([float(math.factorial(k)) for k in range(CDF_LEN + 40)])


class GroupingError(ValueError):
    pass


class NonTermination(RuntimeError):
    pass


# -- distributions ------------------------------------------------------------


def pois_pmf(lam: float, k: int) -> float:
    if not 0 <= lam <= 1:
        raise ValueError("rate must lie in [0, 1]")
    if lam == 0:
        return 1.0 if k == 0 else 0.0
    return math.exp(-lam) * lam**k / math.factorial(k)


def tilde_pois_pmf(lam: float, k: int) -> float:
    """Pois~(lam): mass at k >= 1 is 1/lam times the Poisson mass; the rest sits at 0."""
    if not 0 < lam <= 1:
        raise ValueError("rate must lie in (0, 1]")
    if k == 0:
        return 1.0 + math.expm1(-lam) / lam
    return math.exp(-lam) * lam ** (k - 1) / math.factorial(k)


def _cdf_until_tail(pmf, lam: float) -> np.ndarray:
    vals, total, k = [], 0.0, 0
    while True:
        total += pmf(lam, k)
        vals.append(total)
        if 1.0 - total < TAIL_CUTOFF or k > 60:
            return np.array(vals)
        k += 1


def _sample_from_cdf(cdf: np.ndarray, gen: np.random.Generator, size):
    u = gen.random(size)
    out = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    return int(out) if size is None else out


def sample_pois(lam: float, gen: np.random.Generator, size=None):
    """Poisson(lam) by inverse-CDF accumulation; ``gen`` is a numpy Generator."""
    if lam == 0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    return _sample_from_cdf(_cdf_until_tail(pois_pmf, lam), gen, size)


def sample_tilde_pois(lam: float, gen: np.random.Generator, size=None):
    if not 0 < lam <= 1:
        raise ValueError("rate must lie in (0, 1]")
    return _sample_from_cdf(_cdf_until_tail(tilde_pois_pmf, lam), gen, size)


def tilde_pois_cdf_table(x: np.ndarray) -> np.ndarray:
    """Inverse-CDF tables of Pois~(x[i, j]), shape (m, n, CDF_LEN).

    Zero-height pairs get an all-ones table so they always draw 0 tickets.
    """
    x = np.asarray(x, dtype=float)
    k = np.arange(CDF_LEN, dtype=float)
    lam = np.where(x > 0, x, 1.0)[..., None]
    pmf = np.exp(-lam) * lam ** np.maximum(k - 1, 0) / _FACT[:CDF_LEN]
    pmf[..., 0] = 1.0 + np.expm1(-lam[..., 0]) / lam[..., 0]
    cdf = np.cumsum(pmf, axis=-1)
    cdf[x <= 0] = 1.0
    return np.ascontiguousarray(cdf)


def tickets_from_cdf(cdf_row: np.ndarray, u: float) -> int:
    k = 0
    last = cdf_row.size - 1
    while k < last and u >= cdf_row[k]:
        k += 1
    return k


# -- inputs -------------------------------------------------------------------


@dataclass(frozen=True)
class FracAssignment:
    x: np.ndarray  # (m, n)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise ValueError("fractional assignment must be a 2-D array")
        if (x < 0).any() or (x > 1 + GROUP_TOL).any():
            raise ValueError("entries must lie in [0, 1]")
        bad = np.nonzero(np.abs(x.sum(axis=0) - 1.0) > GROUP_TOL)[0]
        if bad.size:
            raise ValueError(f"column sums must equal 1 (job {int(bad[0])})")
        object.__setattr__(self, "x", x)

    @property
    def machine_count(self) -> int:
        return self.x.shape[0]

    @property
    def job_count(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class Grouping:
    """Per machine, disjoint job subsets; unlisted jobs are singletons."""

    groups: tuple[tuple[frozenset, ...], ...]

    @classmethod
    def from_lists(cls, machine_count: int, layout=None) -> "Grouping":
        layout = layout or {}
        if isinstance(layout, dict):
            rows = [layout.get(i, ()) for i in range(machine_count)]
        else:
            rows = list(layout) + [()] * (machine_count - len(layout))
        return cls(tuple(tuple(frozenset(g) for g in row if len(g) > 0) for row in rows))

    @classmethod
    def singletons(cls, machine_count: int) -> "Grouping":
        return cls(tuple(() for _ in range(machine_count)))

    def labels(self, job_count: int) -> np.ndarray:
        """labels[i, j] = smallest member of j's group on machine i (j itself if ungrouped)."""
        lab = np.tile(np.arange(job_count, dtype=np.int64), (len(self.groups), 1))
        for i, row in enumerate(self.groups):
            seen: set = set()
            for g in row:
                if seen & g:
                    raise GroupingError(f"groups on machine {i} overlap")
                seen |= g
                lead = min(g)
                for j in g:
                    lab[i, j] = lead
        return lab

    def together(self, i: int, j: int, k: int) -> bool:
        return any(j in g and k in g for g in self.groups[i])

    def check(self, frac: FracAssignment) -> None:
        if len(self.groups) != frac.machine_count:
            raise GroupingError("grouping has the wrong number of machines")
        for i, row in enumerate(self.groups):
            for g in row:
                if any(not 0 <= j < frac.job_count for j in g):
                    raise GroupingError(f"group {sorted(g)} on machine {i} names an unknown job")
        self.labels(frac.job_count)
        for i, row in enumerate(self.groups):
            for g in row:
                total = sum(frac.x[i, j] for j in sorted(g))
                if total > 1 + GROUP_TOL:
                    raise GroupingError(f"group {sorted(g)} on machine {i} has height {total:.12g} > 1")


# -- outputs ------------------------------------------------------------------


@dataclass
class IterationOutcome:
    assigned: dict[int, int | None]  # active job -> machine, or None when unassigned
    potential: np.ndarray | None = field(default=None, repr=False)  # N~[i, j]
    recommended: np.ndarray | None = field(default=None, repr=False)  # B[i, j]
    real: np.ndarray | None = field(default=None, repr=False)  # N[i, j]


@dataclass(frozen=True)
class Assignment:
    machine: tuple[int, ...]
    iteration: tuple[int, ...]
    iterations: int

    def to_dict(self) -> dict:
        return {"assign": list(self.machine), "iters": list(self.iteration)}


def default_max_iters(n: int) -> int:
    return 64 + math.ceil(8 * math.log(max(n, 1)))


# -- scalar reference path ----------------------------------------------------


def _recommend(x, labels, active_sorted, stream: Stream, iteration: int, independent: bool):
    m = x.shape[0]
    rec = np.zeros(x.shape, dtype=bool)
    for i in range(m):
        if independent:
            # mutation hook: breaks the one-recommendation-per-group coupling
            for j in active_sorted:
                rec[i, j] = stream.unit(iteration, i, j, rngmod.GROUP) < x[i, j]
            continue
        members: dict[int, list[int]] = {}
        for j in active_sorted:
            members.setdefault(int(labels[i, j]), []).append(j)
        for lead, js in members.items():
            u = stream.unit(iteration, i, lead, rngmod.GROUP)
            cum = 0.0
            for j in js:
                cum += x[i, j]
                if u < cum:
                    rec[i, j] = True
                    break
    return rec


def _iterate(x, labels, cdf, active_sorted, stream, iteration, independent, diagnostics):
    m = x.shape[0]
    rec = _recommend(x, labels, active_sorted, stream, iteration, independent)
    potential = np.zeros(x.shape, dtype=np.int64) if diagnostics else None
    real = np.zeros(x.shape, dtype=np.int64)
    assigned: dict[int, int | None] = {}
    for j in active_sorted:
        for i in range(m):
            if x[i, j] <= 0:
                continue
            if rec[i, j] or diagnostics:
                k = tickets_from_cdf(cdf[i, j], stream.unit(iteration, i, j, rngmod.TICKET))
                if diagnostics:
                    potential[i, j] = k
                if rec[i, j]:
                    real[i, j] = k
        total = int(real[:, j].sum())
        if total == 0:
            assigned[j] = None
            continue
        r = stream.index(iteration, 0, j, rngmod.PICK, total)
        acc = 0
        for i in range(m):
            acc += int(real[i, j])
            if acc > r:
                assigned[j] = i
                break
    if diagnostics:
        return IterationOutcome(assigned, potential, rec, real)
    return IterationOutcome(assigned)


def run_round_iteration(
    frac: FracAssignment,
    groups: Grouping,
    active,
    seed: int,
    trial: int = 0,
    iteration: int = 1,
    diagnostics: bool = False,
    independent_groups: bool = False,
) -> IterationOutcome:
    """One iteration of the rounding over the ``active`` jobs."""
    groups.check(frac)
    labels = groups.labels(frac.job_count)
    cdf = tilde_pois_cdf_table(frac.x)
    return _iterate(
        frac.x, labels, cdf, sorted(active), Stream(seed, trial), iteration, independent_groups, diagnostics
    )


def resolve(
    frac: FracAssignment,
    groups: Grouping,
    seed: int,
    trial: int = 0,
    max_iters: int | None = None,
    independent_groups: bool = False,
) -> Assignment:
    """Round ``frac`` to an integral assignment (one trial, scalar path)."""
    groups.check(frac)
    return _resolve_labels(frac.x, groups.labels(frac.job_count), seed, trial, max_iters, independent_groups)


def _resolve_labels(x, labels, seed, trial, max_iters=None, independent_groups=False) -> Assignment:
    n = x.shape[1]
    max_iters = default_max_iters(n) if max_iters is None else max_iters
    cdf = tilde_pois_cdf_table(x)
    stream = Stream(seed, trial)
    machine = [-1] * n
    when = [0] * n
    active = list(range(n))
    it = 0
    while active:
        it += 1
        if it > max_iters:
            raise NonTermination(f"{len(active)} jobs unassigned after {max_iters} iterations")
        out = _iterate(x, labels, cdf, active, stream, it, independent_groups, False)
        for j, i in out.assigned.items():
            if i is not None:
                machine[j], when[j] = i, it
        active = [j for j in active if machine[j] < 0]
    return Assignment(tuple(machine), tuple(when), it)


# -- batch path ---------------------------------------------------------------


@dataclass
class ResolveBatch:
    assign: np.ndarray  # (trials, n) machine per job
    iters: np.ndarray  # (trials, n) iteration in which each job was assigned
    tickets1: np.ndarray  # (trials, n) real tickets held in iteration 1
    seed: int
    trial_start: int

    @property
    def trials(self) -> int:
        return self.assign.shape[0]


def resolve_many(
    frac: FracAssignment,
    groups: Grouping,
    seed: int,
    trials: int,
    trial_start: int = 0,
    max_iters: int | None = None,
    independent_groups: bool = False,
    backend: str | None = None,
) -> ResolveBatch:
    """Run ``trials`` independent roundings on the fast backend."""
    groups.check(frac)
    n = frac.job_count
    max_iters = default_max_iters(n) if max_iters is None else max_iters
    assign, iters, tickets = _backend.resolve_batch(
        frac.x,
        groups.labels(n),
        tilde_pois_cdf_table(frac.x),
        seed,
        trial_start,
        trials,
        max_iters,
        independent_groups,
        backend=backend,
    )
    if (assign < 0).any():
        raise NonTermination(f"some job unassigned after {max_iters} iterations")
    return ResolveBatch(assign, iters, tickets, seed, trial_start)
