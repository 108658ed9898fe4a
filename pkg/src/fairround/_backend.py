"""Kernel dispatch: compiled extension when importable, numpy otherwise.

``FAIRROUND_BACKEND=python`` forces the fallback.  ``FAIRROUND_THREADS``
splits a batch into contiguous trial chunks run on a thread pool; since
every draw is addressed by its trial number the result does not depend
on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

MIN_CHUNK = 256


def available() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def default_name() -> str:
    forced = os.environ.get("FAIRROUND_BACKEND", "").strip().lower()
    if forced in ("python", "numpy", "fallback"):
        return "python"
    return "compiled" if _compiled is not None else "python"


def _module(name: str | None):
    name = default_name() if name is None else name
    if name == "python":
        return _fallback
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def thread_count() -> int:
    raw = os.environ.get("FAIRROUND_THREADS", "")
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"FAIRROUND_THREADS must be a positive integer, got {raw!r}") from exc
    if value < 1:
        raise ValueError(f"FAIRROUND_THREADS must be a positive integer, got {raw!r}")
    return value


def _chunks(trial_start: int, trials: int, threads: int):
    parts = max(1, min(threads, trials // MIN_CHUNK))
    bounds = np.linspace(0, trials, parts + 1).astype(int)
    return [(trial_start + int(a), int(b - a)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run(fn, trial_start, trials, threads):
    chunks = _chunks(trial_start, trials, threads)
    if len(chunks) <= 1:
        return fn(trial_start, trials)
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda c: fn(*c), chunks))
    return tuple(np.concatenate(cols) for cols in zip(*parts))


def resolve_batch(x, labels, cdf, seed, trial_start, trials, max_iters, independent, backend=None, threads=None):
    mod = _module(backend)
    x = np.ascontiguousarray(x, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    cdf = np.ascontiguousarray(cdf, dtype=np.float64)
    seed = int(seed) & ((1 << 64) - 1)
    if trials == 0:
        empty = np.zeros((0, x.shape[1]), dtype=np.int32)
        return empty, empty.copy(), empty.copy()

    def fn(start, count):
        return mod.resolve_batch(x, labels, cdf, seed, start, count, int(max_iters), bool(independent))

    return _run(fn, trial_start, trials, thread_count() if threads is None else threads)


def sched_batch(tables, seed, trial_start, trials, baseline, max_iters, backend=None, threads=None):
    mod = _module(backend)
    seed = int(seed) & ((1 << 64) - 1)
    if trials == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int32)

    def fn(start, count):
        return mod.sched_batch(tables, seed, start, count, bool(baseline), int(max_iters))

    return _run(fn, trial_start, trials, thread_count() if threads is None else threads)
