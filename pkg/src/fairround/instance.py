"""Scheduling instances for R||sum w_j C_j: model, validation, I/O, generation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np


class InstanceError(ValueError):
    """Raised for malformed or invalid instance input."""


@dataclass(frozen=True)
class Instance:
    """``proc[i][j]`` is the processing time of job j on machine i, or None when j cannot run on i."""

    proc: tuple[tuple[int | None, ...], ...]
    weight: tuple[float, ...]

    @property
    def machine_count(self) -> int:
        return len(self.proc)

    @property
    def job_count(self) -> int:
        return len(self.weight)

    def p(self, i: int, j: int) -> int | None:
        return self.proc[i][j]

    def eligible(self, j: int) -> list[int]:
        return [i for i in range(self.machine_count) if self.proc[i][j] is not None]

    def proc_array(self) -> np.ndarray:
        """Processing times as floats with 0 marking absent pairs."""
        return np.array([[0.0 if v is None else float(v) for v in row] for row in self.proc])

    def to_dict(self) -> dict[str, Any]:
        return {
            "machines": self.machine_count,
            "jobs": self.job_count,
            "p": [list(row) for row in self.proc],
            "w": list(self.weight),
        }


def make_instance(proc, weight) -> Instance:
    """Build an Instance from nested lists and raise :class:`InstanceError` if invalid."""
    inst = Instance(
        tuple(tuple(None if v is None else int(v) for v in row) for row in proc),
        tuple(float(w) for w in weight),
    )
    problems = validate(inst)
    if problems:
        raise InstanceError("; ".join(problems))
    return inst


def validate(inst: Instance) -> list[str]:
    """Return human-readable violations; empty when the instance is valid.

    Jobs and machines are reported 1-based.
    """
    out: list[str] = []
    m, n = inst.machine_count, inst.job_count
    if m < 1:
        out.append("instance needs at least one machine")
    if n < 1:
        out.append("instance needs at least one job")
    for i, row in enumerate(inst.proc):
        if len(row) != n:
            out.append(f"row of machine {i + 1} has {len(row)} entries, expected {n}")
            continue
        for j, v in enumerate(row):
            if v is None:
                continue
            if isinstance(v, bool) or not isinstance(v, int):
                out.append(f"p_ij must be an integer (machine {i + 1}, job {j + 1})")
            elif v < 1:
                out.append(f"p_ij must be >= 1 (machine {i + 1}, job {j + 1})")
    for j, w in enumerate(inst.weight):
        if not (isinstance(w, (int, float)) and math.isfinite(w) and w > 0):
            out.append(f"weight of job {j + 1} must be positive")
    if not out:
        for j in range(n):
            if not inst.eligible(j):
                out.append(f"job {j + 1} has no eligible machine")
    return out


_FIELDS = {"machines", "jobs", "p", "w"}
# reserved for provenance written by the CLI; never affects the instance
_META = "meta"


def parse_instance(text: str) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InstanceError("instance must be a JSON object")
    unknown = set(data) - _FIELDS - {_META}
    if unknown:
        raise InstanceError(f"unknown fields: {sorted(unknown)}")
    missing = _FIELDS - set(data)
    if missing:
        raise InstanceError(f"missing fields: {sorted(missing)}")
    m, n, p, w = data["machines"], data["jobs"], data["p"], data["w"]
    if not (isinstance(m, int) and isinstance(n, int)) or isinstance(m, bool) or isinstance(n, bool):
        raise InstanceError("machines and jobs must be integers")
    if not isinstance(p, list) or len(p) != m or not all(isinstance(r, list) for r in p):
        raise InstanceError(f"p must be a list of {m} rows")
    if not isinstance(w, list) or len(w) != n:
        raise InstanceError(f"w must be a list of {n} numbers")
    for row in p:
        for v in row:
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise InstanceError("p entries must be integers or null")
            if isinstance(v, float) and not v.is_integer():
                raise InstanceError("p entries must be integers or null")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in w):
        raise InstanceError("w entries must be numbers")
    proc = tuple(tuple(None if v is None else int(v) for v in row) for row in p)
    inst = Instance(proc, tuple(float(x) for x in w))
    problems = validate(inst)
    if problems:
        raise InstanceError("; ".join(problems))
    return inst


def serialize_instance(inst: Instance, meta: dict[str, Any] | None = None) -> str:
    data = inst.to_dict()
    data["w"] = [int(x) if float(x).is_integer() else x for x in data["w"]]
    if meta:
        data[_META] = meta
    return json.dumps(data, sort_keys=True) + "\n"


@dataclass(frozen=True)
class GenParams:
    machine_count: int
    job_count: int
    p_min: int = 1
    p_max: int = 10
    w_min: float = 1.0
    w_max: float = 1.0
    absent_prob: float = 0.0

    def check(self) -> list[str]:
        out = []
        if self.machine_count < 1 or self.job_count < 1:
            out.append("machine and job counts must be positive")
        if not 1 <= self.p_min <= self.p_max:
            out.append("need 1 <= p_min <= p_max")
        if not 0 < self.w_min <= self.w_max:
            out.append("need 0 < w_min <= w_max")
        if not 0 <= self.absent_prob < 1:
            out.append("absent_prob must lie in [0, 1)")
        return out


def generate_random(params: GenParams, seed: int) -> Instance:
    """Random instance, a pure function of (params, seed).

    Integer weights are drawn when both weight bounds are integral, so files
    stay readable; otherwise weights are uniform reals.
    """
    problems = params.check()
    if problems:
        raise InstanceError("; ".join(problems))
    rng = np.random.default_rng(seed)
    m, n = params.machine_count, params.job_count
    cols = []
    for _ in range(n):
        while True:
            times = rng.integers(params.p_min, params.p_max + 1, size=m)
            absent = rng.random(m) < params.absent_prob
            if not absent.all():
                break
        cols.append([None if a else int(t) for t, a in zip(times, absent)])
    proc = [[cols[j][i] for j in range(n)] for i in range(m)]
    if float(params.w_min).is_integer() and float(params.w_max).is_integer():
        weight = rng.integers(int(params.w_min), int(params.w_max) + 1, size=n).astype(float)
    else:
        weight = rng.uniform(params.w_min, params.w_max, size=n)
    return make_instance(proc, weight.tolist())
