"""Counter-based random streams.

Every random decision in the rounding is addressed by a key
``(seed, trial, iteration, machine, job, purpose)`` and hashed with the
splitmix64 finalizer.  No generator state is carried between draws, so a
trial can be replayed in isolation and Monte Carlo batches can be split
across threads in any order without changing results.

The same arithmetic is implemented three times: scalar Python (here),
vectorized numpy (here), and C (``_kernels.pyx``).  All three must agree
bit for bit; ``tests/test_backends.py`` enforces it.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB

# draw purposes
TICKET = 1
GROUP = 2
PICK = 3
REP = 4
TAU = 5
RHO = 6
COIN = 7
BASE = 8

INV53 = 1.0 / 9007199254740992.0  # 2**-53
RHO_MAX = 1.0 - INV53


def mix(z: int) -> int:
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def pack(iteration: int, machine: int, job: int, purpose: int) -> int:
    # iteration < 2**16, machine < 2**16, job < 2**24, purpose < 2**8
    return (iteration << 48) | (machine << 32) | (job << 8) | purpose


def trial_prefix(seed: int, trial: int) -> int:
    return mix(mix(seed & MASK64) ^ trial)


def draw(prefix: int, iteration: int, machine: int, job: int, purpose: int) -> int:
    """Raw 64-bit hash for one addressed draw."""
    return mix(mix(prefix ^ pack(iteration, machine, job, purpose)))


def to_unit(h: int) -> float:
    """Uniform on [0, 1) with 53-bit resolution."""
    return (h >> 11) * INV53


def to_open_unit(h: int) -> float:
    """Uniform on the open interval (0, 1); odd multiples of 2**-53."""
    return ((h >> 12) * 2 + 1) * INV53


def to_index(h: int, count: int) -> int:
    """Uniform integer in [0, count) computed exactly in 64-bit arithmetic."""
    return ((h >> 11) * count) >> 53


def rho_from(h: int) -> float:
    return min(0.1 + 0.9 * to_open_unit(h), RHO_MAX)


class Stream:
    """Addressable draws for one (seed, trial) pair."""

    __slots__ = ("seed", "trial", "prefix")

    def __init__(self, seed: int, trial: int = 0):
        self.seed = seed & MASK64
        self.trial = trial
        self.prefix = trial_prefix(self.seed, trial)

    def raw(self, iteration: int, machine: int, job: int, purpose: int) -> int:
        return draw(self.prefix, iteration, machine, job, purpose)

    def unit(self, iteration: int, machine: int, job: int, purpose: int) -> float:
        return to_unit(self.raw(iteration, machine, job, purpose))

    def open_unit(self, iteration: int, machine: int, job: int, purpose: int) -> float:
        return to_open_unit(self.raw(iteration, machine, job, purpose))

    def index(self, iteration: int, machine: int, job: int, purpose: int, count: int) -> int:
        return to_index(self.raw(iteration, machine, job, purpose), count)


# -- vectorized numpy versions ------------------------------------------------

_U = np.uint64


def mix_np(z: np.ndarray) -> np.ndarray:
    z = z + _U(GOLDEN)
    z = (z ^ (z >> _U(30))) * _U(MUL1)
    z = (z ^ (z >> _U(27))) * _U(MUL2)
    return z ^ (z >> _U(31))


def trial_prefix_np(seed: int, trials: np.ndarray) -> np.ndarray:
    base = mix(seed & MASK64)
    return mix_np(_U(base) ^ np.asarray(trials, dtype=np.uint64))


def draw_np(prefix: np.ndarray, iteration, machine, job, purpose: int) -> np.ndarray:
    """Broadcasting version of :func:`draw`; all address fields may be arrays."""
    packed = (
        (np.asarray(iteration, dtype=np.uint64) << _U(48))
        | (np.asarray(machine, dtype=np.uint64) << _U(32))
        | (np.asarray(job, dtype=np.uint64) << _U(8))
        | _U(purpose)
    )
    return mix_np(mix_np(prefix ^ packed))


def to_unit_np(h: np.ndarray) -> np.ndarray:
    return (h >> _U(11)).astype(np.float64) * INV53


def to_open_unit_np(h: np.ndarray) -> np.ndarray:
    return ((h >> _U(12)) * _U(2) + _U(1)).astype(np.float64) * INV53


def to_index_np(h: np.ndarray, count: np.ndarray) -> np.ndarray:
    return (((h >> _U(11)) * np.asarray(count, dtype=np.uint64)) >> _U(53)).astype(np.int64)


def rho_from_np(h: np.ndarray) -> np.ndarray:
    return np.minimum(0.1 + 0.9 * to_open_unit_np(h), RHO_MAX)
