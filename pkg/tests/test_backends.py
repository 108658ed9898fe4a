"""The scalar reference, the numpy fallback and the compiled kernels agree bit for bit."""

import numpy as np
import pytest

from fairround import _backend, contention as C, rng, suites
from fairround.lp import solve_instance
from fairround.sched_round import SchedTables, independent_round_solve, objective_samples, round_rectangles

BACKENDS = _backend.available()
needs_compiled = pytest.mark.skipif("compiled" not in BACKENDS, reason="extension not built")


def test_splitmix_reference_value():
    # first output of splitmix64 seeded with 0
    assert rng.mix(0) == 0xE220A8397B1DCDAF


def test_numpy_rng_matches_scalar():
    prefix = rng.trial_prefix_np(77, np.arange(50, dtype=np.uint64))
    h = rng.draw_np(prefix, 3, 2, 9, rng.TICKET)
    for t in range(50):
        s = rng.Stream(77, t)
        assert int(h[t]) == s.raw(3, 2, 9, rng.TICKET)
        assert rng.to_unit_np(h[t : t + 1])[0] == s.unit(3, 2, 9, rng.TICKET)
        assert rng.to_open_unit_np(h[t : t + 1])[0] == s.open_unit(3, 2, 9, rng.TICKET)
        assert rng.to_index_np(h[t : t + 1], 7)[0] == s.index(3, 2, 9, rng.TICKET, 7)


def test_unit_ranges():
    assert rng.to_unit(0) == 0.0 and rng.to_unit(2**64 - 1) < 1.0
    assert 0.0 < rng.to_open_unit(0) and rng.to_open_unit(2**64 - 1) < 1.0
    assert 0.1 < rng.rho_from(0) and rng.rho_from(2**64 - 1) < 1.0


CASES = suites.pairs_suite() + suites.contention_suite(6) + [suites.single_job_case()]


@pytest.mark.parametrize("independent", [False, True])
@pytest.mark.parametrize("case", CASES, ids=lambda c: c.name)
def test_resolve_backends_agree(case, independent):
    outs = [
        C.resolve_many(case.frac, case.groups, 31, 400, trial_start=5, independent_groups=independent, backend=b)
        for b in BACKENDS
    ]
    for other in outs[1:]:
        assert np.array_equal(outs[0].assign, other.assign)
        assert np.array_equal(outs[0].iters, other.iters)
        assert np.array_equal(outs[0].tickets1, other.tickets1)
    for t in (0, 1, 137, 399):
        ref = C.resolve(case.frac, case.groups, 31, trial=5 + t, independent_groups=independent)
        assert list(ref.machine) == outs[0].assign[t].tolist()
        assert list(ref.iteration) == outs[0].iters[t].tolist()


def _tables():
    inst, rects = suites.bad_rich()
    yield "badrich", inst, rects
    for name, inst in (suites.desk_suite()[k] for k in (3, 18)):
        yield name, inst, solve_instance(inst)[1]


@pytest.mark.parametrize("baseline", [False, True])
@pytest.mark.parametrize("name, inst, rects", list(_tables()), ids=lambda v: v if isinstance(v, str) else "")
def test_sched_backends_agree(name, inst, rects, baseline):
    tables = SchedTables.build(inst, rects)
    trials = 60 if name == "badrich" else 300
    outs = [objective_samples(tables, 9, trials, baseline=baseline, backend=b) for b in BACKENDS]
    for other in outs[1:]:
        assert np.array_equal(outs[0].objective, other.objective)
        assert np.array_equal(outs[0].iterations, other.iterations)
    for t in (0, 17, trials - 1):
        if baseline:
            ref = independent_round_solve(inst, rects, 9, t).objective
        else:
            ref = round_rectangles(inst, rects, 9, t)[2].objective
        assert ref == outs[0].objective[t]


@needs_compiled
def test_thread_count_does_not_change_results(monkeypatch):
    case = suites.contention_suite(1)[0]
    one = C.resolve_many(case.frac, case.groups, 3, 3000)
    monkeypatch.setenv("FAIRROUND_THREADS", "4")
    many = C.resolve_many(case.frac, case.groups, 3, 3000)
    assert np.array_equal(one.assign, many.assign) and np.array_equal(one.iters, many.iters)


def test_chunks_cover_range():
    chunks = _backend._chunks(10, 5000, 3)
    assert chunks[0][0] == 10 and sum(c for _, c in chunks) == 5000
    assert all(a + c == b for (a, c), (b, _) in zip(chunks, chunks[1:]))


def test_forced_fallback(monkeypatch):
    monkeypatch.setenv("FAIRROUND_BACKEND", "python")
    assert _backend.default_name() == "python"
    monkeypatch.setenv("FAIRROUND_THREADS", "zero")
    with pytest.raises(ValueError, match="FAIRROUND_THREADS"):
        _backend.thread_count()
