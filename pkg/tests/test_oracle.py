import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairround import oracle as O, sched_round as S, suites
from fairround.contention import FracAssignment, Grouping
from fairround.instance import GenParams, generate_random, make_instance
from fairround.lp import Rectangle, RectangleSet, solve_instance
from fairround.rng import Stream


def rect_set(m, n, rects):
    return RectangleSet(m, n, tuple(sorted(rects, key=lambda r: (r.machine, r.job, r.start))))


def test_smith_order():
    assert O.smith_order([(1, 1), (2, 1)]) == [0, 1]
    assert O.single_machine_cost([(1, 1), (2, 1)]) == 4
    assert O.smith_order([(2, 1), (4, 2)]) == [0, 1]
    assert O.single_machine_cost([(2, 1), (4, 2)]) == 14 == 2 * 4 + 1 * 6
    assert O.smith_order([(5, 3)]) == [0]


def test_brute_force_examples():
    assert O.brute_force_opt(make_instance([[1, 2]], [1, 1]))[0] == 4
    assert O.brute_force_opt(make_instance([[1, 1], [1, 1]], [1, 1]))[0] == 2
    assert O.brute_force_opt(make_instance([[3], [5]], [1])) == (3.0, (0,))


def test_brute_force_guard():
    with pytest.raises(O.TooLarge):
        O.brute_force_opt(make_instance([[1] * 24, [1] * 24], [1] * 24))


def test_brute_force_respects_absent():
    opt, arg = O.brute_force_opt(make_instance([[1, None], [None, 1]], [1, 1]))
    assert arg == (0, 1) and opt == 2


def test_decompose_examples():
    one = O.config_decompose(rect_set(1, 1, [Rectangle(0, 0, 0, 3, 1.0)]), 0)
    assert [(round(z, 12), len(f)) for z, f in one.configs] == [(1.0, 1)]
    two = O.config_decompose(rect_set(1, 2, [Rectangle(0, 0, 0, 3, 1.0), Rectangle(0, 1, 3, 2, 1.0)]), 0)
    assert [(round(z, 12), len(f)) for z, f in two.configs] == [(1.0, 2)]
    half = O.config_decompose(rect_set(1, 2, [Rectangle(0, 0, 0, 3, 0.5), Rectangle(0, 1, 0, 3, 0.5)]), 0)
    assert sorted(round(z, 12) for z, _ in half.configs) == [0.5, 0.5]
    for d in (one, two, half):
        assert d.disjoint() and d.total_weight() <= 1 + 1e-6 and d.reconstruction_error() <= d.budget()


def test_decompose_rejects_overload():
    with pytest.raises(O.LoadViolation):
        O.config_decompose(rect_set(1, 2, [Rectangle(0, 0, 0, 3, 0.7), Rectangle(0, 1, 1, 3, 0.7)]), 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_decompose_lp_solutions(seed):
    inst = generate_random(GenParams(2, 5, 1, 5, 1, 3, 0.2), seed)
    _, rects = solve_instance(inst)
    for i in range(2):
        d = O.config_decompose(rects, i)
        assert d.disjoint() and d.total_weight() <= 1 + 1e-6
        assert d.reconstruction_error() <= d.budget()


def test_decompose_bad_rich_layers():
    inst, rects = suites.bad_rich()
    d = O.config_decompose(rects, 0)
    assert d.disjoint() and d.reconstruction_error() <= d.budget() and d.total_weight() <= 1 + 1e-6


def test_prefix_length():
    assert O.shifted_prefix_length(10, 4, 0.5, 14.0) == 0
    assert O.shifted_prefix_length(10, 4, 0.5, 100.0) == 4
    assert O.shifted_prefix_length(0, 10, 0.05, 4.0) == 4


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.integers(1, 20), st.floats(0.01, 1.0), st.floats(0, 80), st.floats(0, 80))
def test_prefix_monotone_bounded(s, p, x, a, b):
    lo, hi = sorted((a, b))
    la, lb = O.shifted_prefix_length(s, p, x, lo), O.shifted_prefix_length(s, p, x, hi)
    assert 0 <= la <= lb <= p


def test_mutual_delay_cases():
    # far apart, overlapping after shifting, and the self case
    assert O.mutual_delay_residual(0, 40, 5, 0.05) < 1e-6 * 5
    assert O.mutual_delay_residual(3, 5, 8, 0.4) < 1e-6 * 8
    assert O.self_delay_residual(4, 7, 0.2) < 1e-6 * 7


def test_event_law():
    # P[theta <= theta* | R] equals the shifted prefix length over p
    s, p, x = 4, 6, 0.3
    rects = rect_set(1, 1, [Rectangle(0, 0, s, p, 1.0)])
    thetas = np.array([S.choose_representatives(rects, Stream(8, t))[(0, 0)].theta for t in range(50_000)])
    for star in (8.0, 10.5, 12.0, 15.0):
        expect = O.shifted_prefix_length(s, p, 1.0, star) / p
        got = (thetas <= star).mean()
        assert abs(got - expect) <= 4 * math.sqrt(max(expect * (1 - expect), 1e-12) / thetas.size) + 1e-12


def test_capacity_law_lp():
    _, inst = suites.desk_suite()[18]
    _, rects = solve_instance(inst)
    thetas = np.linspace(0.1, 60, 100)
    assert all(O.capacity_excess(rects, i, thetas) <= 1e-9 for i in range(inst.machine_count))


def test_mc_estimate():
    assert O.mc_estimate(lambda g, n: np.ones(n), 100, 0) == (1.0, 0.0)
    mean, se = O.mc_estimate(lambda g, n: g.random(n) < 0.5, 10**6, 1)
    assert abs(mean - 0.5) <= 0.002 and se == pytest.approx(0.0005, rel=1e-3)
    assert O.mc_estimate(lambda g, n: g.random(n) < 0.3, 1000, 5) == O.mc_estimate(lambda g, n: g.random(n) < 0.3, 1000, 5)
    with pytest.raises(ValueError):
        O.mc_estimate(lambda g, n: np.ones(n), 1, 0)


def test_row_semantics():
    assert O.McRow("a", 1.1, 0.05, 1.0, "upper").passed
    assert not O.McRow("a", 1.3, 0.05, 1.0, "upper").passed
    assert O.McRow("a", 0.9, 0.05, 1.0, "lower").passed
    assert not O.McRow("a", 0.7, 0.05, 1.0, "equal").passed
    assert not O.McRow("a", 1.0, 0.0, 1.0, "above").passed


def test_report_csv_columns():
    rep = O.McReport([O.McRow("x", 0.5, 0.01, 0.5, "equal", 4.0, 10, 3)])
    lines = rep.to_csv().splitlines()
    assert lines[0] == ",".join(O.CSV_COLUMNS)
    assert lines[1].startswith("x,0.5,0.01,0.5,4.0,pass,10,3,")


def test_verify_split_job():
    frac = FracAssignment(np.array([[0.5], [0.5]]))
    rep = O.verify_rounding_properties(frac, Grouping.singletons(2), 10_000, 3)
    rows = rep.find("cfg:marginal")
    assert len(rows) == 2 and all(r.passed and r.bound == 0.5 for r in rows)


def test_verify_singletons_have_no_strong_rows():
    case = suites.contention_suite(1)[0]
    rep = O.verify_rounding_properties(case.frac, Grouping.singletons(case.frac.machine_count), 10_000, 4)
    assert rep.find("cfg:strong") == [] and rep.find("cfg:negcorr") and rep.passed


def test_pair_constant():
    assert O.ETA_PAIR < 0.589
    assert O.pair_bound(0.09, 0.09, True) == pytest.approx(O.ETA_PAIR * 0.0081)


def test_trials_floor():
    with pytest.raises(ValueError, match="trials below statistical floor"):
        O.check_trials(10)


def test_tail_vacuous_without_bad_jobs():
    inst = make_instance([[3, 2], [2, 2]], [1, 1])
    _, rects = solve_instance(inst)
    rep = O.tail_bound_check(inst, rects, 2000, 1)
    assert rep.rows == [] and rep.passed


def test_overlap_examples():
    one_bad = rect_set(1, 1, [Rectangle(0, 0, 0, 10, 0.05)])
    d = O.config_decompose(one_bad, 0)
    assert O.bad_overlap_check(d, [0.5, 0.3]).rows[0].estimate <= 1
    good = rect_set(1, 2, [Rectangle(0, 0, 0, 4, 1.0), Rectangle(0, 1, 4, 4, 1.0)])
    assert O.bad_overlap_check(O.config_decompose(good, 0), 0.5).rows[0].estimate == 0


def test_grid_start_check_small():
    rep = O.grid_start_check([0.3, 7.0], 20_000, 2)
    assert rep.passed and len(rep.rows) == 4
