import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from fairround import simplex
from fairround.instance import GenParams, generate_random, make_instance
from fairround.lp import (
    InfeasibleHorizon,
    LpSolution,
    build_lp,
    default_horizon,
    extract_rectangles,
    lp_objective,
    solve_instance,
    solve_lp,
)
from fairround.oracle import brute_force_opt


def test_default_horizon():
    assert default_horizon(make_instance([[3]], [1])) == 3
    assert default_horizon(make_instance([[3, 1], [2, 4]], [1, 1])) == 7
    assert default_horizon(make_instance([[2, 2, 2], [2, 2, 2]], [1, 1, 1])) == 6


def test_build_counts():
    prob = build_lp(make_instance([[3]], [1]), 3)
    assert prob.column_count == 1 and prob.cover.shape[0] == 1 and prob.capacity.shape[0] == 3
    assert build_lp(make_instance([[1, 1]], [1, 1]), 2).column_count == 4


def test_build_structure():
    inst = make_instance([[2, None, 3], [1, 4, 2]], [1, 2, 3])
    prob = build_lp(inst, 8)
    assert all(s <= 8 - inst.proc[i][j] for i, j, s in prob.columns)
    assert (prob.cover.sum(axis=0) == 1).all()
    for c, (i, j, s) in enumerate(prob.columns):
        rows = np.nonzero(prob.capacity[:, c])[0]
        assert list(rows) == [i * 8 + t - 1 for t in range(s + 1, s + inst.proc[i][j] + 1)]


def test_infeasible_horizon():
    with pytest.raises(InfeasibleHorizon):
        build_lp(make_instance([[3]], [1]), 2)


def test_forced_single_job():
    sol, rects = solve_instance(make_instance([[3]], [1]))
    assert sol.objective == 3 and sol.positive() == [(0, 0, 0, 1.0)]
    assert rects.rects[0].height == 1 and rects.rects[0].length == 3


def test_shorter_job_first():
    sol = solve_lp(build_lp(make_instance([[1, 2]], [1, 1]), 3))
    assert sol.objective == pytest.approx(4)
    assert sol.positive() == [(0, 0, 0, 1.0), (0, 1, 1, 1.0)]


def test_lp_objective_examples():
    inst = make_instance([[3]], [2])
    prob = build_lp(inst, 3)
    assert lp_objective(LpSolution(prob, np.array([1.0]), 6.0, "optimal")) == 6
    inst = make_instance([[2]], [1])
    prob = build_lp(inst, 4)
    x = np.zeros(prob.column_count)
    x[prob.columns.index((0, 0, 0))] = 0.5
    x[prob.columns.index((0, 0, 2))] = 0.5
    assert lp_objective(LpSolution(prob, x, 0.0, "optimal")) == 3
    assert lp_objective(LpSolution(prob, np.zeros(prob.column_count), 0.0, "optimal")) == 0


def test_extract_rectangles_split():
    inst = make_instance([[2], [2]], [1])
    prob = build_lp(inst, 2)
    sol = LpSolution(prob, np.array([0.5, 0.5]), 2.0, "optimal")
    rects = extract_rectangles(sol)
    assert len(rects.rects) == 2 and rects.pair_height == {(0, 0): 0.5, (1, 0): 0.5}
    assert extract_rectangles(LpSolution(prob, np.array([1.0, 0.0]), 2.0, "optimal")).rects[0].machine == 0


def test_json_lists_positive_sorted():
    sol, _ = solve_instance(make_instance([[1, 2]], [1, 1]))
    data = __import__("json").loads(sol.to_json(seed=1))
    assert [(e["i"], e["j"], e["s"]) for e in data["x"]] == [(0, 0, 0), (0, 1, 1)] and data["seed"] == 1


def test_simplex_infeasible_status():
    res = simplex.solve([1.0, 1.0], [[1.0, 1.0]], [3.0], [[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0])
    assert res.status == "infeasible"


def test_simplex_degenerate_small():
    # min -x - y with x + y <= 1, x <= 1, y <= 1 (degenerate at the vertices)
    res = simplex.solve([-1.0, -1.0], np.zeros((0, 2)), [], [[1, 1], [1, 0], [0, 1]], [1, 1, 1])
    assert res.status == "optimal" and res.objective == pytest.approx(-1)


def _check_solution(inst, sol, rects):
    prob = sol.problem
    x = sol.values
    assert (x >= 0).all()
    assert np.allclose(prob.cover @ x, 1, atol=1e-7)
    assert (prob.capacity @ x <= 1 + 1e-7).all()
    for i in range(inst.machine_count):
        assert rects.max_load(i) <= 1 + 1e-7
    totals = np.zeros(inst.job_count)
    for r in rects.rects:
        assert r.height > 0
        totals[r.job] += r.height
    assert np.allclose(totals, 1, atol=1e-7)


@pytest.mark.parametrize("seed", range(6))
def test_against_highs(seed):
    inst = generate_random(GenParams(3, 6, 1, 5, 1, 5, 0.2), 500 + seed)
    prob = build_lp(inst)
    sol = solve_lp(prob)
    ref = linprog(prob.cost, A_ub=prob.capacity, b_ub=np.ones(prob.capacity.shape[0]),
                  A_eq=prob.cover, b_eq=np.ones(inst.job_count), method="highs")
    assert abs(sol.objective - ref.fun) <= 1e-7 * (1 + abs(ref.fun))
    _check_solution(inst, sol, extract_rectangles(sol))


def test_fractional_against_highs():
    # p = 2 on one machine and 3 on the other for all jobs; weights make splitting pay
    inst = make_instance([[2, 2, 2], [3, 3, 3]], [1, 1, 1])
    prob = build_lp(inst)
    sol = solve_lp(prob)
    ref = linprog(prob.cost, A_ub=prob.capacity, b_ub=np.ones(prob.capacity.shape[0]),
                  A_eq=prob.cover, b_eq=np.ones(3), method="highs")
    assert sol.objective == pytest.approx(ref.fun, rel=1e-9)


def test_deterministic():
    inst = generate_random(GenParams(2, 6, 1, 6, 1, 10, 0.1), 1018)
    a, b = solve_instance(inst)[0], solve_instance(inst)[0]
    assert a.objective == b.objective and np.array_equal(a.values, b.values)


def test_frozen_fractional_objective():
    # desk-18 has a fractional optimum; value frozen from this solver and confirmed by HiGHS
    inst = generate_random(GenParams(2, 7, 1, 6, 1.0, 10.0, 0.1), 1018)
    sol, rects = solve_instance(inst)
    assert sol.objective == pytest.approx(211.0, abs=1e-9)
    assert any(0 < r.height < 1 for r in rects.rects)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 5), st.integers(0, 10**6))
def test_relaxation_below_optimum(m, n, seed):
    inst = generate_random(GenParams(m, n, 1, 5, 1, 4, 0.2), seed)
    sol, rects = solve_instance(inst)
    opt, _ = brute_force_opt(inst)
    assert sol.objective <= opt * (1 + 1e-9) + 1e-9
    _check_solution(inst, sol, rects)
