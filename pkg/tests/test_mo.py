import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mompc.errors import BoundSetInfeasible
from mompc.mo import (
    DistanceToPoint,
    MooProblem,
    PascolettiSerafini,
    SingleObjective,
    WeightedSum,
    approximate_front,
    brute_force_front,
    dominance_filter,
    dominates,
    extremal_solutions,
    grid_sequences,
    ideal_point,
    solve_scalarized,
)

from helpers import ball_variant


def naive_nondominated(P, eps):
    keep = []
    for i, p in enumerate(P):
        if any(dominates(q, p, eps) for q in P):
            continue
        if any(np.all(np.abs(P[j] - p) <= eps) for j in range(i)):
            continue
        keep.append(i)
    return keep


@pytest.fixture(scope="module")
def p5(cstr2):
    return MooProblem(cstr2.model, cstr2.objectives, 5, cstr2.x0)


@pytest.fixture(scope="module")
def front5(p5):
    return approximate_front(p5, budget=30)


def test_dominance_definition():
    assert dominates([1.0, 2.0], [1.0, 3.0])
    assert not dominates([1.0, 3.0], [1.0, 3.0])
    assert not dominates([0.0, 4.0], [1.0, 3.0])
    # differences inside eps do not count
    assert not dominates([1.0, 3.0 - 1e-8], [1.0, 3.0], eps=1e-6)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 25), st.integers(2, 3)), elements=st.integers(-3, 3)))
def test_dominance_filter_matches_pairwise_oracle(P):
    # integer clouds produce many ties and duplicates
    assert dominance_filter(P, 1e-6) == naive_nondominated(P, 1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(2, 4)), elements=st.floats(-10, 10)))
def test_filtered_points_are_mutually_nondominated(P):
    keep = dominance_filter(P)
    for i in keep:
        for j in keep:
            assert not dominates(P[j], P[i])
    # every discarded point is dominated by or equal to a kept one
    for i in set(range(len(P))) - set(keep):
        assert any(dominates(P[j], P[i]) or np.all(np.abs(P[j] - P[i]) <= 1e-6) for j in keep)


def test_problem_validation(cstr2):
    with pytest.raises(ValueError):
        MooProblem(cstr2.model, cstr2.objectives, 1, cstr2.x0)
    with pytest.raises(ValueError):
        MooProblem(cstr2.model, cstr2.objectives, 5, cstr2.x0, {3: 1.0})
    with pytest.raises(ValueError):
        solve_scalarized(MooProblem(cstr2.model, cstr2.objectives, 3, cstr2.x0), WeightedSum((1.0, -1.0)))


def test_equilibrium_start_gives_horizon_times_equilibrium_cost(cstr2):
    p = MooProblem(cstr2.model, cstr2.objectives, 5, cstr2.model.x_eq)
    sol = extremal_solutions(p)[0]
    np.testing.assert_allclose(sol.cost, [0.0, -30.0], atol=1e-6)
    np.testing.assert_allclose(sol.controls, 12.0, atol=1e-3)


def test_extremal_points(p5):
    e1, e2 = extremal_solutions(p5)
    np.testing.assert_allclose(e1.cost, [48.296, -6.843], atol=2e-3)
    np.testing.assert_allclose(e2.cost, [235.851, -32.046], atol=2e-3)
    np.testing.assert_allclose(ideal_point(p5), [e1.cost[0], e2.cost[1]], atol=1e-5)
    for sol in (e1, e2):
        assert sol.constraint_violation <= 1e-6


def test_front_covers_reported_first_points(front5):
    C = front5.costs
    assert len(front5) >= 20
    assert C[0, 0] < 54.0 and C[-1, 0] > 182.9
    # sorted by J_1, so J_2 must decrease
    assert np.all(np.diff(C[:, 0]) > 0) and np.all(np.diff(C[:, 1]) < 0)
    assert dominance_filter(C) == list(range(len(C)))


def test_bounded_problem_attains_reported_point(p5):
    sol = solve_scalarized(p5.with_bounds({1: 76.064}), SingleObjective(2))
    np.testing.assert_allclose(sol.cost, [76.064, -13.435], atol=1e-3)


def test_scalarizations_land_on_front(p5, front5):
    C = front5.costs
    ideal = front5.ideal_point
    for scal in (WeightedSum((1.0, 2.0)), DistanceToPoint(tuple(ideal)), PascolettiSerafini((100.0, -30.0), (1.0, 1.0))):
        sol = solve_scalarized(p5, scal)
        assert sol.constraint_violation <= 1e-6
        assert not any(dominates(c, sol.cost, 1e-4) for c in C), scal.tag()


def test_infeasible_bounds_raise(p5):
    with pytest.raises(BoundSetInfeasible):
        solve_scalarized(p5.with_bounds({1: 10.0, 2: -30.0}), SingleObjective(1), n_starts=1)


def test_warm_start_that_dominates_is_kept(p5, front5):
    best = front5.points[3]
    sol = solve_scalarized(p5.with_bounds({1: best.cost[0] + 1.0}), WeightedSum((0.0, 1.0)), best.controls)
    assert sol.cost[1] <= best.cost[1] + 1e-6


def test_three_objective_front(cstr3):
    p = MooProblem(cstr3.model, cstr3.objectives, 5, cstr3.x0)
    front = approximate_front(p, budget=12)
    assert len(front) >= 5
    assert dominance_filter(front.costs, 1e-6) == list(range(len(front)))


def test_econ_front_is_bounded(econ):
    p = MooProblem(econ.model, econ.objectives, 10, econ.x0)
    front = approximate_front(p, budget=10)
    C = front.costs
    assert np.all(np.isfinite(C))
    assert len(front) >= 3
    assert np.ptp(C, axis=0).max() < 100.0


def test_grid_enumeration_budget(p5):
    with pytest.raises(ValueError, match="budget"):
        grid_sequences(p5, 21)


def test_solver_front_not_dominated_by_grid(cstr2):
    model, obj = ball_variant(cstr2, 0.3)
    p = MooProblem(model, obj, 2, [0.4, 0.2])
    grid = brute_force_front(p, 21, terminal_tol=0.0)
    assert len(grid) == 36
    front = approximate_front(p, budget=15)
    for sol in front.points:
        assert not any(dominates(g, sol.cost, 1e-4) for g in grid.costs)
