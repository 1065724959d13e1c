import numpy as np
import pytest

from mompc.dynamics import is_feasible, rollout
from mompc.errors import BoundSetInfeasible
from mompc.mo import MooProblem
from mompc.mpc import (
    AlgorithmVariant,
    FixedCostTarget,
    Ideal,
    MinObjective,
    MpcConfig,
    StabilityBounded,
    bounds_from_comparison,
    parse_rule,
    run_closed_loop,
    select_first,
)


def test_parse_rule():
    assert parse_rule("ideal") == Ideal()
    assert parse_rule(" Min2 ") == MinObjective(2)
    with pytest.raises(ValueError):
        parse_rule("max1")


def test_config_validation():
    with pytest.raises(ValueError):
        MpcConfig(horizon=1, iterations=5)
    with pytest.raises(ValueError):
        MpcConfig(horizon=5, iterations=0)
    with pytest.raises(ValueError):
        MpcConfig(5, 5, subsequent_rule=StabilityBounded(10.0))
    with pytest.raises(ValueError):
        MpcConfig(5, 5, variant="bound_some")
    assert MpcConfig(5, 5, variant="bound_all").variant is AlgorithmVariant.BOUND_ALL


def test_bounds_from_comparison():
    assert bounds_from_comparison([1.0, 2.0], "bound_j1") == {1: 1.0}
    assert bounds_from_comparison([1.0, 2.0], AlgorithmVariant.BOUND_ALL) == {1: 1.0, 2: 2.0}


@pytest.fixture(scope="module")
def p5(cstr2):
    return MooProblem(cstr2.model, cstr2.objectives, 5, cstr2.x0)


def test_first_selection_ideal_matches_reported_point(p5):
    sol = select_first(p5, MpcConfig(5, 1))
    np.testing.assert_allclose(sol.cost, [54.034, -9.500], atol=1e-3)


def test_first_selection_min_rules(p5):
    s1 = select_first(p5, MpcConfig(5, 1, first_selection=MinObjective(1)))
    s2 = select_first(p5, MpcConfig(5, 1, first_selection=MinObjective(2)))
    np.testing.assert_allclose(s1.cost, [48.296, -6.843], atol=2e-3)
    np.testing.assert_allclose(s2.cost, [235.851, -32.046], atol=2e-3)


def test_first_selection_target(p5):
    sol = select_first(p5, MpcConfig(5, 1, first_selection=FixedCostTarget((182.852, -26.267))))
    np.testing.assert_allclose(sol.cost, [182.852, -26.267], atol=0.05)


def test_stability_bound_infeasible(p5):
    cfg = MpcConfig(5, 1, first_selection=StabilityBounded(1.0))
    with pytest.raises(BoundSetInfeasible, match="Jbound not satisfiable"):
        select_first(p5, cfg)
    sol = select_first(p5, MpcConfig(5, 1, first_selection=StabilityBounded(2000.0)))
    assert sol.cost[0] <= 2000.0 * 0.1**2 * 5 + 1e-6


@pytest.mark.parametrize("variant", ["bound_j1", "bound_all"])
def test_closed_loop_shapes_and_invariants(cstr2, variant):
    cfg = MpcConfig(5, 15, variant=variant)
    tr = run_closed_loop(cstr2.objectives, cstr2.x0, cfg)
    K = 15
    assert tr.states.shape == (K + 1, 2) and tr.inputs.shape == (K, 1)
    assert tr.chosen_controls.shape == (K, 5, 1)
    assert np.all(np.isnan(tr.comparison_costs[0])) and np.all(np.isfinite(tr.comparison_costs[1:]))
    model = cstr2.model
    for k in range(K):
        traj = rollout(model, tr.states[k], tr.chosen_controls[k])
        assert is_feasible(model, traj, tol=1e-6)
        np.testing.assert_array_equal(tr.inputs[k], tr.chosen_controls[k, 0])
        np.testing.assert_array_equal(tr.states[k + 1], model.step(tr.states[k], tr.inputs[k]))
    # the applied inputs drive the state towards the equilibrium
    assert np.linalg.norm(tr.states[-1] - model.x_eq) < np.linalg.norm(tr.states[0] - model.x_eq)
    np.testing.assert_allclose(tr.cumulative_costs[-1], tr.stage_costs.sum(axis=0))


def test_closed_loop_is_deterministic(cstr2):
    cfg = MpcConfig(5, 8, variant="bound_all", subsequent_rule=MinObjective(1))
    a = run_closed_loop(cstr2.objectives, cstr2.x0, cfg)
    b = run_closed_loop(cstr2.objectives, cstr2.x0, cfg)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.chosen_costs, b.chosen_costs)


def test_given_first_solution_is_used(cstr2, p5):
    first = select_first(p5, MpcConfig(5, 1, first_selection=MinObjective(2)))
    tr = run_closed_loop(cstr2.objectives, cstr2.x0, MpcConfig(5, 3), first_solution=first)
    assert tr.first_solution is first
    np.testing.assert_array_equal(tr.chosen_controls[0], first.controls)


def test_min1_from_equilibrium_stays_there(cstr2):
    # the ideal rule may trade J_1 for J_2 and leave the equilibrium; min1 must not
    cfg = MpcConfig(5, 5, first_selection=MinObjective(1), subsequent_rule=MinObjective(1))
    tr = run_closed_loop(cstr2.objectives, cstr2.model.x_eq, cfg)
    np.testing.assert_allclose(tr.states, 0.5, atol=1e-6)
    np.testing.assert_allclose(tr.stage_costs[:, 1], -6.0, atol=1e-4)
