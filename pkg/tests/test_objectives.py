import numpy as np
import pytest

from mompc.dynamics import rollout
from mompc.errors import PreconditionError, RotatedCostsUnavailable
from mompc.objectives import (
    ObjectiveSet,
    compatibility_check,
    cost_functional,
    cost_vector,
    dissipativity_residual,
    rotated_functional,
    rotated_stage_cost,
)
from mompc.problems import ECON_X_EQ

from helpers import ball_variant


def test_equilibrium_costs_by_hand(cstr3, econ):
    # l_1 = 0, l_2 = -2 * 12 * 0.5 + 6 = -6, l_3 = 144
    np.testing.assert_allclose(cstr3.objectives.equilibrium_cost_vector, [0.0, -6.0, 144.0], atol=1e-14)
    xe = ECON_X_EQ
    expected = -np.log(5.0 * xe**0.34 - xe)
    np.testing.assert_allclose(econ.objectives.equilibrium_cost_vector, [expected, 0.0], atol=1e-14)
    assert expected == pytest.approx(-1.46728, abs=1e-5)


def test_cost_vector_at_equilibrium_is_horizon_times_stage_cost(cstr2):
    model = cstr2.model
    traj = rollout(model, model.x_eq, np.full((5, 1), 12.0))
    np.testing.assert_allclose(cost_vector(cstr2.objectives, traj), [0.0, -30.0], atol=1e-12)


def test_cost_functional_by_hand(cstr2):
    model = cstr2.model
    traj = rollout(model, [0.4, 0.2], [[12.0], [12.0]])
    x1 = model.step(np.array([0.4, 0.2]), np.array([12.0]))
    j2 = (-2 * 12 * 0.2 + 6) + (-2 * 12 * x1[1] + 6)
    assert cost_functional(cstr2.objectives, traj, 2) == pytest.approx(j2, abs=1e-13)
    # J_1 needs x(N) in the terminal set
    with pytest.raises(PreconditionError):
        cost_functional(cstr2.objectives, traj, 1)
    with pytest.raises(IndexError):
        cost_functional(cstr2.objectives, traj, 3)


def test_rotated_cost_with_zero_storage_is_shifted_cost(cstr2):
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, size=(50, 2))
    u = rng.uniform(0, 20, size=(50, 1))
    np.testing.assert_allclose(
        rotated_stage_cost(cstr2.objectives, x, u), cstr2.objectives.stage_costs[0](x, u), atol=1e-14
    )


def test_rotated_cost_telescopes_with_nonzero_storage(cstr2):
    # a quadratic storage leaves the rotated functional equal to J_1 - N l_1e + lambda(x0)
    storage = lambda x: np.sum((np.asarray(x) - 0.5) ** 2, axis=-1)
    obj = ObjectiveSet(cstr2.model, cstr2.objectives.stage_costs, storage=storage)
    u = np.array([[10.0], [13.0], [12.0]])
    traj = rollout(cstr2.model, [0.45, 0.55], u)
    j1 = float(np.sum(obj.stage_costs[0](traj.states[:-1], u)))
    assert rotated_functional(obj, traj) == pytest.approx(j1 + storage(traj.states[0]), abs=1e-13)


def test_dissipativity_certificate_on_grid(cstr2):
    ca, cb, u = np.meshgrid(np.linspace(0, 1, 21), np.linspace(0, 1, 21), np.linspace(0, 20, 41), indexing="ij")
    x = np.stack([ca, cb], axis=-1)
    res = dissipativity_residual(cstr2.objectives, x, u[..., None])
    assert res.min() >= -1e-12


def test_rotated_costs_need_storage(econ):
    with pytest.raises(RotatedCostsUnavailable):
        rotated_stage_cost(econ.objectives, econ.model.x_eq, econ.model.u_eq)


def test_objective_set_validation(cstr2):
    with pytest.raises(ValueError, match="two stage costs"):
        ObjectiveSet(cstr2.model, (cstr2.objectives.stage_costs[0],))
    with pytest.raises(ValueError, match="storage"):
        ObjectiveSet(cstr2.model, cstr2.objectives.stage_costs, storage=lambda x: np.sum(x, axis=-1))
    with pytest.raises(ValueError, match="terminal cost"):
        ObjectiveSet(cstr2.model, cstr2.objectives.stage_costs, terminal_cost=lambda x: 1.0 + 0 * x[..., 0])


@pytest.mark.parametrize("name", ["cstr2", "cstr3", "econ"])
def test_terminal_compatibility(name, request):
    bench = request.getfixturevalue(name)
    samples = bench.model.sample_terminal_set(5, np.random.default_rng(0))
    rep = compatibility_check(bench.model, bench.objectives, samples)
    assert rep.ok
    assert rep.worst_slack == pytest.approx(0.0, abs=1e-12)


def test_compatibility_detects_bad_terminal_cost(cstr2):
    # F_1 = |x - x_eq|^2 with the constant feedback does not decrease on a ball
    model, obj = ball_variant(cstr2, 0.2)
    bad = ObjectiveSet(model, obj.stage_costs, terminal_cost=lambda x: np.sum((np.asarray(x) - 0.5) ** 2, axis=-1))
    pts = np.array([[0.6, 0.5], [0.5, 0.65]])
    assert not compatibility_check(model, bad, pts).ok
