import numpy as np
import pytest

from mompc.errors import SolverError
from mompc.nlp import constraint_violation, kkt_estimate, minimize_auglag, minimize_sqp, solve_nlp

SOLVERS = [minimize_auglag, minimize_sqp, solve_nlp]
INF2 = (np.full(2, -np.inf), np.full(2, np.inf))


def eq_problem(Z):
    # min (z0 - 1)^2 + (z1 - 2)^2  s.t.  z0 + z1 = 1; optimum (0, 1), value 2, lambda = 2
    f = (Z[:, 0] - 1) ** 2 + (Z[:, 1] - 2) ** 2
    return f, (Z[:, 0] + Z[:, 1] - 1)[:, None], np.zeros((len(Z), 0))


def ineq_problem(Z):
    # min z0^2 + z1^2  s.t.  1 - z0 - z1 <= 0; optimum (0.5, 0.5), mu = 1
    f = np.sum(Z**2, axis=1)
    return f, np.zeros((len(Z), 0)), (1 - Z[:, 0] - Z[:, 1])[:, None]


def rosen_disk(Z):
    # Rosenbrock on the disk |z| <= 1 (known optimum near (0.7864, 0.6177))
    f = (1 - Z[:, 0]) ** 2 + 100 * (Z[:, 1] - Z[:, 0] ** 2) ** 2
    return f, np.zeros((len(Z), 0)), (np.sum(Z**2, axis=1) - 1)[:, None]


@pytest.mark.parametrize("solver", SOLVERS)
def test_equality_constrained_quadratic(solver):
    res = solver(eq_problem, [5.0, -3.0], *INF2)
    np.testing.assert_allclose(res.z, [0.0, 1.0], atol=1e-6)
    assert res.fun == pytest.approx(2.0, abs=1e-8)
    assert res.violation <= 1e-9
    assert abs(res.multipliers_eq[0]) == pytest.approx(2.0, abs=1e-4)


@pytest.mark.parametrize("solver", SOLVERS)
def test_active_inequality(solver):
    res = solver(ineq_problem, [2.0, 0.0], *INF2)
    np.testing.assert_allclose(res.z, [0.5, 0.5], atol=1e-6)
    assert res.multipliers_ineq[0] == pytest.approx(1.0, abs=1e-4)
    assert res.kkt_residual <= 1e-5


@pytest.mark.parametrize("solver", SOLVERS)
def test_active_box_bound(solver):
    def f(Z):
        return (Z[:, 0] - 3) ** 2 + Z[:, 1] ** 2, np.zeros((len(Z), 0)), np.zeros((len(Z), 0))

    res = solver(f, [0.5, 1.0], [0.0, -1.0], [2.0, 1.0])
    np.testing.assert_allclose(res.z, [2.0, 0.0], atol=1e-6)
    assert res.kkt_residual <= 1e-5


@pytest.mark.parametrize("solver", SOLVERS)
def test_nonconvex_objective_on_disk(solver):
    res = solver(rosen_disk, [0.0, 0.0], *INF2)
    np.testing.assert_allclose(res.z, [0.7864, 0.6177], atol=1e-3)
    assert res.fun == pytest.approx(0.045675, abs=1e-5)


def test_infeasible_problem_raises_with_best_iterate():
    def f(Z):
        return Z[:, 0], (Z[:, 0] ** 2 + 1)[:, None], np.zeros((len(Z), 0))

    with pytest.raises(SolverError) as err:
        solve_nlp(f, [1.0], [-5.0], [5.0], max_outer=20)
    assert err.value.best is not None
    assert err.value.best.violation >= 1.0 - 1e-9
    res = solve_nlp(f, [1.0], [-5.0], [5.0], max_outer=20, raise_on_failure=False)
    assert res.violation >= 1.0 - 1e-9


def test_start_outside_box_is_projected():
    res = minimize_auglag(ineq_problem, [50.0, 50.0], [-1.0, -1.0], [1.0, 1.0])
    np.testing.assert_allclose(res.z, [0.5, 0.5], atol=1e-6)


def test_constraint_violation_norm():
    assert constraint_violation(np.array([0.1, -0.3]), np.array([-1.0, 0.2])) == pytest.approx(0.3)
    assert constraint_violation(np.zeros(0), np.array([-1.0])) == 0.0


def test_kkt_estimate_recovers_multiplier():
    z = np.array([0.5, 0.5])
    res, lam, mu = kkt_estimate(
        z, 2 * z, np.zeros((0, 2)), np.array([[-1.0, -1.0]]), np.array([0.0]), *INF2
    )
    assert mu[0] == pytest.approx(1.0)
    assert res == pytest.approx(0.0, abs=1e-12)
    # an inactive constraint gets no multiplier and the residual shows the gradient
    res, _, mu = kkt_estimate(z, 2 * z, np.zeros((0, 2)), np.array([[-1.0, -1.0]]), np.array([-1.0]), *INF2)
    assert mu[0] == 0.0 and res == pytest.approx(1.0)
