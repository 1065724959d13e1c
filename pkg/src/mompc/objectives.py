"""Stage costs, cost functionals, rotated costs and dissipativity checks.

Objective numbers are 1-based throughout the public API: objective 1 is
the strictly dissipative one carrying the terminal cost ``F_1``.
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import DEFAULT_FEAS_TOL
from .errors import PreconditionError, RotatedCostsUnavailable


@dataclass(frozen=True, eq=False)
class ObjectiveSet:
    """Stage costs ``l_1..l_s`` of a model plus the certificates for ``l_1``.

    Parameters
    ----------
    model : SystemModel
    stage_costs : sequence of callable
        Broadcasting stage costs ``l_i(x, u)``; at least two.
    terminal_cost : callable, optional
        ``F_1(x) >= 0`` on the terminal set.  ``None`` means ``F_1 = 0``.
    storage : callable, optional
        Storage function ``lambda_1`` with ``lambda_1(x_eq) = 0``.
    dissipativity_alpha : callable, optional
        Comparison function ``alpha_l1`` bounding the rotated stage cost from
        below, see :func:`dissipativity_residual`.
    """

    model: object
    stage_costs: tuple
    terminal_cost: object = None
    storage: object = None
    dissipativity_alpha: object = None

    def __post_init__(self):
        object.__setattr__(self, "stage_costs", tuple(self.stage_costs))
        if len(self.stage_costs) < 2:
            raise ValueError("at least two stage costs are required")
        xe = self.model.x_eq
        if self.storage is not None and abs(float(self.storage(xe))) > 1e-12:
            raise ValueError("storage function must vanish at the equilibrium")
        if abs(float(self.F1(xe))) > 1e-12:
            raise ValueError("terminal cost must vanish at the equilibrium")

    @property
    def n_objectives(self):
        return len(self.stage_costs)

    @property
    def has_storage(self):
        return self.storage is not None

    @property
    def equilibrium_cost_vector(self):
        xe, ue = self.model.x_eq, self.model.u_eq
        return np.array([float(l(xe, ue)) for l in self.stage_costs])

    def F1(self, x):
        x = np.asarray(x, float)
        if self.terminal_cost is None:
            return np.zeros(x.shape[:-1])
        return np.asarray(self.terminal_cost(x), float)

    def stage_values(self, x, u):
        """All stage costs at ``(x, u)``; shape ``x.shape[:-1] + (s,)``."""
        return np.stack([np.asarray(l(x, u), float) for l in self.stage_costs], axis=-1)

    def cost_vectors(self, X, U):
        """Batched cost vectors for states ``(B, N+1, n)`` and inputs ``(B, N, m)``."""
        J = self.stage_values(X[:, :-1], U).sum(axis=1)
        J[:, 0] += self.F1(X[:, -1])
        return J


def _check_index(obj, i):
    if not 1 <= i <= obj.n_objectives:
        raise IndexError(f"objective index {i} out of range 1..{obj.n_objectives}")


def cost_functional(obj, traj, i, tol=DEFAULT_FEAS_TOL):
    """``J_i^N``: sum of ``l_i`` along ``traj``, plus ``F_1(x(N))`` when ``i == 1``."""
    _check_index(obj, i)
    x, u = traj.states, traj.controls
    value = float(np.sum(obj.stage_costs[i - 1](x[:-1], u)))
    if i == 1:
        if obj.model.terminal_violation(x[-1]) > tol:
            raise PreconditionError("J_1 needs the terminal state inside the terminal set")
        value += float(obj.F1(x[-1]))
    return value


def cost_vector(obj, traj, tol=DEFAULT_FEAS_TOL):
    """``(J_1^N, ..., J_s^N)`` along ``traj``."""
    return np.array([cost_functional(obj, traj, i, tol) for i in range(1, obj.n_objectives + 1)])


def _require_storage(obj):
    if obj.storage is None:
        raise RotatedCostsUnavailable("rotated costs unavailable: no storage function")


def rotated_stage_cost(obj, x, u, x_next=None):
    """``l_1(x,u) - l_1(x_eq,u_eq) + lambda_1(x) - lambda_1(x_next)``.

    ``x_next`` defaults to ``f(x, u)``.
    """
    _require_storage(obj)
    model = obj.model
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    if x_next is None:
        x_next = model.step(x, u)
    l1 = obj.stage_costs[0]
    return np.asarray(
        l1(x, u) - l1(model.x_eq, model.u_eq) + obj.storage(x) - obj.storage(np.asarray(x_next, float)),
        float,
    )


def rotated_terminal_cost(obj, x):
    _require_storage(obj)
    return obj.F1(x) + np.asarray(obj.storage(np.asarray(x, float)), float)


def rotated_functional(obj, traj):
    """Rotated cost functional: sum of rotated stage costs plus ``F_1 + lambda_1`` at ``x(N)``."""
    x, u = traj.states, traj.controls
    stage = rotated_stage_cost(obj, x[:-1], u, x[1:])
    return float(np.sum(stage) + rotated_terminal_cost(obj, x[-1]))


def dissipativity_residual(obj, x, u, x_next=None):
    """Rotated stage cost minus ``alpha(|x - x_eq| + |u - u_eq|)``.

    Nonnegative wherever the dissipation inequality holds with the attached
    certificate.  Broadcasts over leading axes.
    """
    _require_storage(obj)
    if obj.dissipativity_alpha is None:
        raise RotatedCostsUnavailable("no dissipativity comparison function attached")
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    r = np.linalg.norm(x - obj.model.x_eq, axis=-1) + np.linalg.norm(u - obj.model.u_eq, axis=-1)
    return rotated_stage_cost(obj, x, u, x_next) - obj.dissipativity_alpha(r)


@dataclass
class CompatibilityReport:
    """Slacks of the terminal cost compatibility at sampled terminal states.

    ``slacks[j] = F_1(x_j) + l_1(x_eq,u_eq) - F_1(f(x_j,k(x_j))) - l_1(x_j,k(x_j))``;
    ``rotated_slacks`` is the same for the rotated costs (``None`` without a
    storage function).  Negative slack beyond ``tol`` is a failure.
    """

    ok: bool
    worst_slack: float
    slacks: np.ndarray
    rotated_slacks: object
    invariance_violations: np.ndarray


def compatibility_check(model, obj, samples, tol=1e-9):
    """Check terminal-set invariance and cost compatibility under the local feedback."""
    samples = np.atleast_2d(np.asarray(samples, float))
    l1 = obj.stage_costs[0]
    l1e = float(l1(model.x_eq, model.u_eq))
    slacks, rotated, invariance = [], [], []
    for x in samples:
        u = model.feedback(x)
        xn = model.step(x, u)
        slacks.append(float(obj.F1(x) + l1e - obj.F1(xn) - l1(x, u)))
        invariance.append(float(model.terminal_violation(xn)))
        if obj.has_storage:
            rotated.append(
                float(rotated_terminal_cost(obj, x) - rotated_terminal_cost(obj, xn) - rotated_stage_cost(obj, x, u, xn))
            )
    slacks = np.array(slacks)
    invariance = np.array(invariance)
    rotated = np.array(rotated) if obj.has_storage else None
    worst = float(np.min(slacks))
    if rotated is not None:
        worst = min(worst, float(np.min(rotated)))
    ok = worst >= -tol and bool(np.all(invariance <= tol))
    return CompatibilityReport(ok, worst, slacks, rotated, invariance)
