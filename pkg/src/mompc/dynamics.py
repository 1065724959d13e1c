"""Discrete-time systems, trajectory rollout and feasibility checks.

Step maps and feedbacks operate on numpy arrays and must broadcast over
leading axes: ``step_map(x, u)`` receives ``x`` of shape ``(..., n)`` and
``u`` of shape ``(..., m)`` and returns shape ``(..., n)``.  The solvers
rely on this to evaluate many control sequences in one call.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DynamicsBlowUpError, PreconditionError

DEFAULT_FEAS_TOL = 1e-6
EQUILIBRIUM_TOL = 1e-10


@dataclass(frozen=True)
class EquilibriumPoint:
    """Terminal set consisting of the equilibrium state only."""


@dataclass(frozen=True)
class BallAroundEquilibrium:
    """Closed Euclidean ball of the given radius around the equilibrium state."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")


def _box(box, dim, name):
    lo, hi = (np.broadcast_to(np.asarray(b, float), (dim,)).copy() for b in box)
    if np.any(lo > hi):
        raise ValueError(f"{name} is empty: lower bound exceeds upper bound")
    lo.flags.writeable = False
    hi.flags.writeable = False
    return lo, hi


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Immutable description of ``x(k+1) = f(x(k), u(k))`` with constraints.

    Parameters
    ----------
    state_dim, input_dim : int
    step_map : callable
        Broadcasting map ``(x, u) -> x_next``.
    state_box, input_box : tuple of array_like
        ``(lower, upper)`` bounds; scalars broadcast.
    x_eq, u_eq : array_like
        Equilibrium pair, ``step_map(x_eq, u_eq) == x_eq``.
    local_feedback : callable
        ``kappa(x) -> u`` keeping the terminal set invariant.
    terminal_set : EquilibriumPoint or BallAroundEquilibrium
    """

    state_dim: int
    input_dim: int
    step_map: object
    state_box: tuple
    input_box: tuple
    x_eq: np.ndarray
    u_eq: np.ndarray
    local_feedback: object
    terminal_set: object = field(default_factory=EquilibriumPoint)
    name: str = ""

    def __post_init__(self):
        if self.state_dim < 1 or self.input_dim < 1:
            raise ValueError("state_dim and input_dim must be positive")
        set_ = object.__setattr__
        set_(self, "state_box", _box(self.state_box, self.state_dim, "state box"))
        set_(self, "input_box", _box(self.input_box, self.input_dim, "input box"))
        x_eq = np.asarray(self.x_eq, float).reshape(self.state_dim)
        u_eq = np.asarray(self.u_eq, float).reshape(self.input_dim)
        x_eq.flags.writeable = False
        u_eq.flags.writeable = False
        set_(self, "x_eq", x_eq)
        set_(self, "u_eq", u_eq)
        if not isinstance(self.terminal_set, (EquilibriumPoint, BallAroundEquilibrium)):
            raise TypeError("terminal_set must be EquilibriumPoint or BallAroundEquilibrium")
        defect = self.equilibrium_defect()
        if defect > EQUILIBRIUM_TOL:
            raise ValueError(f"(x_eq, u_eq) is not an equilibrium: defect {defect:.3e}")

    def step(self, x, u):
        return np.asarray(self.step_map(np.asarray(x, float), np.asarray(u, float)), float)

    def feedback(self, x):
        return np.asarray(self.local_feedback(np.asarray(x, float)), float).reshape(self.input_dim)

    def equilibrium_defect(self):
        """``max|f(x_eq, u_eq) - x_eq|``."""
        return float(np.max(np.abs(self.step(self.x_eq, self.u_eq) - self.x_eq)))

    def terminal_violation(self, x):
        """Distance-like violation of ``x in X_0``; broadcasts over leading axes."""
        d = np.asarray(x, float) - self.x_eq
        if isinstance(self.terminal_set, EquilibriumPoint):
            return np.max(np.abs(d), axis=-1)
        return np.maximum(0.0, np.linalg.norm(d, axis=-1) - self.terminal_set.radius)

    def sample_terminal_set(self, n, rng):
        """``n`` random states of the terminal set (just ``x_eq`` for a singleton)."""
        if isinstance(self.terminal_set, EquilibriumPoint):
            return self.x_eq[None, :].copy()
        d = rng.normal(size=(n, self.state_dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.terminal_set.radius * rng.uniform(size=(n, 1)) ** (1.0 / self.state_dim)
        return self.x_eq + r * d


@dataclass(frozen=True)
class Trajectory:
    """States ``x(0..N)`` generated by ``controls`` (shape ``(N, m)``)."""

    states: np.ndarray
    controls: np.ndarray

    @property
    def horizon(self):
        return self.controls.shape[0]

    @property
    def terminal_state(self):
        return self.states[-1]


@dataclass
class FeasibilityReport:
    feasible: bool
    state_violations: dict
    input_violations: dict
    terminal_violation: float

    def __bool__(self):
        return self.feasible


def as_controls(model, u):
    """Return ``u`` as a float array of shape ``(N, m)``."""
    u = np.asarray(u, float)
    if u.ndim == 1 and model.input_dim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != model.input_dim:
        raise DimensionError(f"control sequence must have shape (N, {model.input_dim}), got {u.shape}")
    return u


def _check_state(model, x0):
    x0 = np.asarray(x0, float)
    if x0.shape != (model.state_dim,):
        raise DimensionError(f"state must have shape ({model.state_dim},), got {x0.shape}")
    return x0


def rollout_batch(model, x0, U):
    """Roll out a batch ``U`` of shape ``(B, N, m)``; returns states ``(B, N+1, n)``.

    No finiteness checks; non-finite states propagate.
    """
    B, N, _ = U.shape
    X = np.empty((B, N + 1, model.state_dim))
    X[:, 0] = x0
    with np.errstate(all="ignore"):
        for k in range(N):
            X[:, k + 1] = model.step_map(X[:, k], U[:, k])
    return X


def rollout(model, x0, u):
    """Simulate ``model`` from ``x0`` under the control sequence ``u``.

    Raises
    ------
    DimensionError
        If ``x0`` or ``u`` do not match the model dimensions.
    DynamicsBlowUpError
        If a non-finite state is produced; ``err.step`` is its index.
    """
    x0 = _check_state(model, x0)
    u = as_controls(model, u)
    states = np.empty((u.shape[0] + 1, model.state_dim))
    states[0] = x0
    with np.errstate(all="ignore"):
        for k in range(u.shape[0]):
            states[k + 1] = model.step_map(states[k], u[k])
            if not np.all(np.isfinite(states[k + 1])):
                raise DynamicsBlowUpError(k + 1)
    return Trajectory(states=states, controls=u)


def is_feasible(model, traj, tol=DEFAULT_FEAS_TOL):
    """Check ``x(1..N-1)`` in the state box, ``x(N)`` in ``X_0`` and inputs in the box.

    Infeasibility is reported, never raised.  Violation magnitudes are
    infinity-norm distances to the respective set.
    """
    lo, hi = model.state_box
    inner = traj.states[1:-1]
    sv = np.max(np.maximum(lo - inner, inner - hi), axis=-1, initial=0.0) if inner.size else np.zeros(0)
    state_violations = {k + 1: float(v) for k, v in enumerate(sv) if v > tol}
    ulo, uhi = model.input_box
    uv = np.max(np.maximum(ulo - traj.controls, traj.controls - uhi), axis=-1, initial=0.0)
    input_violations = {k: float(v) for k, v in enumerate(uv) if v > tol}
    term = float(model.terminal_violation(traj.terminal_state))
    feasible = not state_violations and not input_violations and term <= tol
    return FeasibilityReport(feasible, state_violations, input_violations, term)


def comparison_sequence(model, u_star, x_k, tol=DEFAULT_FEAS_TOL):
    """Shift ``u_star`` by one step and append ``kappa`` at its endpoint.

    Returns ``(u_star(1), ..., u_star(N-1), kappa(x_N))`` where ``x_N`` is the
    endpoint of ``u_star`` started at ``x_k``.
    """
    traj = rollout(model, x_k, u_star)
    term = float(model.terminal_violation(traj.terminal_state))
    if term > tol:
        raise PreconditionError(f"u_star does not reach the terminal set (violation {term:.3e})")
    kappa = model.feedback(traj.terminal_state)
    return np.vstack([traj.controls[1:], kappa[None, :]])
