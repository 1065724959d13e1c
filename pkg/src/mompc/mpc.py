"""Multiobjective MPC closed loop with terminal conditions and cost bounds.

At step 0 an efficient solution is chosen by the configured first-step
rule.  From step 1 on, the shifted previous solution extended by the local
feedback (the comparison sequence) supplies upper bounds: on ``J_1`` only
(``BOUND_J1``) or on every objective (``BOUND_ALL``).  The selection rule
then picks an efficient solution of the bounded problem, and its first
input is applied.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dynamics import DEFAULT_FEAS_TOL, comparison_sequence, rollout
from .errors import BoundSetInfeasible, PreconditionError, SolverError
from .mo import (
    DEFAULT_EPS_DOM,
    DistanceToPoint,
    MooProblem,
    PascolettiSerafini,
    SingleObjective,
    approximate_front,
    ideal_point,
    lexicographic_cleanup,
    make_solution,
    rounded_tuple,
    solve_scalarized,
)
from .objectives import rotated_functional

BOUND_TOL = 1e-6


class AlgorithmVariant(str, Enum):
    """Which comparison costs become upper bounds from step 1 on."""

    BOUND_J1 = "bound_j1"
    BOUND_ALL = "bound_all"


@dataclass(frozen=True)
class Ideal:
    """Compromise programming: closest point to the (bounded) ideal point."""

    name = "ideal"


@dataclass(frozen=True)
class MinObjective:
    """Minimize objective ``index`` (1-based), then clean up the others."""

    index: int

    @property
    def name(self):
        return f"min{self.index}"


@dataclass(frozen=True)
class FixedCostTarget:
    """Front point closest to a given cost vector."""

    target: tuple

    name = "target"


@dataclass(frozen=True)
class StabilityBounded:
    """First-step rule bounding ``J_1 <= c |x0 - x_eq|^2 + N l_1(x_eq, u_eq)``.

    ``rule`` selects among the solutions satisfying that bound.
    """

    coefficient: float
    rule: object = field(default_factory=Ideal)

    name = "stability-bounded"

    def bound(self, p):
        obj = p.objectives
        r = float(np.linalg.norm(p.x0 - p.model.x_eq))
        return self.coefficient * r * r + p.horizon * float(obj.equilibrium_cost_vector[0])


def parse_rule(text):
    """``"ideal"``, ``"min<i>"`` -> selection rule."""
    text = text.strip().lower()
    if text == "ideal":
        return Ideal()
    if text.startswith("min") and text[3:].isdigit():
        return MinObjective(int(text[3:]))
    raise ValueError(f"unknown selection rule {text!r}; expected 'ideal' or 'min<i>'")


@dataclass(frozen=True)
class MpcConfig:
    """Closed-loop settings.

    Parameters
    ----------
    horizon : int
        Prediction horizon ``N >= 2``.
    iterations : int
        Closed-loop steps ``K >= 1``.
    variant : AlgorithmVariant
    first_selection : Ideal, MinObjective, FixedCostTarget or StabilityBounded
    subsequent_rule : Ideal, MinObjective or FixedCostTarget
    feas_tol, eps_dom, bound_tol : float
        Feasibility, dominance and bound-compliance tolerances.
    front_budget : int
        Number of front points computed for ``FixedCostTarget``.
    n_starts : int
        Random starts of the step-0 solves.
    seed : int
    """

    horizon: int
    iterations: int
    variant: AlgorithmVariant = AlgorithmVariant.BOUND_J1
    first_selection: object = field(default_factory=Ideal)
    subsequent_rule: object = field(default_factory=Ideal)
    feas_tol: float = DEFAULT_FEAS_TOL
    eps_dom: float = DEFAULT_EPS_DOM
    bound_tol: float = BOUND_TOL
    front_budget: int = 30
    n_starts: int = 4
    seed: int = 0

    def __post_init__(self):
        if int(self.horizon) < 2:
            raise ValueError("horizon must be at least 2")
        if int(self.iterations) < 1:
            raise ValueError("iterations must be at least 1")
        object.__setattr__(self, "variant", AlgorithmVariant(self.variant))
        if isinstance(self.subsequent_rule, StabilityBounded):
            raise ValueError("StabilityBounded is a first-step rule only")


@dataclass
class ClosedLoopTrace:
    """Record of a closed-loop run; row ``k`` refers to step ``k``.

    ``comparison_costs[0]`` is NaN (no comparison sequence at step 0) and
    ``V`` is NaN when no storage function is available.
    """

    states: np.ndarray
    inputs: np.ndarray
    chosen_costs: np.ndarray
    comparison_costs: np.ndarray
    V: np.ndarray
    stage_costs: np.ndarray
    endpoint_errors: np.ndarray
    kkt_residuals: np.ndarray
    violations: np.ndarray
    statuses: list
    chosen_controls: np.ndarray
    variant: AlgorithmVariant
    first_solution: object = None
    message: str = ""

    @property
    def n_steps(self):
        return self.inputs.shape[0]

    @property
    def cumulative_costs(self):
        """``J_i^k`` for ``k = 1..K``: prefix sums of the stage costs."""
        return np.cumsum(self.stage_costs, axis=0)


def _distance_solution(p, point, warm, cfg, n_starts):
    return solve_scalarized(
        p, DistanceToPoint(tuple(point)), warm, n_starts=n_starts, seed=cfg.seed, feas_tol=cfg.feas_tol, eps_dom=cfg.eps_dom
    )


def _apply_rule(p, rule, warm, cfg, n_starts):
    kw = dict(seed=cfg.seed, feas_tol=cfg.feas_tol, eps_dom=cfg.eps_dom)
    if isinstance(rule, Ideal):
        z = ideal_point(p, warm, n_starts=n_starts, **kw)
        sol = _distance_solution(p, z, warm, cfg, n_starts)
        sol.scalarization_tag = f"ideal{rounded_tuple(z)}"
        return sol
    if isinstance(rule, MinObjective):
        if not 1 <= rule.index <= p.n_objectives:
            raise ValueError(f"objective index {rule.index} out of range 1..{p.n_objectives}")
        sol = solve_scalarized(p, SingleObjective(rule.index), warm, n_starts=n_starts, **kw)
        return lexicographic_cleanup(p, sol, rule.index, n_starts=0, **kw)
    if isinstance(rule, FixedCostTarget):
        return _target_solution(p, rule, warm, cfg, n_starts)
    raise TypeError(f"unsupported selection rule {rule!r}")


def _target_solution(p, rule, warm, cfg, n_starts):
    target = np.asarray(rule.target, float)
    if target.shape != (p.n_objectives,):
        raise ValueError("target needs one entry per objective")
    front = approximate_front(
        p, cfg.front_budget, seed=cfg.seed, n_starts=n_starts, eps_dom=cfg.eps_dom, feas_tol=cfg.feas_tol
    )
    if not len(front):
        raise BoundSetInfeasible("bound set infeasible")
    costs = front.costs
    nearest = front.points[int(np.argmin(np.linalg.norm(costs - target, axis=1)))]
    # refine between front points: move from the target along the ideal-to-nadir diagonal
    span = costs.max(axis=0) - costs.min(axis=0)
    if np.all(span <= cfg.eps_dom):
        return nearest
    span = np.where(span > cfg.eps_dom, span, float(np.max(span)) * 1e-3)
    direction = tuple(span / np.linalg.norm(span))
    try:
        refined = solve_scalarized(
            p, PascolettiSerafini(tuple(target), direction), nearest.controls, n_starts=0, seed=cfg.seed,
            feas_tol=cfg.feas_tol, eps_dom=cfg.eps_dom,
        )
    except SolverError:
        return nearest
    if np.linalg.norm(refined.cost - target) < np.linalg.norm(nearest.cost - target):
        return refined
    return nearest


def select_first(p, cfg):
    """Choose the step-0 efficient solution according to ``cfg.first_selection``.

    Raises
    ------
    BoundSetInfeasible
        ``StabilityBounded`` whose bound excludes every feasible sequence
        (message ``"Jbound not satisfiable at this x0"``).
    SolverError
        No feasible control sequence from ``p.x0``.
    """
    rule = cfg.first_selection
    if isinstance(rule, StabilityBounded):
        bounded = p.with_bounds({**p.cost_upper_bounds, 1: rule.bound(p)})
        try:
            return _apply_rule(bounded, rule.rule, None, cfg, cfg.n_starts)
        except BoundSetInfeasible as err:
            raise BoundSetInfeasible("Jbound not satisfiable at this x0", best=err.best) from err
    return _apply_rule(p, rule, None, cfg, cfg.n_starts)


def bounds_from_comparison(comparison_cost, variant):
    """Upper bounds (1-based) imposed by a comparison cost vector."""
    if AlgorithmVariant(variant) is AlgorithmVariant.BOUND_J1:
        return {1: float(comparison_cost[0])}
    return {i + 1: float(c) for i, c in enumerate(comparison_cost)}


def satisfies_bounds(cost, bounds, tol=BOUND_TOL):
    return all(cost[i - 1] <= b + tol for i, b in bounds.items())


def select_subsequent(p_bounded, rule, comparison, cfg):
    """Choose an efficient solution of the bounded problem, warm-started at ``comparison``.

    If the solver fails, or its answer breaks a bound by more than
    ``cfg.bound_tol``, the comparison sequence itself is returned with
    status ``"fallback"``; it satisfies every bound by construction.
    """
    try:
        sol = _apply_rule(p_bounded, rule, comparison.controls, cfg, 0)
    except SolverError:
        sol = None
    if (
        sol is None
        or sol.constraint_violation > cfg.feas_tol
        or not satisfies_bounds(sol.cost, p_bounded.cost_upper_bounds, cfg.bound_tol)
    ):
        fb = make_solution(p_bounded, comparison.controls, "comparison", status="fallback")
        return fb
    return sol


def run_closed_loop(objectives, x0, cfg, first_solution=None):
    """Run ``cfg.iterations`` closed-loop steps from ``x0``.

    Parameters
    ----------
    objectives : ObjectiveSet
        Costs; ``objectives.model`` is the plant.
    x0 : array_like
    cfg : MpcConfig
    first_solution : EfficientSolution, optional
        Skip the step-0 selection and start from this solution.

    Returns
    -------
    ClosedLoopTrace
        On a solver failure at step 0 the error propagates; later failures
        fall back to the comparison sequence (see :func:`select_subsequent`).
    """
    model = objectives.model
    N, K = int(cfg.horizon), int(cfg.iterations)
    s, n, m = objectives.n_objectives, model.state_dim, model.input_dim
    p = MooProblem(model, objectives, N, x0)
    sol = first_solution if first_solution is not None else select_first(p, cfg)

    states = np.empty((K + 1, n))
    inputs = np.empty((K, m))
    chosen = np.empty((K, s))
    comp_costs = np.full((K, s), np.nan)
    V = np.full(K, np.nan)
    stage = np.empty((K, s))
    endpoint = np.empty(K)
    kkt = np.empty(K)
    viol = np.empty(K)
    controls = np.empty((K, N, m))
    statuses = []
    states[0] = p.x0
    first = sol
    x = p.x0
    message = ""
    for k in range(K):
        traj = rollout(model, x, sol.controls)
        chosen[k] = sol.cost
        controls[k] = sol.controls
        endpoint[k] = float(np.linalg.norm(traj.terminal_state - model.x_eq))
        kkt[k] = sol.kkt_residual
        viol[k] = sol.constraint_violation
        statuses.append(sol.status)
        if objectives.has_storage:
            V[k] = rotated_functional(objectives, traj)
        u = sol.controls[0]
        inputs[k] = u
        stage[k] = objectives.stage_values(x, u)
        x_next = model.step(x, u)
        states[k + 1] = x_next
        if k + 1 == K:
            break
        try:
            comp_u = comparison_sequence(model, sol.controls, x, tol=cfg.feas_tol)
        except PreconditionError as err:
            message = f"step {k + 1}: {err}"
            K = k + 1
            break
        p_next = p.with_state(x_next)
        comp = make_solution(p_next, comp_u, "comparison", status="comparison")
        comp_costs[k + 1] = comp.cost
        bounded = p_next.with_bounds(bounds_from_comparison(comp.cost, cfg.variant))
        sol = select_subsequent(bounded, cfg.subsequent_rule, comp, cfg)
        x = x_next

    return ClosedLoopTrace(
        states=states[: K + 1],
        inputs=inputs[:K],
        chosen_costs=chosen[:K],
        comparison_costs=comp_costs[:K],
        V=V[:K],
        stage_costs=stage[:K],
        endpoint_errors=endpoint[:K],
        kkt_residuals=kkt[:K],
        violations=viol[:K],
        statuses=statuses[:K],
        chosen_controls=controls[:K],
        variant=cfg.variant,
        first_solution=first,
        message=message,
    )
