"""Closed-loop performance and stability checks.

Every check is a pure function of a :class:`~mompc.mpc.ClosedLoopTrace`
and the objective set that produced it.  Quantities are recomputed from
the recorded states and chosen control sequences rather than read from
cached columns, so a tampered trace shows up as a failed check.
"""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import BallAroundEquilibrium, rollout
from .errors import PreconditionError, RotatedCostsUnavailable
from .mpc import AlgorithmVariant, bounds_from_comparison
from .objectives import cost_vector, rotated_functional, rotated_stage_cost

CHECK_TOL = 1e-6
AVERAGE_TOL = 0.1
MIN_AVERAGE_STEPS = 100
TAIL_FRACTION = 0.1


@dataclass
class CheckResult:
    """Outcome of one check.

    ``passed`` is ``None`` when the check is inconclusive or not available;
    ``status`` spells this out.  ``worst_slack`` is the smallest
    ``bound - value`` over the checked steps (negative means violated).
    """

    name: str
    passed: object
    worst_slack: float = float("nan")
    values: np.ndarray = field(default=None, repr=False)
    bounds: np.ndarray = field(default=None, repr=False)
    detail: str = ""
    status: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = {True: "pass", False: "fail", None: "inconclusive"}[self.passed]

    def to_dict(self):
        return {
            "name": self.name,
            "status": self.status,
            "passed": self.passed,
            "worst_slack": _finite_or_none(self.worst_slack),
            "detail": self.detail,
        }


def _finite_or_none(x):
    x = float(x)
    return x if np.isfinite(x) else None


def _not_available(name, reason):
    return CheckResult(name, None, detail=reason, status="not available")


def _slack_result(name, values, bounds, tol, detail=""):
    values = np.asarray(values, float)
    bounds = np.broadcast_to(np.asarray(bounds, float), values.shape)
    slack = bounds - values
    worst = float(np.min(slack)) if slack.size else float("inf")
    return CheckResult(name, bool(worst >= -tol), worst, values, bounds, detail)


@dataclass
class PerformanceReport:
    """Cumulative ``J_i^k`` and averaged ``J_i^k / k`` for ``k = 1..K``.

    ``rotated_partial_sums`` holds the partial sums of the rotated stage
    cost of objective 1, or ``None`` without a storage function.
    """

    cumulative: np.ndarray
    averaged: np.ndarray
    rotated_partial_sums: object
    equilibrium_costs: np.ndarray


def performance_report(trace, objectives):
    cumulative = np.cumsum(trace.stage_costs, axis=0)
    k = np.arange(1, trace.n_steps + 1)[:, None]
    rotated = None
    if objectives.has_storage:
        rotated = np.cumsum(_rotated_stages(trace, objectives))
    return PerformanceReport(cumulative, cumulative / k, rotated, objectives.equilibrium_cost_vector)


def _rotated_stages(trace, objectives):
    return rotated_stage_cost(objectives, trace.states[:-1], trace.inputs, trace.states[1:])


def _first_trajectory(trace, objectives, first_solution):
    sol = first_solution if first_solution is not None else trace.first_solution
    if sol is None:
        raise PreconditionError("the first efficient solution is needed")
    return rollout(objectives.model, trace.states[0], sol.controls)


def check_j1_performance(trace, objectives, first_solution=None, tol=CHECK_TOL):
    """Cumulative ``J_1`` never exceeds ``J_1^N`` of the first solution.

    With ``l_1(x_eq, u_eq) != 0`` the shifted cost ``l_1 - l_1(x_eq, u_eq)``
    is summed and compared against ``J_1^N - N l_1(x_eq, u_eq) +
    lambda_1(x(K))``, which follows from the rotated bound; this needs a
    storage function.
    """
    name = "j1_performance"
    traj = _first_trajectory(trace, objectives, first_solution)
    j1 = float(cost_vector(objectives, traj, tol=np.inf)[0])
    l1e = float(objectives.equilibrium_cost_vector[0])
    stage = trace.stage_costs[:, 0]
    if l1e == 0.0:
        return _slack_result(name, np.cumsum(stage), j1, tol, f"bound J_1^N(x0, u*) = {j1:.6g}")
    if not objectives.has_storage:
        return _not_available(name, "l_1(x_eq, u_eq) != 0 and no storage function for the shifted bound")
    N = traj.horizon
    storage = np.asarray(objectives.storage(trace.states[1:]), float)
    bound = j1 - N * l1e + storage
    return _slack_result(name, np.cumsum(stage - l1e), bound, tol, "shifted cost with storage correction")


def check_rotated_performance(trace, objectives, first_solution=None, tol=CHECK_TOL):
    """Rotated partial sums are nondecreasing and bounded by the rotated first-step cost."""
    name = "rotated_performance"
    if not objectives.has_storage:
        return _not_available(name, "no storage function")
    traj = _first_trajectory(trace, objectives, first_solution)
    bound = rotated_functional(objectives, traj)
    stages = _rotated_stages(trace, objectives)
    sums = np.cumsum(stages)
    res = _slack_result(name, sums, bound, tol, f"bound {bound:.6g}")
    worst_increment = float(np.min(stages)) if stages.size else 0.0
    if worst_increment < -tol:
        res.passed = False
        res.status = "fail"
        res.detail += f"; partial sums decrease (worst increment {worst_increment:.3e})"
    return res


def check_averaged(trace, objectives, i, tol_avg=AVERAGE_TOL, shifted=False):
    """``max`` of ``J_i^k / k`` over the last 10% of the trace against ``l_i(x_eq, u_eq)``.

    ``shifted`` subtracts ``l_i(x_eq, u_eq)`` from the stage costs, making
    the bound 0.  Traces with fewer than 100 steps are inconclusive.
    """
    name = f"averaged_j{i}"
    if not 1 <= i <= objectives.n_objectives:
        raise IndexError(f"objective index {i} out of range 1..{objectives.n_objectives}")
    K = trace.n_steps
    le = float(objectives.equilibrium_cost_vector[i - 1])
    stage = trace.stage_costs[:, i - 1] - (le if shifted else 0.0)
    bound = 0.0 if shifted else le
    averaged = np.cumsum(stage) / np.arange(1, K + 1)
    tail = averaged[K - max(1, int(np.ceil(TAIL_FRACTION * K))) :]
    limsup = float(np.max(tail))
    detail = f"limsup surrogate {limsup:.6g} (max over last 10%) vs bound {bound:.6g} + {tol_avg}"
    if K < MIN_AVERAGE_STEPS:
        return CheckResult(name, None, bound + tol_avg - limsup, averaged, bound, detail + "; trace too short")
    return CheckResult(name, bool(limsup <= bound + tol_avg), bound + tol_avg - limsup, averaged, bound, detail)


def lyapunov_values(trace, objectives):
    """``V(k)``: rotated cost of the chosen sequence at ``x(k)``, recomputed from the trace."""
    if not objectives.has_storage:
        raise RotatedCostsUnavailable("rotated costs unavailable: no storage function")
    model = objectives.model
    return np.array(
        [rotated_functional(objectives, rollout(model, x, u)) for x, u in zip(trace.states[:-1], trace.chosen_controls)]
    )


def lyapunov_descent(trace, objectives, tol=CHECK_TOL):
    """``V(k+1) <= V(k) - alpha(|x(k) - x_eq|)`` with ``alpha`` the dissipativity certificate.

    Also checks ``alpha(|x(k) - x_eq|) <= V(k)`` and ``alpha(|x(k) - x_eq|) <= V(0)``
    (boundedness of the trajectory by the initial Lyapunov value).
    """
    name = "lyapunov_descent"
    if not objectives.has_storage or objectives.dissipativity_alpha is None:
        return _not_available(name, "storage function or dissipativity certificate missing")
    V = lyapunov_values(trace, objectives)
    dist = np.linalg.norm(trace.states[: len(V)] - objectives.model.x_eq, axis=1)
    a = np.asarray(objectives.dissipativity_alpha(dist), float)
    descent = V[:-1] - a[:-1] - V[1:]
    sandwich = V - a
    bounded = V[0] - a
    slacks = np.concatenate([descent, sandwich, bounded])
    worst = float(np.min(slacks)) if slacks.size else 0.0
    detail = (
        f"worst descent slack {np.min(descent, initial=np.inf):.3e}, "
        f"worst sandwich slack {np.min(sandwich):.3e}, worst boundedness slack {np.min(bounded):.3e}"
    )
    return CheckResult(name, bool(worst >= -tol), worst, V, V - a, detail)


def endpoint_bound(trace, objectives, tol=CHECK_TOL):
    """Distance of each chosen prediction's endpoint to ``x_eq``.

    Must stay within ``tol`` (singleton terminal set) or the ball radius.
    The fraction of steps at which the distance does not grow is reported.
    """
    model = objectives.model
    ends = np.array(
        [
            np.linalg.norm(rollout(model, x, u).terminal_state - model.x_eq)
            for x, u in zip(trace.states[:-1], trace.chosen_controls)
        ]
    )
    limit = model.terminal_set.radius if isinstance(model.terminal_set, BallAroundEquilibrium) else 0.0
    res = _slack_result("endpoint_bound", ends, limit, tol)
    steps = np.diff(ends)
    frac = float(np.mean(steps <= 1e-12)) if steps.size else 1.0
    res.detail = f"max endpoint distance {np.max(ends):.3e}; nonincreasing at {frac:.1%} of steps"
    return res


def ji_performance_envelope(trace, objectives, i, delta, k_min=None, first_solution=None, tol=CHECK_TOL):
    """``J_i^K <= J_i^N(x0, u*) + (K - N) l_i(x_eq, u_eq) + K delta(N)`` for ``K >= k_min``.

    Parameters
    ----------
    delta : callable or float
        ``delta(N)``; a number is used as the value at the trace's horizon.
    k_min : int, optional
        Onset of the check; defaults to ``10 N``.

    Raises
    ------
    PreconditionError
        The trace was produced with only ``J_1`` bounded.
    """
    if AlgorithmVariant(trace.variant) is not AlgorithmVariant.BOUND_ALL:
        raise PreconditionError("envelope requires the variant bounding every objective (bound_all)")
    traj = _first_trajectory(trace, objectives, first_solution)
    N = traj.horizon
    d = float(delta(N)) if callable(delta) else float(delta)
    k_min = 10 * N if k_min is None else int(k_min)
    ji = float(cost_vector(objectives, traj, tol=np.inf)[i - 1])
    le = float(objectives.equilibrium_cost_vector[i - 1])
    K = np.arange(1, trace.n_steps + 1)
    cumulative = np.cumsum(trace.stage_costs[:, i - 1])
    envelope = ji + (K - N) * le + K * d
    sel = K >= k_min
    name = f"envelope_j{i}"
    if not np.any(sel):
        return CheckResult(name, None, detail=f"trace shorter than onset {k_min}")
    res = _slack_result(name, cumulative[sel], envelope[sel], tol, f"delta(N) = {d:.6g}, K >= {k_min}")
    return res


def bound_chain(trace, tol=CHECK_TOL):
    """Chosen costs respect the comparison-cost bounds at every step ``k >= 1``."""
    values, bounds = [], []
    for k in range(1, trace.n_steps):
        for i, b in bounds_from_comparison(trace.comparison_costs[k], trace.variant).items():
            values.append(trace.chosen_costs[k, i - 1])
            bounds.append(b)
    if not values:
        return CheckResult("bound_chain", None, detail="no step with a comparison sequence")
    res = _slack_result("bound_chain", values, bounds, tol)
    res.detail = f"{len(values)} bound inequalities"
    return res


def steps_to_neighborhood(trace, x_eq, eps):
    """First ``k`` after which ``|x(j) - x_eq| <= eps`` for all recorded ``j >= k``.

    Returns ``(k, reached)``; if the final state is outside the
    neighbourhood the count is censored at the trace length and ``reached``
    is ``False``.
    """
    dist = np.linalg.norm(trace.states - np.asarray(x_eq, float), axis=1)
    outside = np.flatnonzero(dist > eps)
    if outside.size == 0:
        return 0, True
    k = int(outside[-1]) + 1
    return k, k < len(dist)
