"""Multiobjective optimal control problems: scalarizations, ideal points, fronts.

Controls are the only decision variables; states are eliminated by forward
substitution.  Every scalarized problem is handed to
:func:`mompc.nlp.solve_nlp` with the terminal constraint, the state box
and optional cost upper bounds as general constraints.
"""

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import DEFAULT_FEAS_TOL, BallAroundEquilibrium, as_controls, rollout, rollout_batch
from .errors import BoundSetInfeasible, PreconditionError, SolverError
from .nlp import constraint_violation, solve_nlp
from .objectives import cost_vector

DEFAULT_EPS_DOM = 1e-6


# ---------------------------------------------------------------------------
# problem and solution types


@dataclass(frozen=True, eq=False)
class MooProblem:
    """One multiobjective OCP: model, objectives, horizon, initial state, bounds.

    ``cost_upper_bounds`` maps 1-based objective numbers to upper bounds on
    ``J_i^N``.  Bounding objective 1 alone gives the step-(1) constraint of
    the J_1-bounded closed loop; bounding every objective gives the
    all-objectives variant.
    """

    model: object
    objectives: object
    horizon: int
    x0: np.ndarray
    cost_upper_bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.objectives.model is not self.model:
            raise ValueError("objectives belong to a different model")
        if int(self.horizon) < 2:
            raise ValueError("horizon must be at least 2")
        object.__setattr__(self, "horizon", int(self.horizon))
        x0 = np.asarray(self.x0, float).reshape(self.model.state_dim)
        lo, hi = self.model.state_box
        if np.any(x0 < lo - DEFAULT_FEAS_TOL) or np.any(x0 > hi + DEFAULT_FEAS_TOL):
            raise PreconditionError("initial state outside the state box")
        object.__setattr__(self, "x0", x0)
        bounds = {}
        for i, b in dict(self.cost_upper_bounds).items():
            i = int(i)
            if not 1 <= i <= self.n_objectives:
                raise ValueError(f"bound index {i} out of range 1..{self.n_objectives}")
            bounds[i] = float(b)
        object.__setattr__(self, "cost_upper_bounds", bounds)

    @property
    def n_objectives(self):
        return self.objectives.n_objectives

    @property
    def n_controls(self):
        return self.horizon * self.model.input_dim

    def with_bounds(self, bounds):
        return replace(self, cost_upper_bounds=dict(bounds))

    def with_state(self, x0):
        return replace(self, x0=np.asarray(x0, float))

    def equilibrium_controls(self):
        return np.repeat(self.model.u_eq[None, :], self.horizon, axis=0)

    def evaluate(self, U):
        """Batched costs and constraints for controls ``U`` of shape ``(B, N, m)``.

        Returns ``(J, eq, ineq)`` with ``J`` of shape ``(B, s)``; ``eq == 0`` and
        ``ineq <= 0`` describe feasibility (terminal set, state box, bounds).
        """
        model = self.model
        X = rollout_batch(model, self.x0, U)
        with np.errstate(all="ignore"):
            J = self.objectives.cost_vectors(X, U)
        J = np.where(np.isfinite(J), J, np.inf)
        B = U.shape[0]
        xN = X[:, -1]
        if isinstance(model.terminal_set, BallAroundEquilibrium):
            eq = np.zeros((B, 0))
            d = xN - model.x_eq
            ineq = [(np.sum(d * d, axis=1) - model.terminal_set.radius**2)[:, None]]
        else:
            eq = xN - model.x_eq
            ineq = []
        lo, hi = model.state_box
        inner = X[:, 1:-1]
        if inner.shape[1]:
            if np.any(np.isfinite(lo)):
                ineq.append((lo - inner)[:, :, np.isfinite(lo)].reshape(B, -1))
            if np.any(np.isfinite(hi)):
                ineq.append((inner - hi)[:, :, np.isfinite(hi)].reshape(B, -1))
        for i, b in sorted(self.cost_upper_bounds.items()):
            ineq.append((J[:, i - 1] - b)[:, None])
        ineq = np.concatenate(ineq, axis=1) if ineq else np.zeros((B, 0))
        eq = np.where(np.isfinite(eq), eq, 1e300)
        ineq = np.where(np.isfinite(ineq), ineq, 1e300)
        return J, eq, ineq

    def violation(self, u):
        """Constraint violation (infinity norm) of a single control sequence."""
        _, eq, ineq = self.evaluate(as_controls(self.model, u)[None])
        return constraint_violation(eq[0], ineq[0])


@dataclass
class EfficientSolution:
    """A control sequence with its cost vector and solver metadata."""

    controls: np.ndarray
    cost: np.ndarray
    scalarization_tag: str
    kkt_residual: float = float("nan")
    constraint_violation: float = 0.0
    status: str = "solved"
    converged: bool = True


@dataclass
class FrontApproximation:
    """Mutually nondominated solutions, ordered by the first objective."""

    points: list
    ideal_point: object = None

    @property
    def costs(self):
        if not self.points:
            return np.zeros((0, 0))
        return np.array([p.cost for p in self.points])

    def __len__(self):
        return len(self.points)


def make_solution(p, u, tag, kkt=float("nan"), status="solved", converged=True):
    """Wrap controls ``u`` as an :class:`EfficientSolution` with re-evaluated cost."""
    u = as_controls(p.model, u).copy()
    traj = rollout(p.model, p.x0, u)
    cost = cost_vector(p.objectives, traj, tol=np.inf)
    return EfficientSolution(u, cost, tag, kkt, p.violation(u), status, converged)


# ---------------------------------------------------------------------------
# scalarizations


def rounded_tuple(v, digits=6):
    return tuple(round(float(x), digits) for x in v)


@dataclass(frozen=True)
class WeightedSum:
    weights: tuple

    n_extra = 0

    def objective(self, J, t):
        return J @ np.asarray(self.weights, float)

    def constraints(self, J, t):
        return np.zeros((J.shape[0], 0))

    def tag(self):
        return f"weighted-sum{tuple(float(w) for w in self.weights)}"

    def validate(self, s):
        w = np.asarray(self.weights, float)
        if w.shape != (s,) or np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be nonnegative, not all zero, one per objective")


@dataclass(frozen=True)
class PascolettiSerafini:
    """``min t`` subject to ``J(u) <= reference + t * direction``."""

    reference: tuple
    direction: tuple

    n_extra = 1

    def objective(self, J, t):
        return t

    def constraints(self, J, t):
        a = np.asarray(self.reference, float)
        r = np.asarray(self.direction, float)
        return J - a - t[:, None] * r

    def initial_t(self, J):
        a = np.asarray(self.reference, float)
        r = np.asarray(self.direction, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(r > 0, (J - a) / r, -np.inf)
        return float(np.max(ratios)) if np.any(r > 0) else 0.0

    def tag(self):
        return f"pascoletti-serafini(a={rounded_tuple(self.reference)})"

    def validate(self, s):
        if len(self.reference) != s or len(self.direction) != s:
            raise ValueError("reference and direction need one entry per objective")
        if not np.any(np.asarray(self.direction, float) > 0):
            raise ValueError("direction needs a positive component")


@dataclass(frozen=True)
class DistanceToPoint:
    """Minimize the squared Euclidean distance of ``J(u)`` to ``point``."""

    point: tuple

    n_extra = 0

    def objective(self, J, t):
        d = J - np.asarray(self.point, float)
        return np.sum(d * d, axis=1)

    def constraints(self, J, t):
        return np.zeros((J.shape[0], 0))

    def tag(self):
        return f"distance-to-point{rounded_tuple(self.point)}"

    def validate(self, s):
        if len(self.point) != s:
            raise ValueError("point needs one entry per objective")


@dataclass(frozen=True)
class SingleObjective:
    index: int

    n_extra = 0

    def objective(self, J, t):
        return J[:, self.index - 1]

    def constraints(self, J, t):
        return np.zeros((J.shape[0], 0))

    def tag(self):
        return f"single-objective({self.index})"

    def validate(self, s):
        if not 1 <= self.index <= s:
            raise ValueError(f"objective index {self.index} out of range 1..{s}")


def scalarized_value(scalarizer, cost, t=0.0):
    return float(scalarizer.objective(np.atleast_2d(cost), np.atleast_1d(t))[0])


# ---------------------------------------------------------------------------
# solving


def _nlp_for(p, scalarizer):
    N, m = p.horizon, p.model.input_dim
    nu = N * m
    lo = np.tile(p.model.input_box[0], N)
    hi = np.tile(p.model.input_box[1], N)
    if scalarizer.n_extra:
        lo = np.append(lo, -np.inf)
        hi = np.append(hi, np.inf)

    def evaluate(Z):
        U = Z[:, :nu].reshape(-1, N, m)
        t = Z[:, nu] if scalarizer.n_extra else np.zeros(Z.shape[0])
        J, eq, ineq = p.evaluate(U)
        with np.errstate(invalid="ignore"):
            f = scalarizer.objective(J, t)
            extra = scalarizer.constraints(J, t)
        if extra.shape[1]:
            ineq = np.concatenate([ineq, np.where(np.isfinite(extra), extra, 1e300)], axis=1)
        return np.where(np.isfinite(f), f, np.inf), eq, ineq

    def initial(u):
        z = as_controls(p.model, u).reshape(-1)
        if scalarizer.n_extra:
            J, _, _ = p.evaluate(z.reshape(1, N, m))
            z = np.append(z, scalarizer.initial_t(J[0]))
        return z

    return evaluate, initial, lo, hi


def solve_scalarized(
    p,
    scalarizer,
    warm_start=None,
    *,
    n_starts=None,
    seed=0,
    feas_tol=DEFAULT_FEAS_TOL,
    eps_dom=DEFAULT_EPS_DOM,
    tol=1e-8,
    ctol=1e-9,
    max_outer=200,
):
    """Solve one scalarization of ``p`` subject to all of its constraints.

    Parameters
    ----------
    p : MooProblem
    scalarizer : WeightedSum, PascolettiSerafini, DistanceToPoint or SingleObjective
    warm_start : array_like, optional
        Control sequence used as the first start.  If it is feasible and its
        cost dominates the computed solution, it is returned instead.
    n_starts : int, optional
        Additional random starts drawn uniformly from the input box; defaults
        to 0 with a warm start and 4 without.
    seed : int
        Seed of the multistart generator.

    Raises
    ------
    BoundSetInfeasible
        No feasible point found while cost upper bounds are imposed.
    SolverError
        No feasible point found; ``err.best`` carries the best iterate.
    """
    scalarizer.validate(p.n_objectives)
    evaluate, initial, lo, hi = _nlp_for(p, scalarizer)
    N, m = p.horizon, p.model.input_dim
    starts = [as_controls(p.model, warm_start)] if warm_start is not None else [p.equilibrium_controls()]
    if n_starts is None:
        n_starts = 0 if warm_start is not None else 4
    if n_starts:
        rng = np.random.default_rng(seed)
        ulo, uhi = p.model.input_box
        starts += [rng.uniform(ulo, uhi, size=(N, m)) for _ in range(n_starts)]

    best, best_any = None, None
    for u0 in starts:
        res = solve_nlp(
            evaluate, initial(u0), lo, hi, tol=tol, ctol=ctol, max_outer=max_outer, raise_on_failure=False
        )
        if best_any is None or res.violation < best_any.violation:
            best_any = res
        if res.violation <= feas_tol and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        kind = BoundSetInfeasible if p.cost_upper_bounds else SolverError
        msg = "bound set infeasible" if p.cost_upper_bounds else "no feasible control sequence found"
        raise kind(f"{msg} (best violation {best_any.violation:.3e})", best=best_any)

    sol = make_solution(
        p, best.z[: N * m].reshape(N, m), scalarizer.tag(), best.kkt_residual, converged=best.converged
    )
    if warm_start is not None:
        ws = make_solution(p, warm_start, scalarizer.tag(), status="warm_start")
        if ws.constraint_violation <= feas_tol and dominates(ws.cost, sol.cost, eps_dom):
            return ws
    return sol


def lexicographic_cleanup(p, solution, index, *, rel_tol=1e-9, **solve_kw):
    """Improve the other objectives while keeping ``J_index`` at its attained value.

    Removes weak efficiency from extremal solutions.  Returns the original
    solution when the clean-up fails or does not help.
    """
    s = p.n_objectives
    cap = solution.cost[index - 1] + rel_tol * (1.0 + abs(solution.cost[index - 1]))
    bounds = dict(p.cost_upper_bounds)
    bounds[index] = min(bounds.get(index, np.inf), cap)
    weights = tuple(0.0 if j == index else 1.0 for j in range(1, s + 1))
    try:
        cleaned = solve_scalarized(p.with_bounds(bounds), WeightedSum(weights), solution.controls, **solve_kw)
    except SolverError:
        return solution
    others = [j for j in range(s) if j != index - 1]
    if np.sum(cleaned.cost[others]) < np.sum(solution.cost[others]) and cleaned.cost[index - 1] <= cap:
        cleaned.scalarization_tag = f"lexicographic({index})"
        return cleaned
    return solution


def extremal_solutions(p, warm_start=None, *, cleanup=True, **solve_kw):
    """Minimizers of each objective (with optional lexicographic clean-up)."""
    out = []
    for i in range(1, p.n_objectives + 1):
        sol = solve_scalarized(p, SingleObjective(i), warm_start, **solve_kw)
        if cleanup:
            sol = lexicographic_cleanup(p, sol, i, **_no_starts(solve_kw))
        out.append(sol)
    return out


def _no_starts(kw):
    kw = dict(kw)
    kw["n_starts"] = 0
    return kw


def ideal_point(p, warm_start=None, **solve_kw):
    """Componentwise minima of ``J_i^N`` over the (bound-constrained) feasible set."""
    sols = [solve_scalarized(p, SingleObjective(i), warm_start, **solve_kw) for i in range(1, p.n_objectives + 1)]
    return np.array([sol.cost[i] for i, sol in enumerate(sols)])


# ---------------------------------------------------------------------------
# dominance


def dominates(a, b, eps=DEFAULT_EPS_DOM):
    """``a`` dominates ``b``: no worse than ``b + eps`` anywhere, better than ``b - eps`` somewhere."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return bool(np.all(a <= b + eps) and np.any(a < b - eps))


def dominance_filter(points, eps=DEFAULT_EPS_DOM):
    """Indices of the nondominated points; among near-equal points the first is kept."""
    P = np.asarray(points, float)
    if P.size == 0:
        return []
    P = P.reshape(len(P), -1)
    # le[i, j]: P[j] <= P[i] + eps everywhere; lt[i, j]: P[j] < P[i] - eps somewhere
    le = np.all(P[None, :, :] <= P[:, None, :] + eps, axis=2)
    lt = np.any(P[None, :, :] < P[:, None, :] - eps, axis=2)
    dominated = np.any(le & lt, axis=1)
    same = np.all(np.abs(P[None, :, :] - P[:, None, :]) <= eps, axis=2)
    earlier_twin = np.any(np.tril(same, k=-1), axis=1)
    return [int(i) for i in np.flatnonzero(~dominated & ~earlier_twin)]


# ---------------------------------------------------------------------------
# front approximation


def _simplex_grid(s, divisions):
    """Barycentric weights with denominator ``divisions`` (excluding the vertices)."""
    out = []
    for combo in itertools.product(range(divisions + 1), repeat=s - 1):
        if sum(combo) <= divisions:
            w = np.array(list(combo) + [divisions - sum(combo)], float) / divisions
            if np.count_nonzero(w) > 1:
                out.append(w)
    return out


def approximate_front(p, budget=30, refinement=0.0, *, seed=0, n_starts=4, eps_dom=DEFAULT_EPS_DOM, **solve_kw):
    """Approximate the nondominated set of ``p`` with Pascoletti-Serafini subproblems.

    The extremal points are computed first.  Reference points then lie on the
    segment (two objectives) or simplex (more objectives) spanned by the
    extremal cost vectors; the direction is the normalized ideal-to-nadir
    diagonal.  With two objectives the largest gap between neighbouring
    attained points (in ideal/nadir-normalized units) is bisected until
    ``budget`` points exist or every gap is at most ``refinement``.
    """
    if budget < 2:
        raise ValueError("budget must be at least 2")
    try:
        ext = extremal_solutions(p, seed=seed, n_starts=n_starts, eps_dom=eps_dom, **solve_kw)
    except BoundSetInfeasible:
        return FrontApproximation([], None)
    E = np.array([sol.cost for sol in ext])
    ideal = E.min(axis=0)
    nadir = E.max(axis=0)
    span = nadir - ideal
    if np.all(span <= eps_dom):
        return FrontApproximation([ext[0]], ideal)
    span = np.where(span > eps_dom, span, max(float(np.max(span)), 1.0) * 1e-3)
    direction = span / np.linalg.norm(span)
    kw = dict(solve_kw, eps_dom=eps_dom)

    def ps(a, warm):
        try:
            return solve_scalarized(p, PascolettiSerafini(tuple(a), tuple(direction)), warm.controls, **kw)
        except SolverError:
            return None

    solutions = list(ext)
    if p.n_objectives == 2:
        nodes = [(0.0, ext[0]), (1.0, ext[1])]
        done = set()
        while len(nodes) < budget:
            gaps = [
                (np.linalg.norm((nodes[j + 1][1].cost - nodes[j][1].cost) / span), j)
                for j in range(len(nodes) - 1)
                if (nodes[j][0], nodes[j + 1][0]) not in done
            ]
            if not gaps:
                break
            gap, j = max(gaps)
            if gap <= refinement:
                break
            t_lo, t_hi = nodes[j][0], nodes[j + 1][0]
            t = 0.5 * (t_lo + t_hi)
            sol = ps(E[0] + t * (E[1] - E[0]), nodes[j][1])
            if sol is None or t_hi - t_lo < 1e-6:
                done.add((t_lo, t_hi))
                continue
            nodes.insert(j + 1, (t, sol))
            solutions.append(sol)
    else:
        divisions = 1
        while len(_simplex_grid(p.n_objectives, divisions + 1)) + p.n_objectives <= budget:
            divisions += 1
        for w in _simplex_grid(p.n_objectives, divisions):
            a = w @ E
            warm = ext[int(np.argmax(w))]
            sol = ps(a, warm)
            if sol is not None:
                solutions.append(sol)

    keep = dominance_filter([sol.cost for sol in solutions], eps_dom)
    points = sorted((solutions[i] for i in keep), key=lambda sol: tuple(sol.cost))
    return FrontApproximation(points, ideal)


# ---------------------------------------------------------------------------
# brute force oracle


def grid_sequences(p, grid_per_dim, max_sequences=10**6):
    """All control sequences whose entries lie on a uniform grid of the input box."""
    N, m = p.horizon, p.model.input_dim
    count = grid_per_dim ** (N * m)
    if count > max_sequences:
        raise ValueError(f"enumeration budget exceeded: {count} > {max_sequences} sequences")
    axes = [np.linspace(lo, hi, grid_per_dim) for lo, hi in zip(*p.model.input_box)]
    values = np.array(list(itertools.product(*axes)))  # (grid^m, m)
    idx = np.array(list(itertools.product(range(len(values)), repeat=N)))
    return values[idx]  # (count, N, m)


def grid_feasible(p, grid_per_dim, terminal_tol=DEFAULT_FEAS_TOL, max_sequences=10**6):
    """Feasible grid sequences and their costs: ``(U, J)``."""
    U = grid_sequences(p, grid_per_dim, max_sequences)
    X = rollout_batch(p.model, p.x0, U)
    J = p.objectives.cost_vectors(X, U)
    lo, hi = p.model.state_box
    inner = X[:, 1:-1]
    ok = np.all((inner >= lo - 1e-12) & (inner <= hi + 1e-12), axis=(1, 2))
    ok &= p.model.terminal_violation(X[:, -1]) <= terminal_tol
    for i, b in p.cost_upper_bounds.items():
        ok &= J[:, i - 1] <= b
    ok &= np.all(np.isfinite(J), axis=1)
    return U[ok], J[ok]


def brute_force_front(p, grid_per_dim, terminal_tol=DEFAULT_FEAS_TOL, eps_dom=DEFAULT_EPS_DOM, max_sequences=10**6):
    """Nondominated subset of all feasible grid control sequences (test oracle)."""
    U, J = grid_feasible(p, grid_per_dim, terminal_tol, max_sequences)
    keep = dominance_filter(J, eps_dom)
    points = [
        EfficientSolution(U[i].copy(), J[i].copy(), "grid", constraint_violation=p.violation(U[i]))
        for i in keep
    ]
    points.sort(key=lambda sol: tuple(sol.cost))
    ideal = J.min(axis=0) if len(J) else None
    return FrontApproximation(points, ideal)
