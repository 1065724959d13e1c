"""Solvers for small, smooth NLPs with box bounds.

The problem handled is::

    min  f(z)   s.t.  h(z) = 0,  g(z) <= 0,  lower <= z <= upper

:func:`minimize_auglag` moves the equality and inequality constraints into
a Powell-Hestenes-Rockafellar augmented Lagrangian and solves the remaining
box-constrained subproblems with projected limited-memory BFGS
(``scipy.optimize`` L-BFGS-B).  :func:`minimize_sqp` runs ``scipy``'s SLSQP
on the same derivatives; :func:`solve_nlp` tries SQP first and falls back
to the augmented Lagrangian.  All derivatives are central finite
differences, computed from a single batched call of the user function.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear, minimize

from .errors import SolverError


@dataclass
class NLPResult:
    """Outcome of one NLP solve."""

    z: np.ndarray
    fun: float
    eq: np.ndarray
    ineq: np.ndarray
    violation: float
    kkt_residual: float
    converged: bool
    n_outer: int
    n_evals: int
    multipliers_eq: np.ndarray = field(repr=False)
    multipliers_ineq: np.ndarray = field(repr=False)


def constraint_violation(eq, ineq):
    """Infinity norm of the violation of ``eq == 0`` and ``ineq <= 0``."""
    v = 0.0
    if eq.size:
        v = max(v, float(np.max(np.abs(eq))))
    if ineq.size:
        v = max(v, float(np.max(ineq)))
    return max(v, 0.0)


def fd_steps(z, rel_step=1e-6):
    return rel_step * (1.0 + np.abs(z))


def _stencil(z, steps):
    d = z.size
    Z = np.repeat(z[None, :], 2 * d + 1, axis=0)
    idx = np.arange(d)
    Z[1 + idx, idx] += steps
    Z[1 + d + idx, idx] -= steps
    return Z


def _central(values, steps):
    """Central differences from stencil values; ``values`` has shape (2d+1, ...)."""
    d = steps.size
    plus, minus = values[1 : d + 1], values[d + 1 :]
    steps = steps.reshape((d,) + (1,) * (values.ndim - 1))
    return (plus - minus) / (2.0 * steps)


class _Counter:
    def __init__(self, evaluate):
        self.evaluate = evaluate
        self.n = 0

    def __call__(self, Z):
        self.n += Z.shape[0]
        f, h, g = self.evaluate(Z)
        return np.asarray(f, float), np.asarray(h, float), np.asarray(g, float)


def _auglag_values(f, h, g, lam, mu, rho):
    val = f.copy()
    if h.shape[1]:
        val += h @ lam + 0.5 * rho * np.sum(h * h, axis=1)
    if g.shape[1]:
        shifted = np.maximum(0.0, mu + rho * g)
        val += (np.sum(shifted * shifted, axis=1) - np.sum(mu * mu)) / (2.0 * rho)
    return val


def kkt_residual(z, grad_f, jac_h, jac_g, g, lam, mu, lower, upper):
    """Projected-gradient stationarity plus complementarity, infinity norm."""
    grad = grad_f.copy()
    if lam.size:
        grad += jac_h.T @ lam
    if mu.size:
        grad += jac_g.T @ mu
    projected = np.clip(z - grad, lower, upper) - z
    res = float(np.max(np.abs(projected))) if z.size else 0.0
    if mu.size:
        res = max(res, float(np.max(np.abs(mu * g))))
    return res


def minimize_auglag(
    evaluate,
    z0,
    lower,
    upper,
    *,
    tol=1e-8,
    ctol=1e-9,
    max_outer=200,
    max_inner=300,
    rho0=10.0,
    rho_max=1e8,
    rel_step=1e-6,
    raise_on_failure=True,
):
    """Minimize with an augmented Lagrangian and projected quasi-Newton steps.

    Parameters
    ----------
    evaluate : callable
        ``evaluate(Z) -> (f, h, g)`` for a batch ``Z`` of shape ``(B, d)``;
        returns arrays of shapes ``(B,)``, ``(B, n_eq)`` and ``(B, n_ineq)``.
        Non-finite objective values are treated as ``+inf``.
    z0 : array_like
        Starting point; it is projected onto the box first.
    lower, upper : array_like
        Box bounds (``-inf``/``inf`` allowed).
    tol : float
        Stationarity tolerance, scaled by ``max(1, |f|)``.
    ctol : float
        Constraint violation tolerance (absolute).
    max_outer : int
        Maximum number of multiplier updates.
    raise_on_failure : bool
        Raise :class:`SolverError` (carrying the best iterate) if the final
        iterate violates the constraints by more than ``ctol``.

    Returns
    -------
    NLPResult
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    z = np.clip(np.asarray(z0, float).copy(), lower, upper)
    ev = _Counter(evaluate)
    f0, h0, g0 = ev(z[None, :])
    n_eq, n_in = h0.shape[1], g0.shape[1]
    lam = np.zeros(n_eq)
    mu = np.zeros(n_in)
    rho = rho0
    bounds = list(zip(np.where(np.isfinite(lower), lower, None), np.where(np.isfinite(upper), upper, None)))

    def fun_and_grad(x):
        # differentiate f, h, g separately and assemble the Lagrangian gradient by
        # the chain rule; differencing the penalty itself is inaccurate for large rho
        steps = fd_steps(x, rel_step)
        f, h, g = ev(_stencil(x, steps))
        if not np.isfinite(f[0]) or not (np.all(np.isfinite(h[0])) and np.all(np.isfinite(g[0]))):
            return 1e300, np.zeros_like(x)
        val = float(_auglag_values(f[:1], h[:1], g[:1], lam, mu, rho)[0])
        grad = _central(f, steps)
        if n_eq:
            grad = grad + _central(h, steps) @ (lam + rho * h[0])
        if n_in:
            grad = grad + _central(g, steps) @ np.maximum(0.0, mu + rho * g[0])
        if not np.all(np.isfinite(grad)):
            grad = np.nan_to_num(grad, nan=0.0, posinf=1e300, neginf=-1e300)
        return val, grad

    def snapshot(x):
        steps = fd_steps(x, rel_step)
        f, h, g = ev(_stencil(x, steps))
        return f, h, g, steps

    best = None
    prev_violation = np.inf
    converged = False
    n_outer = 0
    kkt = np.inf
    f_prev = np.inf
    for n_outer in range(1, max_outer + 1):
        z_prev = z
        res = minimize(
            fun_and_grad,
            z,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_inner, "ftol": 1e-15, "gtol": 1e-12, "maxcor": 20, "maxls": 60},
        )
        z = np.clip(res.x, lower, upper)
        f, h, g, steps = snapshot(z)
        fz, hz, gz = float(f[0]), h[0], g[0]
        violation = constraint_violation(hz, gz)
        if not np.isfinite(fz):
            violation = np.inf

        # a failed first line search leaves z unchanged; updating the multipliers
        # from such a point only drives them away
        progressed = res.nit > 0 or np.any(z != z_prev)
        if progressed:
            if n_eq:
                lam = lam + rho * hz
            if n_in:
                mu = np.maximum(0.0, mu + rho * gz)

        grad_f = _central(f, steps)
        jac_h = _central(h, steps).T if n_eq else np.zeros((0, z.size))
        jac_g = _central(g, steps).T if n_in else np.zeros((0, z.size))
        # jac_* above are (n_con, d) after the transpose of (d, n_con)
        kkt = kkt_residual(z, grad_f, jac_h, jac_g, gz, lam, mu, lower, upper)

        candidate = (violation, fz, z, hz, gz, kkt)
        if best is None or _better(candidate, best, ctol):
            best = candidate

        scale = max(1.0, abs(fz)) if np.isfinite(fz) else 1.0
        # outer iterations that no longer move z or f count as stationary
        stalled = np.max(np.abs(z - z_prev)) <= 1e-12 * (1.0 + np.max(np.abs(z))) or (
            np.max(np.abs(z - z_prev)) <= 1e-7 * (1.0 + np.max(np.abs(z))) and abs(fz - f_prev) <= 1e-11 * scale
        )
        f_prev = fz
        if violation <= ctol and (kkt <= tol * scale or (stalled and n_outer > 1)):
            converged = True
            break
        if not progressed:
            break
        if violation > 0.25 * prev_violation or violation > ctol and n_outer == 1:
            rho = min(rho * 10.0, rho_max)
        elif stalled and violation > ctol and rho >= rho_max:
            break
        prev_violation = violation

    violation, fz, zb, hz, gz, kkt_b = best
    result = NLPResult(
        z=zb,
        fun=fz,
        eq=hz,
        ineq=gz,
        violation=violation,
        kkt_residual=kkt_b,
        converged=converged and zb is z,
        n_outer=n_outer,
        n_evals=ev.n,
        multipliers_eq=lam,
        multipliers_ineq=mu,
    )
    if raise_on_failure and violation > ctol:
        raise SolverError(
            f"augmented Lagrangian did not reach feasibility after {n_outer} outer iterations "
            f"(violation {violation:.3e}, KKT residual {kkt_b:.3e})",
            best=result,
        )
    return result


def _better(a, b, ctol):
    """Prefer feasible iterates, then lower objective; else lower violation."""
    a_feas, b_feas = a[0] <= ctol, b[0] <= ctol
    if a_feas != b_feas:
        return a_feas
    if a_feas:
        return a[1] <= b[1]
    return a[0] < b[0]


def kkt_estimate(z, grad_f, jac_h, jac_g, g, lower, upper, active_tol=1e-7):
    """Least-squares multipliers and the resulting KKT residual.

    Multipliers of inequalities with ``g >= -active_tol`` are fitted with
    ``mu >= 0``; the others are zero.  Returns ``(residual, lam, mu)`` with
    the residual measured as in :func:`kkt_residual`.
    """
    active = g >= -active_tol
    A = np.vstack([jac_h, jac_g[active]]).T  # (d, n_eq + n_active)
    n_eq = jac_h.shape[0]
    lam = np.zeros(n_eq)
    mu = np.zeros(jac_g.shape[0])
    # variables sitting on a bound do not need a vanishing gradient component
    free = (z > lower + 1e-12) & (z < upper - 1e-12)
    if A.shape[1] and np.any(free):
        lo = np.r_[np.full(n_eq, -np.inf), np.zeros(A.shape[1] - n_eq)]
        sol = lsq_linear(A[free], -grad_f[free], bounds=(lo, np.full(A.shape[1], np.inf)))
        lam = sol.x[:n_eq]
        mu[active] = sol.x[n_eq:]
    return kkt_residual(z, grad_f, jac_h, jac_g, g, lam, mu, lower, upper), lam, mu


def minimize_sqp(evaluate, z0, lower, upper, *, ctol=1e-9, max_iter=200, rel_step=1e-6):
    """SLSQP on finite-difference derivatives; never raises.

    Returns an :class:`NLPResult` whose multipliers are least-squares
    estimates; ``converged`` means SLSQP reported success.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    z0 = np.clip(np.asarray(z0, float).copy(), lower, upper)
    ev = _Counter(evaluate)
    cache = {}

    def data(x):
        key = x.tobytes()
        if key not in cache:
            steps = fd_steps(x, rel_step)
            f, h, g = ev(_stencil(x, steps))
            cache.clear()
            cache[key] = (f, h, g, steps)
        return cache[key]

    f0, h0, g0, _ = data(z0)
    constraints = []
    if h0.shape[1]:
        constraints.append(
            {"type": "eq", "fun": lambda x: data(x)[1][0], "jac": lambda x: _central(data(x)[1], data(x)[3]).T}
        )
    if g0.shape[1]:
        constraints.append(
            {"type": "ineq", "fun": lambda x: -data(x)[2][0], "jac": lambda x: -_central(data(x)[2], data(x)[3]).T}
        )
    bounds = list(zip(np.where(np.isfinite(lower), lower, None), np.where(np.isfinite(upper), upper, None)))
    with np.errstate(all="ignore"), warnings.catch_warnings():
        # SLSQP warns when it clips a trial point to the bounds; that is harmless here
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(
            lambda x: float(data(x)[0][0]) if np.isfinite(data(x)[0][0]) else 1e300,
            z0,
            jac=lambda x: np.nan_to_num(_central(data(x)[0], data(x)[3])),
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"maxiter": max_iter, "ftol": 1e-14},
        )
    z = np.clip(res.x, lower, upper)
    if not np.all(np.isfinite(z)):
        z = z0
    f, h, g, steps = data(z)
    fz, hz, gz = float(f[0]), h[0], g[0]
    violation = constraint_violation(hz, gz) if np.isfinite(fz) else np.inf
    jac_h = _central(h, steps).T if hz.size else np.zeros((0, z.size))
    jac_g = _central(g, steps).T if gz.size else np.zeros((0, z.size))
    kkt, lam, mu = kkt_estimate(z, _central(f, steps), jac_h, jac_g, gz, lower, upper)
    return NLPResult(
        z=z,
        fun=fz,
        eq=hz,
        ineq=gz,
        violation=violation,
        kkt_residual=kkt,
        converged=bool(res.success) and violation <= ctol,
        n_outer=int(res.nit),
        n_evals=ev.n,
        multipliers_eq=lam,
        multipliers_ineq=mu,
    )


def solve_nlp(evaluate, z0, lower, upper, *, tol=1e-8, ctol=1e-9, max_outer=200, raise_on_failure=True):
    """SQP first; the augmented Lagrangian takes over when SQP fails.

    SQP counts as failed when its iterate violates the constraints by more
    than ``ctol`` or its KKT residual exceeds ``sqrt(tol) * max(1, |f|)``.
    The augmented Lagrangian then restarts from the better of ``z0`` and
    the SQP iterate, and the better of both results is returned.
    """
    sqp = minimize_sqp(evaluate, z0, lower, upper, ctol=ctol, max_iter=max_outer)
    if sqp.violation <= ctol and sqp.kkt_residual <= np.sqrt(tol) * max(1.0, abs(sqp.fun)):
        return sqp
    start = sqp.z if sqp.violation <= ctol else z0
    al = minimize_auglag(
        evaluate, start, lower, upper, tol=tol, ctol=ctol, max_outer=max_outer, raise_on_failure=False
    )
    al.n_evals += sqp.n_evals
    best = sqp if _better((sqp.violation, sqp.fun), (al.violation, al.fun), ctol) else al
    if raise_on_failure and best.violation > ctol:
        raise SolverError(
            f"no feasible point found (violation {best.violation:.3e}, KKT residual {best.kkt_residual:.3e})",
            best=best,
        )
    return best
