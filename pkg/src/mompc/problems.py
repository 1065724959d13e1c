"""Benchmark problems: isothermal CSTR with two or three objectives, economic growth."""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import EquilibriumPoint, SystemModel
from .objectives import ObjectiveSet

# reactor data
K_R = 1.2
VOLUME = 10.0
C_AF = 1.0
C_BF = 0.0
CSTR_X_EQ = (0.5, 0.5)
CSTR_U_EQ = 12.0
CSTR_X0 = (0.4, 0.2)
# alpha_l1(r) = c r^2 certificate for the quadratic tracking cost; c = 1/4 follows
# from (a + b)^2 <= 2 (a^2 + b^2) and is re-verified on a grid in the tests
CSTR_ALPHA_COEFFICIENT = 0.25

# growth model data
ECON_A = 5.0
ECON_ALPHA = 0.34
ECON_X_EQ = (ECON_A * ECON_ALPHA) ** (1.0 / (1.0 - ECON_ALPHA))
ECON_X0 = 5.0
ECON_LOG_EPS = 1e-9


@dataclass(frozen=True)
class Reference:
    """A reference value with provenance (``"reported"``, ``"derived"`` or ``"implementer"``)."""

    value: object
    source: str
    note: str = ""


@dataclass(frozen=True, eq=False)
class BenchmarkSpec:
    name: str
    model: SystemModel
    objectives: ObjectiveSet
    x0: np.ndarray
    horizons: tuple
    references: dict = field(default_factory=dict)

    @property
    def n_objectives(self):
        return self.objectives.n_objectives


def cstr_step_map(use_physical_b_balance=False):
    """Euler-discretized reactor balances.

    The B balance uses ``+k_r c_B`` by default; ``use_physical_b_balance``
    switches the production term to ``k_r c_A``.  Both variants share the
    equilibrium ``(0.5, 0.5)`` under ``u = 12``.
    """

    def step(x, u):
        c_a, c_b = x[..., 0], x[..., 1]
        q = u[..., 0] / VOLUME
        production = K_R * (c_a if use_physical_b_balance else c_b)
        out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (2,)))
        out[..., 0] = c_a + 0.5 * (q * (C_AF - c_a) - K_R * c_a)
        out[..., 1] = c_b + 0.5 * (q * (C_BF - c_b) + production)
        return out

    return step


def cstr_tracking_cost(x, u):
    return 0.5 * (x[..., 0] - 0.5) ** 2 + 0.5 * (x[..., 1] - 0.5) ** 2 + 0.5 * (u[..., 0] - 12.0) ** 2


def cstr_yield_cost(x, u):
    return -2.0 * u[..., 0] * x[..., 1] + 0.5 * u[..., 0]


def cstr_flow_cost(x, u):
    return u[..., 0] ** 2


def _constant_feedback(u_eq):
    u_eq = np.atleast_1d(np.asarray(u_eq, float))

    def kappa(x):
        return np.broadcast_to(u_eq, np.shape(x)[:-1] + u_eq.shape).copy()

    return kappa


def _zero_storage(x):
    return np.zeros(np.shape(x)[:-1])


def _cstr_model(use_physical_b_balance):
    return SystemModel(
        state_dim=2,
        input_dim=1,
        step_map=cstr_step_map(use_physical_b_balance),
        state_box=(0.0, 20.0),
        input_box=(0.0, 20.0),
        x_eq=CSTR_X_EQ,
        u_eq=[CSTR_U_EQ],
        local_feedback=_constant_feedback(CSTR_U_EQ),
        terminal_set=EquilibriumPoint(),
        name="cstr",
    )


def _cstr_alpha(r):
    return CSTR_ALPHA_COEFFICIENT * np.asarray(r, float) ** 2


def _cstr_references():
    return {
        "equilibrium": Reference((0.5, 0.5, 12.0), "reported"),
        "first_point_N5": Reference(
            (54.034, -9.500), "reported", "reported as (54.034, 9.500); the attained front point has J_2 = -9.500"
        ),
        "first_point_N5_red": Reference((76.064, -13.435), "reported"),
        "first_point_N5_blue": Reference((182.852, -26.267), "reported"),
        "first_point_N15": Reference((408.459, -478.459), "reported"),
        "j1_plateau_red": Reference(53.0, "reported"),
        "j1_plateau_blue": Reference(86.0, "reported"),
        "envelope_delta_N5": Reference(0.2, "reported", "delta(5) = 1/5 for objective 2"),
        "alpha_coefficient": Reference(CSTR_ALPHA_COEFFICIENT, "implementer", "grid-verified"),
    }


def make_cstr2(use_physical_b_balance=False):
    """Bi-objective reactor: tracking cost and negative yield."""
    model = _cstr_model(use_physical_b_balance)
    objectives = ObjectiveSet(
        model,
        (cstr_tracking_cost, cstr_yield_cost),
        storage=_zero_storage,
        dissipativity_alpha=_cstr_alpha,
    )
    return BenchmarkSpec("cstr2", model, objectives, np.array(CSTR_X0), (5, 15), _cstr_references())


def make_cstr3(use_physical_b_balance=False):
    """Reactor with the additional flow cost ``u^2``."""
    model = _cstr_model(use_physical_b_balance)
    objectives = ObjectiveSet(
        model,
        (cstr_tracking_cost, cstr_yield_cost, cstr_flow_cost),
        storage=_zero_storage,
        dissipativity_alpha=_cstr_alpha,
    )
    refs = _cstr_references()
    refs["first_point_N15"] = Reference((317.827, -380.092, 1969.311), "reported")
    return BenchmarkSpec("cstr3", model, objectives, np.array(CSTR_X0), (15,), refs)


def econ_step(x, u):
    return np.array(u, float, copy=True)


def econ_utility_cost(x, u):
    """``-ln(A x^alpha - u)`` with a C^1 linear extension below ``ECON_LOG_EPS``."""
    arg = ECON_A * np.maximum(x[..., 0], 0.0) ** ECON_ALPHA - u[..., 0]
    safe = np.maximum(arg, ECON_LOG_EPS)
    return np.where(arg > ECON_LOG_EPS, -np.log(safe), -np.log(ECON_LOG_EPS) + (ECON_LOG_EPS - arg) / ECON_LOG_EPS)


def econ_tracking_cost(x, u):
    return (x[..., 0] - ECON_X_EQ) ** 2 + 0.1 * (u[..., 0] - ECON_X_EQ) ** 2


def make_econ():
    """Economic growth model ``x+ = u``; no storage function is shipped."""
    model = SystemModel(
        state_dim=1,
        input_dim=1,
        step_map=econ_step,
        state_box=(0.0, 10.0),
        input_box=(0.1, 5.0),
        x_eq=[ECON_X_EQ],
        u_eq=[ECON_X_EQ],
        local_feedback=_constant_feedback(ECON_X_EQ),
        terminal_set=EquilibriumPoint(),
        name="econ",
    )
    objectives = ObjectiveSet(model, (econ_utility_cost, econ_tracking_cost))
    refs = {
        "equilibrium": Reference(ECON_X_EQ, "derived", "A alpha x^(alpha-1) = 1; reported as 2.23"),
        "first_point_N10": Reference((-15.085, 7.892), "reported"),
    }
    return BenchmarkSpec("econ", model, objectives, np.array([ECON_X0]), (10,), refs)


BENCHMARKS = {"cstr2": make_cstr2, "cstr3": make_cstr3, "econ": make_econ}


def get_benchmark(name, **kwargs):
    try:
        factory = BENCHMARKS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; expected one of {sorted(BENCHMARKS)}") from None
    return factory(**kwargs)
