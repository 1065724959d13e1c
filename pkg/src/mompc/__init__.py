"""Multiobjective model predictive control with terminal conditions.

Modules
-------
dynamics     systems, rollout, feasibility, comparison sequences
objectives   stage costs, cost functionals, rotated costs, certificates
mo           scalarizations, ideal points, front approximation, dominance
nlp          finite-difference NLP solvers (SQP, augmented Lagrangian)
mpc          the closed loop with first/subsequent selection rules
diagnostics  performance, averaged, Lyapunov and envelope checks
problems     reactor and economic growth benchmarks
cli          experiment runner
"""

from .dynamics import BallAroundEquilibrium, EquilibriumPoint, SystemModel, Trajectory, rollout
from .mo import MooProblem, approximate_front, dominance_filter, ideal_point, solve_scalarized
from .mpc import ClosedLoopTrace, MpcConfig, run_closed_loop
from .objectives import ObjectiveSet
from .problems import get_benchmark

__all__ = [
    "BallAroundEquilibrium",
    "ClosedLoopTrace",
    "EquilibriumPoint",
    "MooProblem",
    "MpcConfig",
    "ObjectiveSet",
    "SystemModel",
    "Trajectory",
    "approximate_front",
    "dominance_filter",
    "get_benchmark",
    "ideal_point",
    "rollout",
    "run_closed_loop",
    "solve_scalarized",
]
