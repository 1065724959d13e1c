"""Command line experiment runner.

Usage::

    python3 -m mompc run config.json [--out DIR] [--seed S]
    python3 -m mompc front config.json --at-iteration J [--out DIR] [--seed S]
    python3 -m mompc compare config.json --rules ideal,min1,min2 [--out DIR] [--seed S]

The log level is read from ``MOMPC_LOG_LEVEL`` (default ``WARNING``).
Exit codes: 0 all checks pass, 2 a check failed, 3 solver failure,
4 configuration error.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .errors import ConfigError, SolverError
from .mo import MooProblem, approximate_front
from .mpc import (
    FixedCostTarget,
    MpcConfig,
    StabilityBounded,
    bounds_from_comparison,
    parse_rule,
    run_closed_loop,
    select_first,
)
from .problems import BENCHMARKS, get_benchmark

log = logging.getLogger("mompc")

REPORT_SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_SOLVER_FAILURE, EXIT_CONFIG_ERROR = 0, 2, 3, 4
FIGURES = ("trajectory", "costs", "averaged", "lyapunov", "front")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see :func:`config_from_dict` for the JSON keys."""

    benchmark: str
    horizon: int
    iterations: int
    algorithm: str = "bound_j1"
    first_selection: object = "ideal"
    rule: str = "ideal"
    x0: tuple = None
    seed: int = 0
    n_starts: int = 4
    feas_tol: float = 1e-6
    eps_dom: float = 1e-6
    front_budget: int = 30
    front_iterations: tuple = ()
    figures: tuple = ("trajectory", "costs", "averaged")
    delta: dict = field(default_factory=dict)
    envelope_onset: int = None
    tol_avg: float = dg.AVERAGE_TOL
    neighborhood_eps: float = 1e-2
    out: str = "out"

    def mpc_config(self):
        return MpcConfig(
            horizon=self.horizon,
            iterations=self.iterations,
            variant=self.algorithm,
            first_selection=_first_rule(self.first_selection),
            subsequent_rule=parse_rule(self.rule),
            feas_tol=self.feas_tol,
            eps_dom=self.eps_dom,
            front_budget=self.front_budget,
            n_starts=self.n_starts,
            seed=self.seed,
        )


# JSON key -> (attribute, accepted types)
_KEYS = {
    "benchmark": ("benchmark", (str,)),
    "N": ("horizon", (int,)),
    "K": ("iterations", (int,)),
    "algorithm": ("algorithm", (str,)),
    "first_selection": ("first_selection", (str, dict)),
    "rule": ("rule", (str,)),
    "x0": ("x0", (list,)),
    "seed": ("seed", (int,)),
    "n_starts": ("n_starts", (int,)),
    "feas_tol": ("feas_tol", (int, float)),
    "eps_dom": ("eps_dom", (int, float)),
    "front_budget": ("front_budget", (int,)),
    "front_iterations": ("front_iterations", (list,)),
    "figures": ("figures", (list,)),
    "delta": ("delta", (dict,)),
    "envelope_onset": ("envelope_onset", (int,)),
    "tol_avg": ("tol_avg", (int, float)),
    "neighborhood_eps": ("neighborhood_eps", (int, float)),
    "out": ("out", (str,)),
}
_REQUIRED = ("benchmark", "N", "K")


def _first_rule(value):
    """``"ideal"``, ``"min<i>"``, ``{"target": [...]}`` or ``{"stability_coefficient": c, "rule": ...}``."""
    if isinstance(value, str):
        return parse_rule(value)
    if set(value) == {"target"}:
        return FixedCostTarget(tuple(float(v) for v in value["target"]))
    if "stability_coefficient" in value and set(value) <= {"stability_coefficient", "rule"}:
        return StabilityBounded(float(value["stability_coefficient"]), parse_rule(value.get("rule", "ideal")))
    raise ValueError(f"unrecognized first_selection {value!r}")


def config_from_dict(data):
    """Validate a decoded JSON object and fill in defaults.

    Raises
    ------
    ConfigError
        Naming the offending key.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError(f"missing required config key: {key}")
    kwargs = {}
    for key, value in data.items():
        attr, types = _KEYS[key]
        if isinstance(value, bool) or not isinstance(value, types):
            names = " or ".join(t.__name__ for t in types)
            raise ConfigError(f"config key {key!r} must be {names}, got {type(value).__name__}")
        kwargs[attr] = value
    if kwargs["benchmark"] not in BENCHMARKS:
        raise ConfigError(f"config key 'benchmark': unknown benchmark {kwargs['benchmark']!r}")
    if kwargs["horizon"] < 2:
        raise ConfigError("config key 'N' must be at least 2")
    if kwargs["iterations"] < 1:
        raise ConfigError("config key 'K' must be at least 1")
    for key in ("x0", "front_iterations", "figures"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    if any(not isinstance(j, int) or j < 0 for j in kwargs.get("front_iterations", ())):
        raise ConfigError("config key 'front_iterations' must list nonnegative integers")
    bad = [f for f in kwargs.get("figures", ()) if f not in FIGURES]
    if bad:
        raise ConfigError(f"config key 'figures': unknown figure(s) {bad}; expected a subset of {list(FIGURES)}")
    if "delta" in kwargs:
        try:
            kwargs["delta"] = {int(i): float(v) for i, v in kwargs["delta"].items()}
        except (TypeError, ValueError):
            raise ConfigError("config key 'delta' must map objective numbers to numbers") from None
    cfg = ExperimentConfig(**kwargs)
    try:
        cfg.mpc_config()
        _first_rule(cfg.first_selection)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid rule or algorithm setting: {err}") from None
    return cfg


def parse_config(path):
    """Read and validate a JSON config file."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# output


def _fmt(x):
    if isinstance(x, str):
        return x
    x = float(x)
    return "nan" if np.isnan(x) else format(x, ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_trace_csv(path, trace, objectives):
    """One row per ``k = 0..K``; the last row carries the final state only."""
    model = objectives.model
    n, m, s = model.state_dim, model.input_dim, objectives.n_objectives
    K = trace.n_steps
    cum = np.cumsum(trace.stage_costs, axis=0)
    avg = cum / np.arange(1, K + 1)[:, None]
    slack = trace.comparison_costs - trace.chosen_costs
    header = (
        ["k"]
        + [f"x{j + 1}" for j in range(n)]
        + [f"u{j + 1}" for j in range(m)]
        + [f"l{i + 1}" for i in range(s)]
        + [f"cum_J{i + 1}" for i in range(s)]
        + [f"avg_J{i + 1}" for i in range(s)]
        + ["V"]
        + [f"chosen_J{i + 1}" for i in range(s)]
        + [f"comparison_J{i + 1}" for i in range(s)]
        + [f"slack_J{i + 1}" for i in range(s)]
        + ["endpoint_error", "status"]
    )
    rows = []
    nan_s = [np.nan] * s
    for k in range(K + 1):
        row = [k] + list(trace.states[k])
        if k < K:
            row += list(trace.inputs[k]) + list(trace.stage_costs[k]) + list(cum[k]) + list(avg[k]) + [trace.V[k]]
            row += list(trace.chosen_costs[k]) + list(trace.comparison_costs[k]) + list(slack[k])
            row += [trace.endpoint_errors[k], trace.statuses[k]]
        else:
            row += [np.nan] * m + nan_s * 3 + [np.nan] + nan_s * 3 + [np.nan, "final"]
        rows.append(row)
    _write_csv(path, header, rows)


def write_front_csv(path, front, chosen_cost=None):
    costs = front.costs
    s = costs.shape[1] if costs.size else (len(chosen_cost) if chosen_cost is not None else 0)
    header = [f"J{i + 1}" for i in range(s)] + ["tag"]
    rows = [list(sol.cost) + [sol.scalarization_tag] for sol in front.points]
    _write_csv(path, header, rows)


def plot_script(cfg, objectives, front_files=()):
    """Gnuplot script rendering the configured figures from the CSV files."""
    n, s = objectives.model.state_dim, objectives.n_objectives
    lines = [
        "# generated; run with: gnuplot plot.gp",
        "set datafile separator ','",
        "set datafile missing 'nan'",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        "set xlabel 'k'",
    ]
    if "trajectory" in cfg.figures:
        lines += ["set output 'trajectory.png'", "set ylabel 'state'"]
        lines.append("plot " + ", ".join(f"'trace.csv' using 'k':'x{j + 1}' with lines" for j in range(n)))
    if "costs" in cfg.figures:
        lines += ["set output 'cumulative.png'", "set ylabel 'cumulative cost'"]
        lines.append("plot " + ", ".join(f"'trace.csv' using 'k':'cum_J{i + 1}' with lines" for i in range(s)))
    if "averaged" in cfg.figures:
        lines += ["set output 'averaged.png'", "set ylabel 'averaged cost'"]
        lines.append("plot " + ", ".join(f"'trace.csv' using 'k':'avg_J{i + 1}' with lines" for i in range(s)))
    if "lyapunov" in cfg.figures:
        lines += ["set output 'lyapunov.png'", "set ylabel 'V(k)'", "plot 'trace.csv' using 'k':'V' with linespoints"]
    if "front" in cfg.figures and front_files:
        lines += ["set xlabel 'J1'", "set ylabel 'J2'"]
        for name in front_files:
            stem = Path(name).stem
            lines += [f"set output '{stem}.png'", f"plot '{name}' using 'J1':'J2' with points"]
    return "\n".join(lines) + "\n"


def _config_dict(cfg):
    # the output directory is left out so reports of identical runs compare equal
    d = asdict(cfg)
    del d["out"]
    d["delta"] = {str(k): v for k, v in cfg.delta.items()}
    return d


def run_checks(trace, objectives, cfg):
    """All diagnostics applicable to ``trace``, as :class:`CheckResult` objects."""
    checks = [
        dg.check_j1_performance(trace, objectives),
        dg.check_rotated_performance(trace, objectives),
        dg.lyapunov_descent(trace, objectives),
        dg.endpoint_bound(trace, objectives, tol=cfg.feas_tol),
        dg.bound_chain(trace),
    ]
    for i in range(1, objectives.n_objectives + 1):
        checks.append(dg.check_averaged(trace, objectives, i, tol_avg=cfg.tol_avg))
    if trace.variant.value == "bound_all":
        for i, d in sorted(cfg.delta.items()):
            checks.append(dg.ji_performance_envelope(trace, objectives, i, d, k_min=cfg.envelope_onset))
    return checks


def _front_at(trace, objectives, cfg, j):
    """Bounded front of the step-``j`` problem of ``trace``."""
    p = MooProblem(objectives.model, objectives, cfg.horizon, trace.states[j])
    if j > 0:
        p = p.with_bounds(bounds_from_comparison(trace.comparison_costs[j], cfg.algorithm))
    return approximate_front(
        p, cfg.front_budget, seed=cfg.seed, n_starts=cfg.n_starts, eps_dom=cfg.eps_dom, feas_tol=cfg.feas_tol
    )


def run_experiment(cfg, out_dir=None, front_iterations=None):
    """Run one closed loop and write ``trace.csv``, fronts, ``report.json`` and ``plot.gp``.

    Returns ``(exit_code, report_dict)``.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    bench = get_benchmark(cfg.benchmark)
    objectives = bench.objectives
    x0 = np.asarray(cfg.x0 if cfg.x0 is not None else bench.x0, float)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "benchmark": cfg.benchmark,
        "config": _config_dict(cfg),
        "status": "ok",
        "message": "",
        "checks": [],
    }
    front_iterations = tuple(cfg.front_iterations if front_iterations is None else front_iterations)
    log.info("running %s: N=%d K=%d", cfg.benchmark, cfg.horizon, cfg.iterations)
    try:
        trace = run_closed_loop(objectives, x0, cfg.mpc_config())
    except SolverError as err:
        report.update(status="solver_failure", message=str(err), exit_code=EXIT_SOLVER_FAILURE)
        _write_json(out / "report.json", report)
        return EXIT_SOLVER_FAILURE, report

    write_trace_csv(out / "trace.csv", trace, objectives)
    front_files = []
    for j in front_iterations:
        if j >= trace.n_steps:
            log.warning("front at iteration %d skipped: trace has %d steps", j, trace.n_steps)
            continue
        front = _front_at(trace, objectives, cfg, j)
        name = f"front_k{j}.csv"
        write_front_csv(out / name, front)
        front_files.append(name)
    (out / "plot.gp").write_text(plot_script(cfg, objectives, front_files))

    checks = run_checks(trace, objectives, cfg)
    fallbacks = [k for k, st in enumerate(trace.statuses) if st == "fallback"]
    report.update(
        n_steps=trace.n_steps,
        first_solution={
            "cost": [float(c) for c in trace.first_solution.cost],
            "tag": trace.first_solution.scalarization_tag,
        },
        final_state=[float(v) for v in trace.states[-1]],
        final_cumulative_costs=[float(v) for v in trace.cumulative_costs[-1]],
        fallback_steps=fallbacks,
        checks=[c.to_dict() for c in checks],
        fronts=front_files,
    )
    if trace.message:
        report.update(status="solver_failure", message=trace.message)
        code = EXIT_SOLVER_FAILURE
    elif any(c.passed is False for c in checks):
        code = EXIT_CHECK_FAILED
    else:
        code = EXIT_OK
    report["exit_code"] = code
    _write_json(out / "report.json", report)
    return code, report


def _write_json(path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def compare_rules(cfg, rules, out_dir=None):
    """Run ``cfg`` once per subsequent rule, sharing the step-0 solution.

    Writes ``<out>/<rule>/`` run directories plus ``compare.csv`` and
    ``compare.json``.  Returns ``(exit_code, summary)``.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    bench = get_benchmark(cfg.benchmark)
    objectives = bench.objectives
    x0 = np.asarray(cfg.x0 if cfg.x0 is not None else bench.x0, float)
    mpc_cfg = cfg.mpc_config()
    try:
        first = select_first(MooProblem(objectives.model, objectives, cfg.horizon, x0), mpc_cfg)
    except SolverError as err:
        return EXIT_SOLVER_FAILURE, {"status": "solver_failure", "message": str(err)}
    summary = {"schema_version": REPORT_SCHEMA_VERSION, "benchmark": cfg.benchmark, "rules": {}}
    rows, code = [], EXIT_OK
    s = objectives.n_objectives
    for name in rules:
        rule_cfg = replace(cfg, rule=name)
        trace = run_closed_loop(objectives, x0, rule_cfg.mpc_config(), first_solution=first)
        run_dir = out / name
        run_dir.mkdir(exist_ok=True)
        write_trace_csv(run_dir / "trace.csv", trace, objectives)
        steps, reached = dg.steps_to_neighborhood(trace, objectives.model.x_eq, cfg.neighborhood_eps)
        final = trace.cumulative_costs[-1]
        summary["rules"][name] = {
            "final_cumulative_costs": [float(v) for v in final],
            "final_state": [float(v) for v in trace.states[-1]],
            "steps_to_neighborhood": steps,
            "neighborhood_reached": reached,
            "fallback_steps": [k for k, st in enumerate(trace.statuses) if st == "fallback"],
        }
        rows.append([name] + list(final) + list(trace.states[-1]) + [steps, int(reached)])
        if trace.message:
            code = EXIT_SOLVER_FAILURE
    n = objectives.model.state_dim
    header = (
        ["rule"]
        + [f"final_cum_J{i + 1}" for i in range(s)]
        + [f"final_x{j + 1}" for j in range(n)]
        + ["steps_to_neighborhood", "reached"]
    )
    _write_csv(out / "compare.csv", header, rows)
    summary["neighborhood_eps"] = cfg.neighborhood_eps
    _write_json(out / "compare.json", summary)
    return code, summary


# ---------------------------------------------------------------------------
# entry point


def _parser():
    ap = argparse.ArgumentParser(prog="mompc", description="Multiobjective MPC experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON experiment configuration")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="multistart seed (overrides the config)")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the closed loop and all checks")
    fp = sub.add_parser("front", parents=[common], help="write the bounded front at one iteration")
    fp.add_argument("--at-iteration", type=int, required=True, dest="at_iteration")
    cp = sub.add_parser("compare", parents=[common], help="compare subsequent-selection rules")
    cp.add_argument("--rules", default="ideal,min1,min2")
    return ap


def main(argv=None):
    logging.basicConfig(level=os.environ.get("MOMPC_LOG_LEVEL", "WARNING").upper(), format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        overrides = {}
        if args.out is not None:
            overrides["out"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = replace(cfg, **overrides)
        if args.command == "front":
            if args.at_iteration < 0:
                raise ConfigError("--at-iteration must be nonnegative")
            cfg = replace(cfg, iterations=args.at_iteration + 1)
        if args.command == "compare":
            rules = [r.strip() for r in args.rules.split(",") if r.strip()]
            if not rules:
                raise ConfigError("--rules is empty")
            for r in rules:
                parse_rule(r)
    except (ConfigError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    if args.command == "run":
        code, report = run_experiment(cfg)
    elif args.command == "front":
        code, report = run_experiment(cfg, front_iterations=(args.at_iteration,))
    else:
        code, report = compare_rules(cfg, rules)
    print(f"{args.command}: exit {code} ({cfg.out})")
    return code


if __name__ == "__main__":
    sys.exit(main())
