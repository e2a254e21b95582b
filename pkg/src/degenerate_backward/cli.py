"""Command-line entry point.

Usage::

    degenerate-backward <subcommand> --config run.json [--output-dir DIR] [--quiet]

Subcommands: ``check``, ``solve``, ``reconstruct``, ``carleman``,
``rate-thm1``, ``rate-thm2``, ``rate-thm3``.

Exit codes: 0 success, 1 invalid configuration or usage, 2 numerical
failure, 3 a structural hypothesis does not hold for the problem.

The configuration is a single JSON document::

    {
      "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 100, "T": 1,
                  "bc": "dirichlet", "a": "x*(1-x)", "b": "0", "c": "0",
                  "F": "0", "sigma": null, "r": null, "f": null,
                  "u0": "sin(3.14159265*x)"},
      "discretization": {"dt": 1e-3, "scheme": "implicit_euler"},
      "carleman": {"lambda": 1, "s_grid": [1, 2, 3]},
      "reconstruction": {"t0": 0.5, "alpha_reg": "auto", "cg_tol": 1e-10,
                         "max_iter": 500, "delta": 0},
      "experiment": {"deltas": [1e-4, 1e-3], "seeds": [42], "alpha": 0.9,
                     "epsilons": [1e-4, 1e-3], "M_bound": 10,
                     "bump": "x*(1-x)*exp(-40*(x-0.3)^2)", "alpha_rule": null},
      "assumptions": {"zero_tol": 1e-12, "feasibility_tol": 1e-9,
                      "n_time_samples": 11},
      "output_dir": "out"
    }

Only ``problem.a`` is required; every other entry has the default shown
(``s_grid`` defaults to 1..20, ``t0`` to ``T/2``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import assumptions as asm
from .backward_recon import NoiseSpec, add_noise, choose_alpha, reconstruct_tikhonov
from .carleman import verify_inequality, write_ratio_table
from .experiments import (
    DEFAULT_BUMP, holder_rate_experiment, log_rate_experiment,
    semilinear_stability_experiment, write_report_csv, write_report_json,
)
from .expr import ExprError, ExprSyntaxError, as_expr
from .pde_solver import NumericalError, Scheme, forward_solve, semilinear_forward_solve
from .problem_model import (
    BoundaryCondition, TimeSeriesField, l2_norm, make_problem, read_grid_function,
    sample, step_count, write_grid_function, write_time_series,
)
from .tridiagonal import SingularPivotError

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "dispatch", "main",
           "SUBCOMMANDS"]

SUBCOMMANDS = ("check", "solve", "reconstruct", "carleman", "rate-thm1", "rate-thm2",
               "rate-thm3")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_HYPOTHESIS = 0, 1, 2, 3

_SECTIONS = {
    "problem": {"x_lo", "x_hi", "n_cells", "T", "bc", "a", "b", "c", "F", "sigma", "r", "f",
                "u0"},
    "discretization": {"dt", "scheme"},
    "carleman": {"lambda", "s_grid"},
    "reconstruction": {"t0", "alpha_reg", "cg_tol", "max_iter", "delta"},
    "experiment": {"deltas", "seeds", "alpha", "epsilons", "M_bound", "bump", "alpha_rule"},
    "assumptions": {"zero_tol", "feasibility_tol", "n_time_samples"},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class RunConfig:
    problem: object
    u0: object
    dt: float = 1e-3
    scheme: Scheme = Scheme.IMPLICIT_EULER
    lam: float = 1.0
    s_grid: list = field(default_factory=lambda: [float(s) for s in range(1, 21)])
    t0: float = 0.5
    alpha_reg: object = "auto"
    cg_tol: float = 1e-10
    max_iter: int = 500
    delta: float = 0.0
    deltas: list = field(default_factory=lambda: [1e-4, 3e-4, 1e-3, 3e-3, 1e-2])
    seeds: list = field(default_factory=lambda: [42])
    alpha: float = 0.9
    epsilons: list = field(default_factory=lambda: [1e-4, 3e-4, 1e-3, 3e-3, 1e-2])
    M_bound: float = 10.0
    bump: object = None
    alpha_rule: str | None = None
    zero_tol: float = asm.ZERO_TOL
    feasibility_tol: float = asm.FEASIBILITY_TOL
    n_time_samples: int = 11
    output_dir: str = "out"


def _number(section, key, value, kind=float, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    if kind is int and value != int(value):
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
    value = kind(value)
    if not np.isfinite(value):
        raise ConfigError(f"{section}.{key} must be finite")
    if positive and not value > 0:
        raise ConfigError(f"{section}.{key} must be positive, got {value!r}")
    return value


def _numbers(section, key, value, kind=float):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{section}.{key} must be a non-empty array")
    return [_number(section, key, v, kind) for v in value]


def _expr(key, value, required=False, section="problem"):
    key = f"{section}.{key}"
    if value is None:
        if required:
            raise ConfigError(f"{key} is required")
        return None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = repr(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be an expression string")
    try:
        return as_expr(value)
    except ExprSyntaxError as err:
        raise ConfigError(f"{key}: {err} (offset {err.offset})") from err
    except ExprError as err:
        raise ConfigError(f"{key}: {err}") from err


def parse_config(doc):
    """Validate a decoded configuration document into a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    for key in doc:
        if key not in _SECTIONS and key != "output_dir":
            raise ConfigError(f"unknown configuration section {key!r}")
    sec = {}
    for name, allowed in _SECTIONS.items():
        body = doc.get(name, {})
        if not isinstance(body, dict):
            raise ConfigError(f"{name} must be an object")
        for key in body:
            if key not in allowed:
                raise ConfigError(f"unknown field {name}.{key}")
        sec[name] = body
    if "problem" not in doc:
        raise ConfigError("problem section is required")

    p = sec["problem"]
    bc = p.get("bc", "dirichlet")
    if bc not in ("dirichlet", "robin"):
        raise ConfigError(f"problem.bc must be 'dirichlet' or 'robin', got {bc!r}")
    exprs = {k: _expr(k, p.get(k), required=(k == "a")) for k in ("a", "b", "c", "F", "sigma",
                                                                    "r", "f")}
    if bc == "robin" and exprs["r"] is None:
        raise ConfigError("problem.r is required when problem.bc is 'robin'")
    u0 = _expr("u0", p.get("u0", "sin(3.14159265*x)"))
    T = _number("problem", "T", p.get("T", 1.0), positive=True)
    n_cells = _number("problem", "n_cells", p.get("n_cells", 100), int)
    try:
        spec = make_problem(
            x_lo=_number("problem", "x_lo", p.get("x_lo", 0.0)),
            x_hi=_number("problem", "x_hi", p.get("x_hi", 1.0)),
            n_cells=n_cells, T=T, bc=bc,
            a=exprs["a"], b=exprs["b"] or "0", c=exprs["c"] or "0", F=exprs["F"] or "0",
            sigma=exprs["sigma"], r=exprs["r"], f=exprs["f"])
    except ValueError as err:
        raise ConfigError(f"problem: {err}") from err

    cfg = RunConfig(problem=spec, u0=u0, t0=0.5 * T)
    d = sec["discretization"]
    cfg.dt = _number("discretization", "dt", d.get("dt", cfg.dt), positive=True)
    scheme = d.get("scheme", "implicit_euler")
    try:
        cfg.scheme = Scheme(scheme)
    except ValueError:
        raise ConfigError("discretization.scheme must be 'implicit_euler' or "
                          f"'crank_nicolson', got {scheme!r}") from None

    c = sec["carleman"]
    cfg.lam = _number("carleman", "lambda", c.get("lambda", cfg.lam), positive=True)
    if "s_grid" in c:
        cfg.s_grid = _numbers("carleman", "s_grid", c["s_grid"])

    r = sec["reconstruction"]
    cfg.t0 = _number("reconstruction", "t0", r.get("t0", cfg.t0))
    if not 0 <= cfg.t0 < T:
        raise ConfigError(f"reconstruction.t0 must satisfy 0 <= t0 < T, got {cfg.t0!r}")
    alpha_reg = r.get("alpha_reg", "auto")
    cfg.alpha_reg = alpha_reg if alpha_reg == "auto" else _number(
        "reconstruction", "alpha_reg", alpha_reg, positive=True)
    cfg.cg_tol = _number("reconstruction", "cg_tol", r.get("cg_tol", cfg.cg_tol), positive=True)
    cfg.max_iter = _number("reconstruction", "max_iter", r.get("max_iter", cfg.max_iter), int,
                           positive=True)
    cfg.delta = _number("reconstruction", "delta", r.get("delta", cfg.delta))
    if cfg.delta < 0:
        raise ConfigError("reconstruction.delta must be non-negative")

    for t_start, label in ((0.0, "T"), (cfg.t0, "T - t0")):
        try:
            step_count(t_start, T, cfg.dt)
        except ValueError as err:
            raise ConfigError(f"discretization.dt must divide {label}: {err}") from err

    e = sec["experiment"]
    for key in ("deltas", "epsilons"):
        if key in e:
            setattr(cfg, key, _numbers("experiment", key, e[key]))
    if "seeds" in e:
        cfg.seeds = _numbers("experiment", "seeds", e["seeds"], int)
        if any(s < 0 for s in cfg.seeds):
            raise ConfigError("experiment.seeds must be non-negative")
    cfg.alpha = _number("experiment", "alpha", e.get("alpha", cfg.alpha))
    cfg.M_bound = _number("experiment", "M_bound", e.get("M_bound", cfg.M_bound), positive=True)
    cfg.bump = _expr("bump", e.get("bump", DEFAULT_BUMP), section="experiment")
    rule = e.get("alpha_rule")
    if rule not in (None, "bound", "squared"):
        raise ConfigError(f"experiment.alpha_rule must be 'bound' or 'squared', got {rule!r}")
    cfg.alpha_rule = rule

    a = sec["assumptions"]
    cfg.zero_tol = _number("assumptions", "zero_tol", a.get("zero_tol", cfg.zero_tol),
                           positive=True)
    cfg.feasibility_tol = _number("assumptions", "feasibility_tol",
                                  a.get("feasibility_tol", cfg.feasibility_tol), positive=True)
    cfg.n_time_samples = _number("assumptions", "n_time_samples",
                                 a.get("n_time_samples", cfg.n_time_samples), int)
    if cfg.n_time_samples < 2:
        raise ConfigError("assumptions.n_time_samples must be at least 2")

    out = doc.get("output_dir", cfg.output_dir)
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir must be a non-empty string")
    cfg.output_dir = out
    return cfg


def load_config(path):
    """Read and validate a JSON configuration file."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as err:
        raise ConfigError(f"cannot read configuration {path!r}: {err.strerror}") from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno}, column {err.colno}: "
                          f"{err.msg}") from err
    return parse_config(doc)


def _dump(obj, path):
    with open(path, "w") as f:
        f.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _assumption_report(cfg):
    return asm.check_assumptions(cfg.problem, cfg.n_time_samples, zero_tol=cfg.zero_tol,
                                 slack=cfg.feasibility_tol)


def _require(cfg):
    report = _assumption_report(cfg)
    if not report.ok:
        msg = "; ".join(f"{loc}: {m}" for loc, m in report.details)
        raise asm.HypothesisError(f"assumptions fail: {msg}")


def _truth(cfg):
    spec = cfg.problem
    u0 = sample(cfg.u0, spec.grid, 0.0)
    if spec.is_semilinear:
        return semilinear_forward_solve(spec, u0, 0.0, spec.T, cfg.dt).series
    return forward_solve(spec, u0, 0.0, spec.T, cfg.dt, cfg.scheme).series


def _run_check(cfg, out, args, log):
    report = _assumption_report(cfg)
    text = report.to_json() + "\n"
    with open(os.path.join(out, "assumptions.json"), "w") as f:
        f.write(text)
    if not args.quiet:
        sys.stdout.write(text)
    log(f"assumptions {'hold' if report.ok else 'fail'}")


def _run_solve(cfg, out, args, log):
    series = _truth(cfg)
    write_time_series(series, os.path.join(out, "solution.csv"))
    log(f"solved {series.n_steps} steps")


def _run_reconstruct(cfg, out, args, log):
    spec = cfg.problem
    if spec.is_semilinear:
        raise ConfigError("reconstruct needs a linear problem (problem.f must be null)")
    if args.data:
        try:
            data = read_grid_function(args.data, spec.grid)
        except (OSError, ValueError) as err:
            raise ConfigError(f"--data: {err}") from err
    else:
        series = _truth(cfg)
        data = add_noise(series.frame(series.n_steps), NoiseSpec(cfg.delta, cfg.seeds[0]))
    alpha = (choose_alpha(cfg.delta, l2_norm(data)) if cfg.alpha_reg == "auto"
             else cfg.alpha_reg)
    res = reconstruct_tikhonov(spec, data, cfg.t0, cfg.dt, alpha, cfg.cg_tol, cfg.max_iter,
                               cfg.scheme)
    write_grid_function(res.estimate, os.path.join(out, "estimate.csv"))
    _dump({"t0": cfg.t0, "alpha_reg": res.alpha_reg, "cg_iterations": res.cg_iterations,
           "final_residual": res.final_residual, "data_misfit": res.data_misfit,
           "converged": res.converged}, os.path.join(out, "stats.json"))
    log(f"reconstructed in {res.cg_iterations} CG iterations")
    if not res.converged:
        raise NumericalError(f"CG did not reach tolerance {cfg.cg_tol:g} "
                             f"in {cfg.max_iter} iterations")


def _run_carleman(cfg, out, args, log):
    _require(cfg)
    series = _truth(cfg)
    spec = cfg.problem
    F = np.array([sample(spec.F_expr, spec.grid, t).values for t in series.times])
    F_series = TimeSeriesField(spec.grid, series.t_start, series.t_end, series.dt, F)
    report = verify_inequality(series, F_series, cfg.lam, cfg.s_grid,
                               robin=spec.bc is BoundaryCondition.ROBIN)
    write_ratio_table(report, os.path.join(out, "carleman.csv"))
    log(f"max ratio {report.max_ratio:.6g} at s={report.s_grid[report.argmax]:g}")


def _finish_rate(report, out, log):
    write_report_csv(report, os.path.join(out, "report.csv"))
    write_report_json(report, os.path.join(out, "report.json"))
    _dump({"runtime_seconds": report.runtime_seconds}, os.path.join(out, "timing.json"))
    log(f"fitted slope {report.fitted_slope:.6g}, pass={report.passed}")


def _run_thm1(cfg, out, args, log):
    if not cfg.t0 > 0:
        raise ConfigError("rate-thm1 needs reconstruction.t0 > 0")
    report = holder_rate_experiment(
        cfg.problem, cfg.t0, cfg.u0, cfg.deltas, cfg.seeds, cfg.dt, lam=cfg.lam,
        cg_tol=cfg.cg_tol, max_iter=cfg.max_iter, scheme=cfg.scheme,
        alpha_rule=cfg.alpha_rule or "bound")
    _finish_rate(report, out, log)


def _run_thm2(cfg, out, args, log):
    if not 0 < cfg.alpha < 1:
        raise ConfigError(f"experiment.alpha must lie in (0, 1), got {cfg.alpha!r}")
    report = log_rate_experiment(
        cfg.problem, cfg.u0, cfg.deltas, cfg.seeds, cfg.dt, lam=cfg.lam, alpha=cfg.alpha,
        cg_tol=cfg.cg_tol, max_iter=cfg.max_iter, scheme=cfg.scheme,
        alpha_rule=cfg.alpha_rule or "squared")
    _finish_rate(report, out, log)


def _run_thm3(cfg, out, args, log):
    if not cfg.t0 > 0:
        raise ConfigError("rate-thm3 needs reconstruction.t0 > 0")
    report = semilinear_stability_experiment(
        cfg.problem, cfg.u0, cfg.epsilons, t0=cfg.t0, dt=cfg.dt, lam=cfg.lam,
        M_bound=cfg.M_bound, bump_expr=cfg.bump)
    _finish_rate(report, out, log)


_RUNNERS = {
    "check": _run_check, "solve": _run_solve, "reconstruct": _run_reconstruct,
    "carleman": _run_carleman, "rate-thm1": _run_thm1, "rate-thm2": _run_thm2,
    "rate-thm3": _run_thm3,
}


def dispatch(subcommand, cfg, args=None):
    """Run ``subcommand`` on ``cfg``; returns the process exit code."""
    if args is None:
        args = argparse.Namespace(quiet=True, data=None)

    def log(msg):
        if not args.quiet:
            print(f"[{subcommand}] {msg}", file=sys.stderr)

    try:
        runner = _RUNNERS[subcommand]
    except KeyError:
        print(f"error: unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
        runner(cfg, cfg.output_dir, args, log)
    except asm.HypothesisError as err:
        print(f"hypothesis failure: {err}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (NumericalError, SingularPivotError, FloatingPointError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="degenerate-backward",
                     description="Backward reconstruction for degenerate parabolic problems.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--output-dir", help="override output_dir from the configuration")
    parser.add_argument("--data", help="terminal data CSV (x,value) for reconstruct")
    parser.add_argument("--quiet", action="store_true", help="no progress on standard error")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output_dir:
        cfg.output_dir = args.output_dir
    return dispatch(args.subcommand, cfg, args)


if __name__ == "__main__":
    sys.exit(main())
