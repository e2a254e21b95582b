"""Rate experiments: measured reconstruction errors against predicted stability rates.

Three drivers are provided.

* :func:`holder_rate_experiment` recovers ``u(., t0)`` for ``0 < t0 < T`` from
  noisy terminal data and fits ``log error`` against ``log D``, where ``D`` is
  the H1 size of the data perturbation.  The prediction is a Hölder rate
  with exponent :func:`~degenerate_backward.carleman.theta_exponent`.
* :func:`log_rate_experiment` recovers the initial state (``t0 = 0``), where
  only a logarithmic rate ``(ln 1/D)^{-alpha}`` is expected, and checks the
  measured errors against that shape.
* :func:`semilinear_stability_experiment` perturbs the initial state of a
  semilinear problem and compares the spread of two solutions at ``t0``
  with their spread at ``T``.

Every driver is a deterministic function of its arguments and seeds.

Regularisation
--------------
With ``alpha_rule="bound"`` (the default) the Tikhonov weight is
``alpha = max(1e-14, eta / M)``, where ``eta`` is the absolute L2 noise
level and ``M`` the H1 norm of the initial state.  This is the a priori
choice that balances the noise against the regularisation bias under the
source condition a backward parabolic problem offers.  ``alpha_rule="squared"``
uses :func:`~degenerate_backward.backward_recon.choose_alpha` instead.  That
rule keeps ``eta^2 / alpha`` constant, so the error stops shrinking with the
noise and Hölder slopes flatten toward zero.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .assumptions import HypothesisError, check_assumptions, check_nonlinearity
from .backward_recon import (
    ALPHA_FLOOR, ForwardMap, NoiseSpec, add_noise, choose_alpha, noise_direction,
    reconstruct_tikhonov,
)
from .carleman import log_rate_s, optimal_s, theta_exponent
from .expr import as_expr
from .pde_solver import Scheme, forward_solve, semilinear_forward_solve
from .problem_model import GridFunction, h1_norm, l2_norm, sample

__all__ = [
    "RatePoint", "RateReport", "fit_power_law", "bound_alpha", "count_inversions",
    "holder_rate_experiment", "log_rate_experiment", "semilinear_stability_experiment",
    "write_report_csv", "write_report_json", "DEFAULT_BUMP",
]

SLOPE_MARGIN = 0.02
SHAPE_FACTOR = 1.5
CLEAN_ALPHA = 1e-10
DEFAULT_BUMP = "x*(1-x)*exp(-40*(x-0.3)^2)"
ALPHA_RULES = ("bound", "squared")


class RatePoint(NamedTuple):
    """One sweep point: noise level (or perturbation size), ``D``, error, weight parameter."""

    delta: float
    D: float
    error: float
    s: float


@dataclass
class RateReport:
    """Outcome of one rate experiment.

    ``theta_theory`` is set for the Hölder experiments and ``alpha`` for the
    logarithmic one; the other is None.
    """

    kind: str
    points: list
    fitted_slope: float
    fitted_intercept: float
    theta_theory: float | None
    alpha: float | None
    passed: bool
    runtime_seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self, include_runtime=False):
        out = {
            "kind": self.kind,
            "points": [p._asdict() for p in self.points],
            "fitted_slope": self.fitted_slope,
            "fitted_intercept": self.fitted_intercept,
            "theta_theory": self.theta_theory,
            "alpha": self.alpha,
            "pass": self.passed,
            "details": self.details,
        }
        if include_runtime:
            out["runtime_seconds"] = self.runtime_seconds
        return out


def fit_power_law(points):
    """Least-squares line through ``(ln x, ln y)``; returns ``(slope, intercept)``."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    if any(not (x > 0 and y > 0) for x, y in pts):
        raise ValueError("all points must be positive")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    xc = lx - lx.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise ValueError("x values must not all coincide")
    slope = float(xc @ (ly - ly.mean())) / sxx
    return slope, float(ly.mean() - slope * lx.mean())


def bound_alpha(noise_level, bound):
    """``max(1e-14, noise_level / bound)``."""
    if noise_level < 0 or not bound > 0:
        raise ValueError("noise_level must be non-negative and bound positive")
    return max(ALPHA_FLOOR, noise_level / bound)


def count_inversions(values):
    """Number of adjacent pairs where the sequence decreases."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(v[1:] < v[:-1]))


def _increasing(name, values, allow_zero=False):
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError(f"{name} must not be empty")
    if any(v < 0 or (v == 0 and not allow_zero) for v in vals):
        raise ValueError(f"{name} must be positive")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError(f"{name} must be strictly increasing")
    return vals


def _require_assumptions(spec):
    report = check_assumptions(spec)
    if not report.ok:
        msg = "; ".join(f"{loc}: {m}" for loc, m in report.details) or "assumptions fail"
        raise HypothesisError(msg)
    return report


def _alpha(rule, noise_level, data_norm, delta_rel, bound):
    if rule == "bound":
        return bound_alpha(noise_level, bound)
    if rule == "squared":
        return choose_alpha(delta_rel, data_norm)
    raise ValueError(f"alpha_rule must be one of {ALPHA_RULES}, got {rule!r}")


def _truth(spec, u0_expr, dt, scheme):
    u0 = sample(as_expr(u0_expr), spec.grid, 0.0)
    return forward_solve(spec, u0, 0.0, spec.T, dt, scheme).series


def holder_rate_experiment(spec, t0, u0_expr, deltas, seeds=(42,), dt=1e-3, n=None, lam=1.0,
                           cg_tol=1e-10, max_iter=500, scheme=Scheme.IMPLICIT_EULER,
                           alpha_rule="bound"):
    """Hölder-rate sweep for recovering ``u(., t0)``, ``0 < t0 < T``.

    For each noise level the error ``|estimate - u(t0)|_{L2}`` and the
    perturbation size ``D = |noisy - clean|_{H1}`` are averaged over
    ``seeds``, and ``log error`` is fitted against ``log D``.  The run passes
    when the slope is at least ``theta_theory - 0.02`` and the errors
    decrease with the noise, allowing one adjacent inversion.

    Raises :class:`HypothesisError` if the assumption checks fail.
    """
    start = time.perf_counter()
    if n is not None:
        spec = spec.with_cells(n)
    if not 0 < t0 < spec.T:
        raise ValueError(f"need 0 < t0 < T, got t0={t0}, T={spec.T}")
    deltas = _increasing("deltas", deltas)
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seeds must not be empty")
    _require_assumptions(spec)
    theta = theta_exponent(t0, spec.T, lam)

    truth = _truth(spec, u0_expr, dt, scheme)
    target = truth.at(t0)
    data = truth.frame(truth.n_steps)
    M = h1_norm(truth.frame(0))
    if not M > 0:
        raise ValueError("the initial state must be non-zero")
    data_l2 = l2_norm(data)
    target_l2 = l2_norm(target)
    fmap = ForwardMap(spec, t0, dt, scheme)

    def solve(d, alpha):
        return reconstruct_tikhonov(spec, d, t0, dt, alpha, cg_tol, max_iter, scheme,
                                    forward_map=fmap)

    clean = solve(data, CLEAN_ALPHA)
    clean_err = l2_norm(clean.estimate - target) / target_l2

    points, alphas, iters = [], [], []
    for delta in deltas:
        errs, Ds = [], []
        alpha = _alpha(alpha_rule, delta * data_l2, data_l2, delta, M)
        for seed in seeds:
            noisy = add_noise(data, NoiseSpec(delta, seed))
            res = solve(noisy, alpha)
            errs.append(l2_norm(res.estimate - target))
            Ds.append(h1_norm(noisy - data))
            iters.append(res.cg_iterations)
        D = float(np.mean(Ds))
        points.append(RatePoint(delta, D, float(np.mean(errs)), optimal_s(M, D, t0, spec.T, lam)))
        alphas.append(alpha)

    if len(points) >= 3:
        slope, intercept = fit_power_law([(p.D, p.error) for p in points])
    else:
        slope = intercept = math.nan
    inversions = count_inversions([p.error for p in points])
    passed = bool(slope >= theta - SLOPE_MARGIN and inversions <= 1)
    details = {
        "t0": float(t0), "T": float(spec.T), "lambda": float(lam), "n_cells": spec.grid.n_cells,
        "dt": float(dt), "seeds": seeds, "alpha_rule": alpha_rule, "alpha_values": alphas,
        "M": M, "clean_relative_error": clean_err, "inversions": inversions,
        "cg_iterations": iters,
    }
    return RateReport("holder", points, slope, intercept, theta, None, passed,
                      time.perf_counter() - start, details)


def _time_derivatives(frames, dt):
    """First and second derivatives at the last level by one-sided second-order stencils.

    ``frames`` holds the last four levels, oldest first.
    """
    f3, f2, f1, f0 = frames
    d1 = (3 * f0 - 4 * f1 + f2) / (2 * dt)
    d2 = (2 * f0 - 5 * f1 + 4 * f2 - f3) / dt ** 2
    return d1, d2


def log_rate_experiment(spec, u0_expr, deltas, seeds=(42,), dt=1e-3, n=None, lam=1.0,
                        alpha=0.9, cg_tol=1e-10, max_iter=500, scheme=Scheme.IMPLICIT_EULER,
                        alpha_rule="squared"):
    """Logarithmic-rate check for recovering the initial state.

    Noise of relative size ``delta`` is added, with one seeded direction, to
    each of the last four stored frames.  ``D`` is the H1 size of the
    resulting perturbation plus that of its first and second time
    derivatives at ``T``, taken by one-sided second-order differences.  The
    constant ``C_fit`` is calibrated at the largest ``D``; the run passes if
    every other point obeys ``error <= 1.5 C_fit (ln 1/D)^{-alpha}``.  The
    reported slope comes from a log-log fit of the error against
    ``(ln 1/D)^{-alpha}``.

    The regularity that the logarithmic bound presumes on the time
    derivatives is only measured discretely, not verified.
    """
    start = time.perf_counter()
    if not 0 < alpha < 1:
        raise ValueError(f"need 0 < alpha < 1, got alpha={alpha}")
    if n is not None:
        spec = spec.with_cells(n)
    deltas = _increasing("deltas", deltas)
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seeds must not be empty")
    truth = _truth(spec, u0_expr, dt, scheme)
    if truth.n_steps < 3:
        raise ValueError("need at least 3 time steps to difference the data in time")
    K = truth.n_steps
    tail = [truth.frame(k) for k in range(K - 3, K + 1)]
    target = truth.frame(0)
    data = tail[-1]
    data_l2 = l2_norm(data)
    M = h1_norm(target)
    fmap = ForwardMap(spec, 0.0, dt, scheme)

    points, alphas, iters = [], [], []
    for delta in deltas:
        errs, Ds = [], []
        a_reg = _alpha(alpha_rule, delta * data_l2, data_l2, delta, M)
        for seed in seeds:
            eta = noise_direction(spec.grid.size, seed)
            eta = eta / l2_norm(GridFunction(spec.grid, eta))
            pert = [delta * l2_norm(f) * eta for f in tail]
            d1, d2 = _time_derivatives(pert, dt)
            D = sum(h1_norm(GridFunction(spec.grid, v)) for v in (pert[-1], d1, d2))
            if D >= 1:
                raise ValueError(f"D = {D:.6g} >= 1 at delta={delta}; rescale the data "
                                 "or lower the noise levels")
            res = reconstruct_tikhonov(spec, GridFunction(spec.grid, data.values + pert[-1]),
                                       0.0, dt, a_reg, cg_tol, max_iter, scheme,
                                       forward_map=fmap)
            errs.append(l2_norm(res.estimate - target))
            Ds.append(D)
            iters.append(res.cg_iterations)
        D = float(np.mean(Ds))
        points.append(RatePoint(delta, D, float(np.mean(errs)), log_rate_s(D, alpha)))
        alphas.append(a_reg)

    calib = max(points, key=lambda p: p.D)
    C_fit = calib.error * (-math.log(calib.D)) ** alpha
    envelope = [SHAPE_FACTOR * C_fit * (-math.log(p.D)) ** (-alpha) for p in points]
    passed = bool(all(p.error <= env for p, env in zip(points, envelope) if p is not calib))
    if len(points) >= 3:
        slope, intercept = fit_power_law([((-math.log(p.D)) ** (-alpha), p.error)
                                          for p in points])
    else:
        slope = intercept = math.nan
    details = {
        "T": float(spec.T), "lambda": float(lam), "n_cells": spec.grid.n_cells, "dt": float(dt),
        "seeds": seeds, "alpha_rule": alpha_rule, "alpha_values": alphas, "C_fit": C_fit,
        "envelope": envelope, "non_increasing": count_inversions([p.error for p in points]) == 0,
        "cg_iterations": iters,
        "regularity_verified": False,
    }
    return RateReport("log", points, slope, intercept, None, float(alpha), passed,
                      time.perf_counter() - start, details)


def _sup(series):
    return float(np.max(np.abs(series.values)))


def semilinear_stability_experiment(spec, u0_expr, epsilons, t0=0.5, dt=1e-3, n=None,
                                    lam=1.0, M_bound=10.0, bump_expr=DEFAULT_BUMP):
    """Spread of two semilinear solutions at ``t0`` against their spread at ``T``.

    The second solution starts from ``u0 + eps * bump``.  For each ``eps``
    the point records ``D = |u(T) - v(T)|_{H1}`` and
    ``error = |u(t0) - v(t0)|_{L2}``; ``log error`` is fitted against
    ``log D`` over the points with ``eps > 0``.  Both solutions must stay
    within ``M_bound`` in the sup norm, otherwise :class:`HypothesisError` is
    raised.  Without ``f`` the linear solver is used.
    """
    start = time.perf_counter()
    if n is not None:
        spec = spec.with_cells(n)
    if not 0 < t0 < spec.T:
        raise ValueError(f"need 0 < t0 < T, got t0={t0}, T={spec.T}")
    epsilons = _increasing("epsilons", epsilons, allow_zero=True)
    if not M_bound > 0:
        raise ValueError("M_bound must be positive")
    dfdu_max = check_nonlinearity(spec, M_bound)
    theta = theta_exponent(t0, spec.T, lam)

    if spec.is_semilinear:
        def run(v0):
            return semilinear_forward_solve(spec, v0, 0.0, spec.T, dt).series
    else:
        def run(v0):
            return forward_solve(spec, v0, 0.0, spec.T, dt).series

    u0 = sample(as_expr(u0_expr), spec.grid, 0.0).values
    g = sample(as_expr(bump_expr), spec.grid, 0.0).values
    u = run(GridFunction(spec.grid, u0))
    sup_u = _sup(u)
    if sup_u > M_bound:
        raise HypothesisError(f"max |u| = {sup_u:.6g} exceeds M_bound = {M_bound:g}")
    uT, ut0 = u.frame(u.n_steps), u.at(t0)

    points, sups = [], []
    for eps in epsilons:
        v = run(GridFunction(spec.grid, u0 + eps * g))
        sup_v = _sup(v)
        if sup_v > M_bound:
            raise HypothesisError(f"max |v| = {sup_v:.6g} exceeds M_bound = {M_bound:g} "
                                  f"at eps={eps:g}")
        sups.append(sup_v)
        D = h1_norm(uT - v.frame(v.n_steps))
        err = l2_norm(ut0 - v.at(t0))
        M = max(h1_norm(u.frame(0)), h1_norm(v.frame(0)))
        s = optimal_s(M, D, t0, spec.T, lam) if D > 0 else 0.0
        points.append(RatePoint(eps, D, err, s))

    positive = [(p.D, p.error) for p in points if p.delta > 0]
    if len(positive) >= 3:
        slope, intercept = fit_power_law(positive)
    else:
        slope = intercept = math.nan
    passed = bool(slope >= theta - SLOPE_MARGIN)
    details = {
        "t0": float(t0), "T": float(spec.T), "lambda": float(lam), "n_cells": spec.grid.n_cells,
        "dt": float(dt), "M_bound": float(M_bound), "sup_u": sup_u, "sup_v": sups,
        "max_abs_df_du": dfdu_max, "bump": str(bump_expr), "semilinear": spec.is_semilinear,
    }
    return RateReport("semilinear", points, slope, intercept, theta, None, passed,
                      time.perf_counter() - start, details)


_COLUMNS = {
    "holder": ("delta", "D", "error", "s_star", "theta_theory"),
    "log": ("delta", "D", "error", "s_log", "alpha"),
    "semilinear": ("epsilon", "D", "error", "s_star", "theta_theory"),
}


def write_report_csv(report, fp):
    """One row per sweep point; floats with 17 significant digits."""
    own = isinstance(fp, str)
    f = open(fp, "w", newline="") if own else fp
    last = report.alpha if report.kind == "log" else report.theta_theory
    try:
        f.write(",".join(_COLUMNS[report.kind]) + "\n")
        for p in report.points:
            f.write(",".join(format(v, ".17g") for v in (p.delta, p.D, p.error, p.s, last)) + "\n")
    finally:
        if own:
            f.close()


def write_report_json(report, fp):
    """Report fields as JSON; run time is left out so the file is reproducible."""
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"
    if isinstance(fp, str):
        with open(fp, "w") as f:
            f.write(text)
    else:
        fp.write(text)
