"""Sampling-based checks of the structural hypotheses on a problem.

All checks evaluate the coefficient expressions on the grid nodes times
``n_time_samples`` uniform times in ``[0, T]``.  Pointwise conditions are
tested up to fixed tolerances: ``ZERO_TOL`` decides when a value counts as
zero and ``FEASIBILITY_TOL`` is the slack allowed in the feasibility tests.
Smoothness of the coefficients is assumed, not checked.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .expr import ExprError, evaluate
from .problem_model import BoundaryCondition

__all__ = [
    "ZERO_TOL", "FEASIBILITY_TOL", "LAMBDA1_FLOOR", "HypothesisError",
    "AssumptionReport", "DriftBound", "check_ellipticity", "find_lambda1",
    "check_drift_bound", "check_boundary_nondegeneracy", "check_nonlinearity",
    "check_assumptions",
]

ZERO_TOL = 1e-12
FEASIBILITY_TOL = 1e-9
LAMBDA1_FLOOR = 1e-9
DRIFT_STABILITY_RTOL = 0.1


class HypothesisError(RuntimeError):
    """A hypothesis of the stability theory does not hold for this problem."""


def _times(spec, n_time_samples):
    if n_time_samples < 2:
        raise ValueError("need at least 2 time samples")
    return np.linspace(0.0, spec.T, int(n_time_samples))


def _on(e, x, t):
    X, Tm = np.meshgrid(x, t, indexing="ij")
    return np.broadcast_to(evaluate(e, x=X, t=Tm), X.shape)


def check_ellipticity(spec, n_time_samples=11, tol=ZERO_TOL):
    """``a(x, t) >= sigma(x) >= 0`` at every sample.

    Returns ``(ok, witness)``; ``witness`` is the first violating ``(x, t)``.
    """
    x = spec.grid.nodes
    t = _times(spec, n_time_samples)
    a = _on(spec.a_expr, x, t)
    sigma = np.broadcast_to(evaluate(spec.sigma_expr, x=x, t=0.0), x.shape)
    bad = (a < sigma[:, None] - tol) | (sigma[:, None] < -tol)
    if not bad.any():
        return True, None
    i, k = np.argwhere(bad)[0]
    return False, (float(x[i]), float(t[k]))


def find_lambda1(spec, n_time_samples=11, dt_fd=None, zero_tol=ZERO_TOL,
                 slack=FEASIBILITY_TOL):
    """Smallest sampled ``lambda1`` with ``lambda1 a - a_t >= 0``, or None if infeasible.

    ``a_t`` is a centred difference with step ``dt_fd``.  Where ``a`` vanishes
    the condition forces ``a_t <= 0``.  The result is floored at 1e-9.
    """
    if dt_fd is None:
        dt_fd = 1e-5 * max(1.0, spec.T)
    if not dt_fd > 0:
        raise ValueError("dt_fd must be positive")
    x = spec.grid.nodes
    t = _times(spec, n_time_samples)
    a = _on(spec.a_expr, x, t)
    at = (_on(spec.a_expr, x, t + dt_fd) - _on(spec.a_expr, x, t - dt_fd)) / (2 * dt_fd)
    zero = a <= zero_tol
    if np.any(at[zero] > slack):
        return None
    pos = ~zero
    sup = float(np.max(at[pos] / a[pos])) if pos.any() else -math.inf
    return max(LAMBDA1_FLOOR, sup)


@dataclass(frozen=True)
class DriftBound:
    C_est: float
    stable: bool
    zero_set_ok: bool
    C_refined: float


def _drift_constant(spec, n_time_samples, zero_tol, slack):
    x = spec.grid.nodes
    t = _times(spec, n_time_samples)
    b = np.abs(_on(spec.b_expr, x, t))
    sigma = np.broadcast_to(evaluate(spec.sigma_expr, x=x, t=0.0), x.shape)
    zero = sigma <= zero_tol
    zero_ok = not np.any(b[zero] > slack)
    pos = ~zero
    if pos.any():
        c = float(np.max(b[pos] / np.sqrt(sigma[pos, None])))
    else:
        c = 0.0
    return c, zero_ok


def check_drift_bound(spec, n_time_samples=11, zero_tol=ZERO_TOL, slack=FEASIBILITY_TOL):
    """Estimate ``C`` in ``|b| <= C sqrt(sigma)`` and whether it survives refinement.

    ``C_est`` is the sampled maximum of ``|b| / sqrt(sigma)`` over nodes with
    ``sigma > 0``.  ``stable`` requires the estimate on a 4x finer grid to
    agree within 10% and ``|b| <= 1e-9`` wherever ``sigma`` vanishes.
    """
    c, zero_ok = _drift_constant(spec, n_time_samples, zero_tol, slack)
    c_fine, zero_ok_fine = _drift_constant(spec.with_cells(4 * spec.grid.n_cells),
                                           n_time_samples, zero_tol, slack)
    if c == 0.0:
        close = c_fine == 0.0
    else:
        close = abs(c_fine - c) < DRIFT_STABILITY_RTOL * c
    return DriftBound(c, bool(close and zero_ok and zero_ok_fine), bool(zero_ok), c_fine)


def check_boundary_nondegeneracy(spec, zero_tol=ZERO_TOL):
    """``sigma > 0`` at both end points."""
    ends = np.array([spec.grid.x_lo, spec.grid.x_hi])
    sigma = np.broadcast_to(evaluate(spec.sigma_expr, x=ends, t=0.0), (2,))
    return bool(np.all(sigma > zero_tol))


def check_nonlinearity(spec, M_bound, n_u=41, n_time_samples=11):
    """Largest sampled ``|df/du|`` on the box ``|u| <= M_bound``.

    Raises :class:`HypothesisError` if ``f`` or its derivative is not finite there.
    """
    if spec.f_expr is None:
        return 0.0
    x = spec.grid.nodes
    t = _times(spec, n_time_samples)
    u = np.linspace(-M_bound, M_bound, n_u)
    X, Tm, U = np.meshgrid(x, t, u, indexing="ij")
    eps = 1e-6 * (1.0 + np.abs(U))
    try:
        evaluate(spec.f_expr, x=X, t=Tm, u=U)
        d = (evaluate(spec.f_expr, x=X, t=Tm, u=U + eps)
             - evaluate(spec.f_expr, x=X, t=Tm, u=U - eps)) / (2 * eps)
    except ExprError as err:
        raise HypothesisError(f"nonlinearity is not continuous on |u| <= {M_bound}: {err}") from err
    if not np.all(np.isfinite(d)):
        raise HypothesisError(f"df/du is not finite on |u| <= {M_bound}")
    return float(np.max(np.abs(d)))


@dataclass
class AssumptionReport:
    ellipticity_ok: bool
    lambda1: float | None
    drift_C: float | None
    drift_stable: bool
    boundary_nondegenerate: bool
    boundary_required: bool
    details: list = field(default_factory=list)

    @property
    def ok(self):
        return (self.ellipticity_ok and self.lambda1 is not None and self.drift_stable
                and (self.boundary_nondegenerate or not self.boundary_required))

    def to_dict(self):
        out = asdict(self)
        out["ok"] = self.ok
        out["details"] = [{"location": loc, "message": msg} for loc, msg in self.details]
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def check_assumptions(spec, n_time_samples=11, dt_fd=None, zero_tol=ZERO_TOL,
                      slack=FEASIBILITY_TOL):
    """Run every check and collect the findings."""
    details = []
    ell_ok, witness = check_ellipticity(spec, n_time_samples, zero_tol)
    if not ell_ok:
        details.append((f"x={witness[0]!r}, t={witness[1]!r}", "a < sigma or sigma < 0"))
    lam1 = find_lambda1(spec, n_time_samples, dt_fd, zero_tol, slack)
    if lam1 is None:
        details.append(("degenerate set", "a vanishes while a_t > 0: no finite lambda1"))
    drift = check_drift_bound(spec, n_time_samples, zero_tol, slack)
    if not drift.zero_set_ok:
        details.append(("sigma = 0 set", "drift does not vanish where sigma does"))
    if not drift.stable:
        details.append(("grid refinement",
                        f"drift constant moves from {drift.C_est:.6g} to {drift.C_refined:.6g} "
                        "under 4x refinement"))
    robin = spec.bc is BoundaryCondition.ROBIN
    bnd = check_boundary_nondegeneracy(spec, zero_tol)
    if robin and not bnd:
        details.append(("boundary", "Robin data needs sigma > 0 at the boundary"))
    return AssumptionReport(ell_ok, lam1, drift.C_est, drift.stable, bnd, robin, details)
