"""Finite-difference solver for the degenerate parabolic problem.

Space: conservative three-point flux form with arithmetic-mean face
coefficients ``a_{i+1/2} = (a_i + a_{i+1})/2`` (a harmonic mean would shut the
flux off next to a degeneracy point), central differences for the drift.
Time: theta scheme, implicit Euler (``theta = 1``) or Crank-Nicolson
(``theta = 1/2``).

One step reads ``L_{k+1} u^{k+1} = R_k u^k + dt*Fbar`` with
``L = I - theta*dt*A`` and ``R = I + (1-theta)*dt*A``.  For Dirichlet data the
boundary rows of ``L`` are identity rows and those of ``R`` and ``Fbar`` are
zero, so every step is an explicit linear map and :func:`adjoint_solve` can
apply the exact transposes in reverse order.

Robin rows come from eliminating a ghost node with the mirrored face
coefficient, which is the half-cell balance
``(h/2) u_t = a_{1/2}(u_1 - u_0)/h - r u_0`` at ``x_lo`` (outward normal -1)
and its mirror image at ``x_hi``.  The drift there uses ``u_x = +-r u / a``,
so a nonzero drift on the boundary needs ``a > 0`` at that end.

Péclet guidance: keep ``|b| h / (2 a)`` below one where ``a > 0``; no
upwinding is applied.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .expr import free_vars, evaluate
from .problem_model import (BoundaryCondition, GridFunction, TimeSeriesField,
                            step_count)
from .tridiagonal import (SingularPivotError, ThomasFactor, TridiagonalSystem,
                          solve_tridiagonal)

__all__ = [
    "Scheme", "ForwardSolveResult", "NumericalError", "NewtonDivergenceError",
    "SingularPivotError", "TridiagonalSystem", "assemble_spatial_operator",
    "solve_tridiagonal", "forward_solve", "adjoint_solve",
    "semilinear_forward_solve", "Propagator",
]

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 25


class Scheme(enum.Enum):
    IMPLICIT_EULER = "implicit_euler"
    CRANK_NICOLSON = "crank_nicolson"

    @property
    def theta(self):
        return 1.0 if self is Scheme.IMPLICIT_EULER else 0.5


class NumericalError(ArithmeticError):
    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


class NewtonDivergenceError(NumericalError):
    pass


@dataclass(frozen=True)
class ForwardSolveResult:
    series: TimeSeriesField
    step_count: int
    max_newton_iters_used: int = 0

    @property
    def final(self):
        return self.series.frame(self.series.n_steps)


class _Coefficients:
    """Nodal samples of a, b, c, F; time-independent ones are sampled once."""

    def __init__(self, spec):
        self.spec = spec
        self.x = spec.grid.nodes
        self._static = {}
        for name in ("a", "b", "c", "F"):
            e = getattr(spec, f"{name}_expr")
            if "t" not in free_vars(e):
                self._static[name] = self._eval(e, 0.0)

    def _eval(self, e, t):
        return np.array(np.broadcast_to(evaluate(e, x=self.x, t=t), self.x.shape))

    def time_dependent(self, *names):
        return any(n not in self._static for n in names)

    def __call__(self, name, t):
        if name in self._static:
            return self._static[name]
        return self._eval(getattr(self.spec, f"{name}_expr"), t)

    def robin_r(self):
        return np.array(np.broadcast_to(
            evaluate(self.spec.r_expr, x=self.x[[0, -1]], t=0.0), (2,)))


def _assemble(spec, coeffs, t):
    h = spec.grid.h
    m = spec.grid.size
    a, b, c = coeffs("a", t), coeffs("b", t), coeffs("c", t)
    face = 0.5 * (a[:-1] + a[1:])
    sub = np.zeros(m - 1)
    diag = np.zeros(m)
    sup = np.zeros(m - 1)
    sub[:-1] = face[:-1] / h**2 - b[1:-1] / (2 * h)
    sup[1:] = face[1:] / h**2 + b[1:-1] / (2 * h)
    diag[1:-1] = -(face[:-1] + face[1:]) / h**2 + c[1:-1]
    if spec.bc is BoundaryCondition.ROBIN:
        r_lo, r_hi = coeffs.robin_r()
        diag[0] = -2 * face[0] / h**2 - 2 * r_lo / h + c[0]
        sup[0] = 2 * face[0] / h**2
        diag[-1] = -2 * face[-1] / h**2 - 2 * r_hi / h + c[-1]
        sub[-1] = 2 * face[-1] / h**2
        for idx, sign, r_end in ((0, 1.0, r_lo), (-1, -1.0, r_hi)):
            if b[idx] != 0.0:
                if not a[idx] > 0:
                    raise NumericalError("Robin boundary with drift needs a > 0 at the boundary")
                diag[idx] += sign * b[idx] * r_end / a[idx]
    return TridiagonalSystem(sub, diag, sup)


def assemble_spatial_operator(spec, t):
    """Tridiagonal matrix of ``u -> (a u_x)_x + b u_x + c u`` at time ``t``.

    Dirichlet boundary rows are returned as zero rows; the time stepper turns
    them into identity rows that pin ``u = 0``.
    """
    return _assemble(spec, _Coefficients(spec), t)


def _step_matrices(A, theta, dt, dirichlet):
    m = A.size
    eye = np.ones(m)
    L = TridiagonalSystem(-theta * dt * A.sub, eye - theta * dt * A.diag,
                          -theta * dt * A.sup)
    R = TridiagonalSystem((1 - theta) * dt * A.sub, eye + (1 - theta) * dt * A.diag,
                          (1 - theta) * dt * A.sup)
    if dirichlet:
        L.diag[[0, -1]] = 1.0
        L.sup[0] = L.sub[-1] = 0.0
        R.diag[[0, -1]] = 0.0
        R.sup[0] = R.sub[-1] = 0.0
    return L, R


class Propagator:
    """Discrete linear time-marching map between two time levels.

    Step matrices and their Thomas factors are built lazily and reused across
    calls, which is what makes repeated forward/adjoint sweeps inside CG cheap.
    """

    def __init__(self, spec, t_start, t_end, dt, scheme=Scheme.IMPLICIT_EULER):
        if spec.is_semilinear:
            raise ValueError("Propagator is linear; use semilinear_forward_solve")
        if not (0.0 <= t_start < t_end <= spec.T * (1 + 1e-12)):
            raise ValueError(f"need 0 <= t_start < t_end <= T, got [{t_start}, {t_end}] with T={spec.T}")
        self.spec = spec
        self.scheme = Scheme(scheme)
        self.t_start, self.t_end, self.dt = float(t_start), float(t_end), float(dt)
        self.n_steps = step_count(t_start, t_end, dt)
        self.dirichlet = spec.bc is BoundaryCondition.DIRICHLET
        self.coeffs = _Coefficients(spec)
        self._static = not self.coeffs.time_dependent("a", "b", "c")
        self._ops = {}
        self._fwd = {}
        self._adj = {}

    def time(self, k):
        return self.t_start + k * self.dt

    def _operator(self, k):
        key = 0 if self._static else k
        if key not in self._ops:
            self._ops[key] = _assemble(self.spec, self.coeffs, self.time(k))
        return self._ops[key]

    def _matrices(self, k):
        """(L_{k+1}, R_k) for step k -> k+1."""
        if self._static:
            k = 0
        if k not in self._fwd:
            theta = self.scheme.theta
            L, _ = _step_matrices(self._operator(k + 1), theta, self.dt, self.dirichlet)
            _, R = _step_matrices(self._operator(k), theta, self.dt, self.dirichlet)
            self._fwd[k] = (L, ThomasFactor(L), R)
        return self._fwd[k]

    def _transposed(self, k):
        if self._static:
            k = 0
        if k not in self._adj:
            L, _, R = self._matrices(k)
            self._adj[k] = (ThomasFactor(L.transpose()), R.transpose())
        return self._adj[k]

    def source(self, k):
        """dt * Fbar for step k -> k+1 with Dirichlet rows zeroed."""
        t0, t1 = self.time(k), self.time(k + 1)
        if self.scheme is Scheme.IMPLICIT_EULER:
            f = self.coeffs("F", t1)
        else:
            f = 0.5 * (self.coeffs("F", t0) + self.coeffs("F", t1))
        out = self.dt * np.array(f, dtype=float)
        if self.dirichlet:
            out[[0, -1]] = 0.0
        return out

    def pin(self, v):
        v = np.array(v, dtype=float)
        if self.dirichlet:
            v[[0, -1]] = 0.0
        return v

    def march(self, v0, with_source=True, keep=True):
        """Run all steps from ``v0``; returns the frame array (or last frame)."""
        u = self.pin(v0)
        frames = [u] if keep else None
        for k in range(self.n_steps):
            _, factor, R = self._matrices(k)
            rhs = R.matvec(u)
            if with_source:
                rhs += self.source(k)
            try:
                u = factor.solve(rhs)
            except SingularPivotError as err:
                raise NumericalError(str(err), step=k + 1) from err
            if not np.all(np.isfinite(u)):
                raise NumericalError("non-finite value in time march", step=k + 1)
            if keep:
                frames.append(u)
        return np.array(frames) if keep else u

    def march_transpose(self, wT, keep=True):
        """Apply the transposed steps in reverse order, from t_end to t_start."""
        w = np.array(wT, dtype=float)
        frames = [w] if keep else None
        for k in range(self.n_steps - 1, -1, -1):
            factor_t, Rt = self._transposed(k)
            w = Rt.matvec(factor_t.solve(w))
            if not np.all(np.isfinite(w)):
                raise NumericalError("non-finite value in adjoint march", step=k)
            if keep:
                frames.append(w)
        w = self.pin(w)
        if keep:
            frames[-1] = w
            return np.array(frames[::-1])
        return w

    def apply(self, v):
        """Linear part: terminal state from initial ``v`` with F = 0."""
        return self.march(v, with_source=False, keep=False)

    def apply_transpose(self, w):
        return self.march_transpose(w, keep=False)


def _values(v):
    return v.values if isinstance(v, GridFunction) else np.asarray(v, dtype=float)


def forward_solve(spec, u0, t_start, t_end, dt, scheme=Scheme.IMPLICIT_EULER):
    """March ``u0`` from ``t_start`` to ``t_end``.

    Dirichlet end values of ``u0`` are overwritten with zero.
    """
    prop = Propagator(spec.linear_part() if spec.is_semilinear else spec,
                      t_start, t_end, dt, scheme)
    frames = prop.march(_values(u0))
    series = TimeSeriesField(spec.grid, prop.t_start, prop.t_end, prop.dt, frames)
    return ForwardSolveResult(series, prop.n_steps, 0)


def adjoint_solve(spec, w_T, t_start, t_end, dt, scheme=Scheme.IMPLICIT_EULER):
    """Transpose of the discrete forward map; ``frames[0]`` is the result at t_start."""
    prop = Propagator(spec.linear_part() if spec.is_semilinear else spec,
                      t_start, t_end, dt, scheme)
    frames = prop.march_transpose(_values(w_T))
    series = TimeSeriesField(spec.grid, prop.t_start, prop.t_end, prop.dt, frames)
    return ForwardSolveResult(series, prop.n_steps, 0)


def _df_du(spec, x, t, u):
    eps = 1e-6 * (1.0 + np.abs(u))
    fp = evaluate(spec.f_expr, x=x, t=t, u=u + eps)
    fm = evaluate(spec.f_expr, x=x, t=t, u=u - eps)
    return (fp - fm) / (2 * eps)


def semilinear_forward_solve(spec, u0, t_start, t_end, dt):
    """Implicit Euler for ``u_t = Au + F + f(x, t, u)`` with Newton per step.

    Each step iterates with the tridiagonal Jacobian ``I - dt*A - dt*diag(f_u)``
    (``f_u`` by a centred difference in ``u``) until the update max-norm drops
    to 1e-10, at most 25 iterations.
    """
    if spec.f_expr is None:
        raise ValueError("semilinear_forward_solve needs a problem with f")
    prop = Propagator(spec.linear_part(), t_start, t_end, dt, Scheme.IMPLICIT_EULER)
    x = spec.grid.nodes
    interior = np.ones(spec.grid.size)
    if prop.dirichlet:
        interior[[0, -1]] = 0.0
    u = prop.pin(_values(u0))
    frames = [u]
    worst = 0
    for k in range(prop.n_steps):
        t1 = prop.time(k + 1)
        L, _, R = prop._matrices(k)
        base = R.matvec(u) + prop.source(k)
        v = u.copy()
        for it in range(1, NEWTON_MAX_ITER + 1):
            fv = np.broadcast_to(evaluate(spec.f_expr, x=x, t=t1, u=v), v.shape)
            residual = L.matvec(v) - dt * interior * fv - base
            jac = TridiagonalSystem(L.sub, L.diag - dt * interior * _df_du(spec, x, t1, v), L.sup)
            try:
                update = solve_tridiagonal(jac, -residual)
            except SingularPivotError as err:
                raise NumericalError(f"singular Newton Jacobian: {err}", step=k + 1) from err
            v = v + update
            if not np.all(np.isfinite(v)):
                raise NewtonDivergenceError("non-finite Newton iterate", step=k + 1)
            if np.max(np.abs(update)) <= NEWTON_TOL:
                break
        else:
            raise NewtonDivergenceError(
                f"Newton did not converge in {NEWTON_MAX_ITER} iterations", step=k + 1)
        worst = max(worst, it)
        u = v
        frames.append(u)
    series = TimeSeriesField(spec.grid, prop.t_start, prop.t_end, prop.dt, np.array(frames))
    return ForwardSolveResult(series, prop.n_steps, worst)
