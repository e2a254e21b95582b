"""Backward reconstruction: recover ``u(., t0)`` from (noisy) ``u(., T)``.

The estimate minimises ``|A v - d|^2 + alpha |v|^2`` in the trapezoidal L2
inner product, where ``A`` is the discrete forward map from ``t0`` to ``T``
with F = 0 and ``d`` is the data with the source response removed.  The
normal equations ``(A* A + alpha I) v = A* d`` are solved by conjugate
gradients with ``A* = W^{-1} A^T W`` (``W`` the quadrature weights), so each
iteration costs one forward and one transposed sweep.

Noise is reproducible: it is drawn from numpy's Philox-4x64 counter-based
generator keyed by ``numpy.random.SeedSequence(seed)``, using
``Generator.standard_normal``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pde_solver import NumericalError, Propagator, Scheme
from .problem_model import GridFunction, l2_norm

__all__ = [
    "NoiseSpec", "ReconstructionResult", "AdjointCheckError", "ForwardMap",
    "apply_forward_map", "add_noise", "noise_direction", "reconstruct_tikhonov",
    "choose_alpha", "ALPHA_FLOOR",
]

ALPHA_FLOOR = 1e-14
ADJOINT_GATE_TOL = 1e-8


class AdjointCheckError(NumericalError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    delta_rel: float
    seed: int = 42

    def __post_init__(self):
        if not self.delta_rel >= 0:
            raise ValueError(f"delta_rel must be non-negative, got {self.delta_rel}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class ReconstructionResult:
    estimate: GridFunction
    cg_iterations: int
    final_residual: float
    alpha_reg: float
    data_misfit: float
    converged: bool
    objective_history: tuple = field(default=(), repr=False)


class ForwardMap:
    """Affine map ``v = u(t0) -> u(T)`` split into linear part and source response."""

    def __init__(self, spec, t0, dt, scheme=Scheme.IMPLICIT_EULER):
        if spec.is_semilinear:
            raise ValueError("the forward map is only linear for problems without f")
        self.spec = spec
        self.grid = spec.grid
        self.t0 = float(t0)
        self.prop = Propagator(spec, t0, spec.T, dt, scheme)
        w = np.full(self.grid.size, self.grid.h)
        w[0] = w[-1] = 0.5 * self.grid.h
        self.weights = w
        self._offset = None

    @property
    def offset(self):
        """Terminal state produced by the source alone (zero initial state)."""
        if self._offset is None:
            self._offset = self.prop.march(np.zeros(self.grid.size), keep=False)
        return self._offset

    def __call__(self, v):
        return self.prop.march(v, with_source=True, keep=False)

    def linear(self, v):
        return self.prop.apply(v)

    def transpose(self, w):
        return self.prop.apply_transpose(w)

    def adjoint(self, w):
        """Adjoint in the weighted inner product: ``W^{-1} A^T W``."""
        return self.prop.apply_transpose(self.weights * w) / self.weights

    def inner(self, a, b):
        return float(np.sum(self.weights * a * b))

    def check_adjoint(self, probes=3, seed=0):
        """Worst relative defect of ``<Av, w> = <v, A^T w>`` over random probes."""
        rng = np.random.Generator(np.random.Philox(seed))
        worst = 0.0
        for _ in range(probes):
            v = rng.standard_normal(self.grid.size)
            w = rng.standard_normal(self.grid.size)
            defect = abs(self.linear(v) @ w - v @ self.transpose(w))
            worst = max(worst, defect / (np.linalg.norm(v) * np.linalg.norm(w)))
        return worst


def apply_forward_map(spec, v, t0, dt, scheme=Scheme.IMPLICIT_EULER, linear=False):
    """Terminal frame of the forward solve from ``t0`` to ``T`` started at ``v``.

    With ``linear=True`` the source is dropped, giving the linearised map.
    """
    fmap = ForwardMap(spec, t0, dt, scheme)
    values = v.values if isinstance(v, GridFunction) else np.asarray(v, dtype=float)
    return GridFunction(spec.grid, fmap.linear(values) if linear else fmap(values))


def noise_direction(size, seed):
    """Standard-normal vector of length ``size`` from Philox keyed by ``seed``."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    return gen.standard_normal(size)


def add_noise(d, noise):
    """``d + eta`` with ``|eta|_{L2} = delta_rel |d|_{L2}`` (``delta_rel`` if ``d = 0``)."""
    if noise.delta_rel == 0:
        return d
    eta = noise_direction(d.grid.size, noise.seed)
    eta_gf = GridFunction(d.grid, eta)
    ref = l2_norm(d)
    target = noise.delta_rel * (ref if ref > 0 else 1.0)
    return GridFunction(d.grid, d.values + eta * (target / l2_norm(eta_gf)))


def choose_alpha(delta_rel, data_norm):
    """A priori rule ``alpha = max(1e-14, (delta_rel * data_norm)^2)``."""
    if delta_rel < 0 or data_norm < 0:
        raise ValueError("delta_rel and data_norm must be non-negative")
    return max(ALPHA_FLOOR, (delta_rel * data_norm) ** 2)


def reconstruct_tikhonov(spec, data_T, t0, dt, alpha_reg, cg_tol=1e-10, max_iter=500,
                         scheme=Scheme.IMPLICIT_EULER, forward_map=None):
    """Tikhonov estimate of ``u(., t0)`` from terminal data by CG on the normal equations.

    Stops when the normal-equation residual, in the weighted L2 norm, drops
    below ``cg_tol * |A* d|`` or after ``max_iter`` iterations (then
    ``converged`` is False).  Refuses to run if the discrete adjoint identity
    fails at 1e-8 on three random probes.
    """
    if not alpha_reg > 0 or not cg_tol > 0:
        raise ValueError("alpha_reg and cg_tol must be positive")
    if data_T.grid != spec.grid:
        raise ValueError("data grid does not match the problem grid")
    fmap = forward_map or ForwardMap(spec, t0, dt, scheme)
    defect = fmap.check_adjoint()
    if defect > ADJOINT_GATE_TOL:
        raise AdjointCheckError(f"adjoint identity defect {defect:.3e} exceeds {ADJOINT_GATE_TOL:g}")

    ip = fmap.inner
    d = data_T.values - fmap.offset

    def normal(v):
        return fmap.adjoint(fmap.linear(v)) + alpha_reg * v

    b = fmap.adjoint(d)
    b_norm = np.sqrt(ip(b, b))
    x = np.zeros_like(b)
    history = [ip(d, d)]
    iters = 0
    rel = 0.0
    if b_norm > 0:
        Nx = np.zeros_like(b)
        r = b.copy()
        while iters < max_iter:
            p = r.copy()
            rr = ip(r, r)
            while iters < max_iter and np.sqrt(rr) > cg_tol * b_norm:
                q = normal(p)
                step = rr / ip(p, q)
                x = x + step * p
                Nx = Nx + step * q
                r = r - step * q
                rr_new = ip(r, r)
                p = r + (rr_new / rr) * p
                rr = rr_new
                iters += 1
                history.append(ip(x, Nx) - 2 * ip(x, b) + ip(d, d))
            # guard against drift of the recursive residual
            Nx = normal(x)
            r = b - Nx
            rel = np.sqrt(ip(r, r)) / b_norm
            if rel <= cg_tol:
                break
    misfit_vec = fmap.linear(x) - d
    return ReconstructionResult(
        estimate=GridFunction(spec.grid, x), cg_iterations=iters,
        final_residual=float(rel), alpha_reg=float(alpha_reg),
        data_misfit=float(np.sqrt(ip(misfit_vec, misfit_vec))),
        converged=bool(rel <= cg_tol), objective_history=tuple(history))
