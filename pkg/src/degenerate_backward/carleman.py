"""Weight ``phi(t) = exp(lambda t)``, stability-rate formulas and a discrete
evaluation of the weighted (Carleman-type) energy inequality.

The inequality being checked is

    int_Q (|u_t|^2 / (s phi) + s lambda^2 phi |u|^2) e^{2 s phi}
        <= C [ int_Q |F|^2 e^{2 s phi}
               + (s lambda phi(T) |u(T)|^2 + |u(T)|_{H1}^2) e^{2 s phi(T)}
               + (s lambda |u(0)|^2 + |u(0)|_{H1}^2) e^{2 s}
               (+ int_0^T lambda |u|^2_{boundary} e^{2 s phi} for Robin data) ]

Since ``C`` is not computable, only the ratio LHS/RHS is examined.  The
weights overflow doubles quickly (``e^{2 s e^{lambda T}}``), so every term is
stored divided by ``e^{2 s phi(T)}``; that factor is kept as ``log_scale``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import evaluate
from .problem_model import h1_norm, l2_norm

__all__ = [
    "CarlemanParams", "CarlemanSides", "RateConstants", "RatioReport",
    "phi", "mu", "theta_exponent", "optimal_s", "holder_bound",
    "log_rate_s", "log_rate_bound", "rate_constants", "carleman_sides",
    "verify_inequality", "gradient_term", "write_ratio_table",
]


@dataclass(frozen=True)
class CarlemanParams:
    lam: float
    s: float

    def __post_init__(self):
        if not (self.lam > 0 and self.s > 0):
            raise ValueError(f"lambda and s must be positive, got lambda={self.lam}, s={self.s}")


def phi(t, lam):
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return math.exp(lam * t)


def mu(t0, lam):
    """``phi(t0) - 1``."""
    if t0 < 0:
        raise ValueError(f"t0 must be non-negative, got {t0}")
    return math.expm1(lam * t0) if lam > 0 else phi(t0, lam) - 1


def theta_exponent(t0, T, lam):
    """Hölder exponent ``mu(t0) / (3 phi(T) + mu(t0))``, in ``[0, 1)``."""
    if t0 < 0 or t0 >= T:
        raise ValueError(f"need 0 <= t0 < T, got t0={t0}, T={T}")
    m = mu(t0, lam)
    return m / (3.0 * phi(T, lam) + m)


def optimal_s(M, D0, t0, T, lam):
    """Weight parameter balancing ``D0^2 e^{3 s phi(T)}`` against ``M^2 e^{-s mu(t0)}``.

    Zero when ``M <= D0``.
    """
    if not (M > 0 and D0 > 0):
        raise ValueError(f"M and D0 must be positive, got M={M}, D0={D0}")
    if M <= D0:
        return 0.0
    return 2.0 / (3.0 * phi(T, lam) + mu(t0, lam)) * math.log(M / D0)


def holder_bound(D0, M, t0, T, lam, C=1.0):
    """``C (M^{1-theta} D0^theta + D0)``: the Hölder bound on ``|u(t0)|_{L2}``."""
    if not (D0 > 0 and M > 0 and C > 0):
        raise ValueError("D0, M and C must be positive")
    th = theta_exponent(t0, T, lam)
    return C * (M ** (1.0 - th) * D0 ** th + D0)


def _check_log_args(D, alpha):
    if not 0 < D < 1:
        raise ValueError(f"need 0 < D < 1 (rescale the data), got D={D}")
    if not 0 < alpha < 1:
        raise ValueError(f"need 0 < alpha < 1, got alpha={alpha}")


def log_rate_s(D, alpha):
    """``(ln(1/D))^alpha``."""
    _check_log_args(D, alpha)
    return (-math.log(D)) ** alpha


def log_rate_bound(D, alpha, C=1.0):
    """``C (ln(1/D))^{-alpha}``; ``inf`` once it exceeds the double range."""
    _check_log_args(D, alpha)
    if not C > 0:
        raise ValueError("C must be positive")
    ell = -math.log(D)
    if ell == 0.0:
        return math.inf
    log_val = math.log(C) - alpha * math.log(ell)
    return math.exp(log_val) if log_val < 709.0 else math.inf


@dataclass(frozen=True)
class RateConstants:
    t0: float
    T: float
    lam: float
    phi_T: float
    mu_t0: float
    theta: float
    s_star: float


def rate_constants(t0, T, lam, M=None, D0=None):
    s_star = optimal_s(M, D0, t0, T, lam) if M is not None and D0 is not None else 0.0
    return RateConstants(t0, T, lam, phi(T, lam), mu(t0, lam),
                         theta_exponent(t0, T, lam), s_star)


@dataclass(frozen=True)
class CarlemanSides:
    """Discrete terms of the weighted inequality, all divided by ``exp(log_scale)``."""

    lhs_time_term: float
    lhs_zero_order: float
    rhs_source: float
    rhs_terminal: float
    rhs_initial: float
    rhs_boundary: float
    ratio: float
    log_scale: float
    s: float = 0.0

    @property
    def lhs_total(self):
        return self.lhs_time_term + self.lhs_zero_order

    @property
    def rhs_total(self):
        return self.rhs_source + self.rhs_terminal + self.rhs_initial + self.rhs_boundary


def _trap(n):
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def _check_pair(series, F_series):
    if series.values.shape != F_series.values.shape or series.grid != F_series.grid:
        raise ValueError("solution and source series must share grid and time levels")
    if not np.allclose(series.times, F_series.times, rtol=0, atol=1e-12):
        raise ValueError("solution and source series must share time levels")
    if series.n_steps < 2:
        raise ValueError("need at least 3 time levels")


def carleman_sides(series, F_series, params, robin=False):
    """Evaluate both sides of the weighted inequality by trapezoid quadrature.

    ``u_t`` uses centred differences inside and one-sided second-order
    differences at the two end levels.  With ``robin=True`` the boundary
    integral ``int lambda (u(x_lo)^2 + u(x_hi)^2) e^{2 s phi} dt`` joins the
    right-hand side.
    """
    _check_pair(series, F_series)
    s, lam = params.s, params.lam
    u = series.values
    t = series.times
    h, dt = series.grid.h, series.dt
    ph = np.exp(lam * t)
    log_w = 2 * s * ph
    shift = float(log_w[-1])
    w = np.exp(log_w - shift)
    tw = _trap(len(t)) * dt * w
    xw = _trap(series.grid.size) * h

    ut = np.gradient(u, dt, axis=0, edge_order=2)
    lhs_time = float(np.sum(tw / (s * ph) * (ut ** 2 @ xw)))
    lhs_zero = float(np.sum(tw * s * lam ** 2 * ph * (u ** 2 @ xw)))
    rhs_source = float(np.sum(tw * (F_series.values ** 2 @ xw)))

    last, first = series.frame(series.n_steps), series.frame(0)
    rhs_term = s * lam * ph[-1] * l2_norm(last) ** 2 + h1_norm(last) ** 2
    rhs_init = (s * lam * l2_norm(first) ** 2 + h1_norm(first) ** 2) * float(w[0])
    rhs_bdry = float(np.sum(tw * lam * (u[:, 0] ** 2 + u[:, -1] ** 2))) if robin else 0.0

    lhs = lhs_time + lhs_zero
    rhs = rhs_source + rhs_term + rhs_init + rhs_bdry
    if rhs > 0:
        ratio = float(lhs / rhs)
    else:
        ratio = 0.0 if lhs == 0 else math.inf
    return CarlemanSides(lhs_time, lhs_zero, rhs_source, float(rhs_term), float(rhs_init),
                         rhs_bdry, ratio, shift, s)


def gradient_term(series, a_expr, params, C0, dt_fd=1e-6):
    """Optional diagnostic: ``int (lambda a - C0 a_t) |u_x|^2 e^{2 s phi}``, same scaling.

    ``a`` is taken at cell midpoints, ``u_x`` by forward differences, ``a_t``
    by a centred difference with step ``dt_fd``.
    """
    s, lam = params.s, params.lam
    t = series.times
    xm = 0.5 * (series.grid.nodes[:-1] + series.grid.nodes[1:])
    ux = np.diff(series.values, axis=1) / series.grid.h
    ph = np.exp(lam * t)
    log_w = 2 * s * ph
    w = np.exp(log_w - log_w[-1])
    tw = _trap(len(t)) * series.dt * w
    total = 0.0
    for k, tk in enumerate(t):
        a = np.broadcast_to(evaluate(a_expr, x=xm, t=tk), xm.shape)
        at = (evaluate(a_expr, x=xm, t=tk + dt_fd) - evaluate(a_expr, x=xm, t=tk - dt_fd)) / (2 * dt_fd)
        total += tw[k] * float(np.sum((lam * a - C0 * at) * ux[k] ** 2) * series.grid.h)
    return total


@dataclass(frozen=True)
class RatioReport:
    s_grid: tuple
    sides: tuple = field(repr=False)
    max_ratio: float
    max_ratio_upper: float
    argmax: int
    monotone_beyond_argmax: bool

    @property
    def ratios(self):
        return np.array([sd.ratio for sd in self.sides])


def verify_inequality(series, F_series, lam, s_grid, robin=False, rtol=1e-12):
    """Sweep ``s`` and summarise ``ratio(s)``.

    ``max_ratio_upper`` is the maximum over the upper half of ``s_grid``;
    ``monotone_beyond_argmax`` says whether the ratio never increases (beyond
    relative slack ``rtol``) after its maximiser.
    """
    s_grid = [float(s) for s in s_grid]
    if any(s <= 0 for s in s_grid) or any(b <= a for a, b in zip(s_grid, s_grid[1:])):
        raise ValueError("s_grid must be positive and strictly increasing")
    _check_pair(series, F_series)
    sides = tuple(carleman_sides(series, F_series, CarlemanParams(lam, s), robin=robin)
                  for s in s_grid)
    r = np.array([sd.ratio for sd in sides])
    k = int(np.argmax(r))
    tail = r[k:]
    monotone = bool(np.all(tail[1:] <= tail[:-1] * (1 + rtol)))
    upper = r[len(r) // 2:]
    return RatioReport(tuple(s_grid), sides, float(r.max()), float(upper.max()), k, monotone)


def write_ratio_table(report, fp):
    """CSV ``s,lhs_time,lhs_zero,rhs_source,rhs_terminal,rhs_initial,ratio``."""
    own = isinstance(fp, str)
    f = open(fp, "w", newline="") if own else fp
    try:
        f.write("s,lhs_time,lhs_zero,rhs_source,rhs_terminal,rhs_initial,ratio\n")
        for sd in report.sides:
            row = (sd.s, sd.lhs_time_term, sd.lhs_zero_order, sd.rhs_source,
                   sd.rhs_terminal, sd.rhs_initial, sd.ratio)
            f.write(",".join(format(v, ".17g") for v in row) + "\n")
    finally:
        if own:
            f.close()
