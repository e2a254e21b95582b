"""Grids, grid functions, trajectories, norms and the problem instance.

Everything lives on a uniform node-centred grid of an interval
``(x_lo, x_hi)``; boundary nodes are stored so Dirichlet data is imposed by
pinning the end entries.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .expr import Expr, as_expr, evaluate, free_vars, ExprError

__all__ = [
    "SpatialGrid", "GridFunction", "TimeSeriesField", "BoundaryCondition",
    "ProblemSpec", "build_grid", "l2_norm", "h1_norm", "sample",
    "make_problem", "write_grid_function", "read_grid_function",
    "write_time_series", "step_count",
]


def _frozen(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    x_lo: float
    x_hi: float
    n_cells: int
    nodes: np.ndarray = field(repr=False)

    @property
    def h(self):
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def size(self):
        return self.n_cells + 1

    def refined(self, factor):
        return build_grid(self.x_lo, self.x_hi, self.n_cells * factor)

    def __eq__(self, other):
        return (isinstance(other, SpatialGrid) and self.x_lo == other.x_lo
                and self.x_hi == other.x_hi and self.n_cells == other.n_cells)

    def __hash__(self):
        return hash((self.x_lo, self.x_hi, self.n_cells))


def build_grid(x_lo, x_hi, n_cells):
    """Uniform grid with ``n_cells`` cells (``n_cells + 1`` nodes)."""
    x_lo, x_hi = float(x_lo), float(x_hi)
    if not x_lo < x_hi:
        raise ValueError(f"invalid range: x_lo={x_lo} must be below x_hi={x_hi}")
    if int(n_cells) != n_cells or n_cells < 2:
        raise ValueError(f"too few cells: need an integer n_cells >= 2, got {n_cells}")
    n_cells = int(n_cells)
    return SpatialGrid(x_lo, x_hi, n_cells, _frozen(np.linspace(x_lo, x_hi, n_cells + 1)))


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} nodal values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function has non-finite entries")
        object.__setattr__(self, "values", values)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _vals(other))

    def __mul__(self, alpha):
        return GridFunction(self.grid, self.values * float(alpha))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)


def _vals(v):
    return v.values if isinstance(v, GridFunction) else np.asarray(v, dtype=float)


@dataclass(frozen=True, eq=False)
class TimeSeriesField:
    """Trajectory on ``t_k = t_start + k*dt``; ``values[k]`` is frame ``k``."""

    grid: SpatialGrid
    t_start: float
    t_end: float
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        steps = step_count(self.t_start, self.t_end, self.dt)
        values = _frozen(self.values)
        if values.shape != (steps + 1, self.grid.size):
            raise ValueError(f"expected {(steps + 1, self.grid.size)} values, got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self):
        return self.values.shape[0] - 1

    @property
    def times(self):
        return self.t_start + self.dt * np.arange(self.n_steps + 1)

    @property
    def frames(self):
        return [GridFunction(self.grid, row) for row in self.values]

    def frame(self, k):
        return GridFunction(self.grid, self.values[k])

    def index_of(self, t):
        k = (t - self.t_start) / self.dt
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)) or not 0 <= round(k) <= self.n_steps:
            raise ValueError(f"t={t} is not a time level of this series")
        return int(round(k))

    def at(self, t):
        return self.frame(self.index_of(t))


def step_count(t_start, t_end, dt):
    """Number of steps of size ``dt`` covering ``[t_start, t_end]`` exactly."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    ratio = (t_end - t_start) / dt
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, k):
        raise ValueError(
            f"dt={dt} must divide t_end - t_start = {t_end - t_start} "
            "into a positive integer number of steps (tolerance 1e-9)")
    return int(k)


class BoundaryCondition(enum.Enum):
    DIRICHLET = "dirichlet"
    ROBIN = "robin"


_ALLOWED = {"a": {"x", "t"}, "b": {"x", "t"}, "c": {"x", "t"}, "F": {"x", "t"},
            "sigma": {"x"}, "r": {"x"}, "f": {"x", "t", "u"}}


@dataclass(frozen=True)
class ProblemSpec:
    """One-dimensional instance of ``u_t = (a u_x)_x + b u_x + c u + F (+ f(u))``.

    ``bc`` is homogeneous Dirichlet or the Robin condition ``a du/dn + r u = 0``.
    """

    grid: SpatialGrid
    T: float
    a_expr: Expr
    b_expr: Expr
    c_expr: Expr
    F_expr: Expr
    sigma_expr: Expr
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET
    r_expr: Expr | None = None
    f_expr: Expr | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        object.__setattr__(self, "bc", BoundaryCondition(self.bc))
        if self.bc is BoundaryCondition.ROBIN and self.r_expr is None:
            raise ValueError("Robin boundary condition requires r")
        for name in _ALLOWED:
            e = getattr(self, f"{name}_expr")
            if e is None:
                continue
            extra = free_vars(e) - _ALLOWED[name]
            if extra:
                raise ValueError(f"{name} may only depend on {sorted(_ALLOWED[name])}, "
                                 f"found {sorted(extra)}")

    @property
    def is_semilinear(self):
        return self.f_expr is not None

    def with_cells(self, n_cells):
        return replace(self, grid=build_grid(self.grid.x_lo, self.grid.x_hi, n_cells))

    def linear_part(self):
        return replace(self, f_expr=None)


def make_problem(x_lo=0.0, x_hi=1.0, n_cells=100, T=1.0, a="1", b="0", c="0",
                 F="0", sigma=None, bc="dirichlet", r=None, f=None):
    """Build a :class:`ProblemSpec` from expression strings.

    When ``sigma`` is omitted it defaults to ``a`` for time-independent ``a``
    and to ``0`` otherwise.
    """
    a_expr = as_expr(a)
    if sigma is None:
        sigma = a_expr if "t" not in free_vars(a_expr) else "0"
    return ProblemSpec(
        grid=build_grid(x_lo, x_hi, n_cells), T=float(T), a_expr=a_expr,
        b_expr=as_expr(b), c_expr=as_expr(c), F_expr=as_expr(F),
        sigma_expr=as_expr(sigma), bc=BoundaryCondition(bc),
        r_expr=None if r is None else as_expr(r),
        f_expr=None if f is None else as_expr(f))


def sample(e, grid, t=0.0):
    """Evaluate ``e`` at every node of ``grid`` at time ``t``."""
    e = as_expr(e)
    try:
        values = evaluate(e, x=grid.nodes, t=t)
    except ExprError as err:
        for i, xi in enumerate(grid.nodes):
            try:
                evaluate(e, x=xi, t=t)
            except ExprError:
                raise type(err)(f"{err} (node {i}, x={xi!r}, t={t!r})") from err
        raise
    return GridFunction(grid, np.broadcast_to(values, grid.nodes.shape))


def _trap_weights(n_nodes):
    w = np.ones(n_nodes)
    w[0] = w[-1] = 0.5
    return w


def l2_norm(v):
    """Trapezoidal L2 norm of a grid function."""
    vals = _vals(v)
    return float(np.sqrt(np.sum(_trap_weights(vals.size) * vals ** 2) * v.grid.h))


def h1_norm(v):
    """H1 norm: trapezoidal L2 part plus midpoint-rule forward-difference gradient."""
    h = v.grid.h
    dv = np.diff(v.values) / h
    return float(np.sqrt(l2_norm(v) ** 2 + np.sum(dv ** 2) * h))


def _fmt(x):
    return format(float(x), ".17g")


def write_grid_function(v, fp):
    """Write ``v`` as CSV with header ``x,value`` (17 significant digits)."""
    own = isinstance(fp, str)
    f = open(fp, "w", newline="") if own else fp
    try:
        f.write("x,value\n")
        for xi, vi in zip(v.grid.nodes, v.values):
            f.write(f"{_fmt(xi)},{_fmt(vi)}\n")
    finally:
        if own:
            f.close()


def read_grid_function(fp, grid=None):
    """Read a ``x,value`` CSV; the grid is rebuilt from the node column."""
    text = open(fp).read() if isinstance(fp, str) else fp.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["x", "value"]:
        raise ValueError("grid function CSV must start with header 'x,value'")
    data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
    xs, vals = data[:, 0], data[:, 1]
    if grid is None:
        grid = build_grid(xs[0], xs[-1], len(xs) - 1)
    if len(xs) != grid.size or not np.allclose(xs, grid.nodes, rtol=0, atol=1e-12 * (1 + abs(grid.x_hi))):
        raise ValueError("CSV nodes do not match the problem grid")
    return GridFunction(grid, vals)


def write_time_series(series, fp):
    """Write ``series`` as CSV with header ``t,x,value`` in time-major order."""
    own = isinstance(fp, str)
    f = open(fp, "w", newline="") if own else fp
    try:
        f.write("t,x,value\n")
        xs = [_fmt(x) for x in series.grid.nodes]
        for tk, row in zip(series.times, series.values):
            ts = _fmt(tk)
            for xi, vi in zip(xs, row):
                f.write(f"{ts},{xi},{_fmt(vi)}\n")
    finally:
        if own:
            f.close()
