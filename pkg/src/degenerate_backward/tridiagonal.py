"""Thomas elimination for tridiagonal systems.

The factorisation and the substitution sweeps are split so that a matrix
reused across many time steps is eliminated once.  Inner loops are compiled
with numba.
"""

from dataclasses import dataclass

import numba
import numpy as np

__all__ = ["TridiagonalSystem", "SingularPivotError", "solve_tridiagonal",
           "ThomasFactor"]

PIVOT_FLOOR = 1e-300


class SingularPivotError(ArithmeticError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"singular pivot (|pivot| < {PIVOT_FLOOR:g}) at row {row}")


@dataclass(frozen=True, eq=False)
class TridiagonalSystem:
    """Matrix with ``sub`` (m-1), ``diag`` (m) and ``sup`` (m-1) diagonals."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        m = len(self.diag)
        if len(self.sub) != m - 1 or len(self.sup) != m - 1:
            raise ValueError("off-diagonals must have length len(diag) - 1")

    @property
    def size(self):
        return len(self.diag)

    def matvec(self, v):
        out = self.diag * v
        out[:-1] += self.sup * v[1:]
        out[1:] += self.sub * v[:-1]
        return out

    def transpose(self):
        return TridiagonalSystem(self.sup, self.diag, self.sub)

    def to_dense(self):
        return np.diag(self.diag) + np.diag(self.sup, 1) + np.diag(self.sub, -1)

    def inf_norm(self):
        row = np.abs(self.diag).copy()
        row[:-1] += np.abs(self.sup)
        row[1:] += np.abs(self.sub)
        return float(row.max())


@numba.njit(cache=True)
def _factor(sub, diag, sup, cprime, pivots):
    m = diag.shape[0]
    piv = diag[0]
    if abs(piv) < PIVOT_FLOOR:
        return 0
    pivots[0] = piv
    for i in range(m - 1):
        cprime[i] = sup[i] / piv
        piv = diag[i + 1] - sub[i] * cprime[i]
        if abs(piv) < PIVOT_FLOOR:
            return i + 1
        pivots[i + 1] = piv
    return -1


@numba.njit(cache=True)
def _substitute(sub, cprime, pivots, rhs, out):
    m = rhs.shape[0]
    acc = rhs[0] / pivots[0]
    out[0] = acc
    for i in range(1, m):
        acc = (rhs[i] - sub[i - 1] * acc) / pivots[i]
        out[i] = acc
    for i in range(m - 2, -1, -1):
        out[i] -= cprime[i] * out[i + 1]


class ThomasFactor:
    """Forward-elimination coefficients of a :class:`TridiagonalSystem`."""

    def __init__(self, system):
        m = system.size
        self.sub = np.ascontiguousarray(system.sub, dtype=float)
        self.cprime = np.zeros(max(m - 1, 0))
        self.pivots = np.zeros(m)
        bad = _factor(self.sub, np.ascontiguousarray(system.diag, dtype=float),
                      np.ascontiguousarray(system.sup, dtype=float),
                      self.cprime, self.pivots)
        if bad >= 0:
            raise SingularPivotError(bad)

    def solve(self, rhs):
        rhs = np.ascontiguousarray(rhs, dtype=float)
        if rhs.shape != self.pivots.shape:
            raise ValueError(f"rhs has shape {rhs.shape}, expected {self.pivots.shape}")
        out = np.empty_like(rhs)
        _substitute(self.sub, self.cprime, self.pivots, rhs, out)
        return out


def solve_tridiagonal(system, rhs):
    """Solve ``system @ x = rhs`` by Thomas elimination (no pivoting)."""
    return ThomasFactor(system).solve(rhs)
