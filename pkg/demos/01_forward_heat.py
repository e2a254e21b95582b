"""
Forward solves on the heat benchmark
====================================

Solve ``u_t = u_xx`` on (0, 1) with ``u(x, 0) = sin(pi x)`` and compare
against ``exp(-pi^2 t) sin(pi x)``.  Then halve ``h`` and ``dt`` to watch
the observed orders.
"""

# %%
# Baseline solve
# --------------

import math

import numpy as np

from degenerate_backward import Scheme, forward_solve, make_problem, sample

T = 0.1


def max_error(n, dt, scheme):
    spec = make_problem(n_cells=n, T=T)
    res = forward_solve(spec, sample("sin(3.14159265358979*x)", spec.grid), 0.0, T, dt, scheme)
    exact = math.exp(-math.pi ** 2 * T) * np.sin(math.pi * spec.grid.nodes)
    return np.abs(res.final.values - exact).max()


print("implicit Euler, n=200, dt=1e-4: max error %.3e" % max_error(200, 1e-4, Scheme.IMPLICIT_EULER))

# %%
# Spatial order
# -------------
# Crank-Nicolson with a tiny step hides the time error, so the ratio
# between successive errors should approach 4.

errs = [max_error(n, 1e-5, Scheme.CRANK_NICOLSON) for n in (25, 50, 100)]
print("h ratios:", [round(float(a / b), 4) for a, b in zip(errs, errs[1:])])

# %%
# Temporal order
# --------------
# A fine grid with implicit Euler: ratios near 2.

errs = [max_error(1000, dt, Scheme.IMPLICIT_EULER) for dt in (4e-3, 2e-3, 1e-3)]
print("dt ratios:", [round(float(a / b), 4) for a, b in zip(errs, errs[1:])])
