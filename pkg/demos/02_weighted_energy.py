"""
Weighted energy inequality on a degenerate profile
==================================================

For ``a = x(1-x)`` we march a smooth state forward and evaluate the
weighted energy ratio over a sweep of the large parameter ``s``.  The ratio
should stay bounded and settle as the grid is refined.
"""

# %%

import numpy as np

from degenerate_backward import TimeSeriesField, forward_solve, make_problem, sample
from degenerate_backward.carleman import verify_inequality

dt, lam = 1e-4, 5.0
for n in (100, 200):
    spec = make_problem(n_cells=n, T=1.0, a="x*(1-x)")
    series = forward_solve(spec, sample("sin(3.14159265*x)", spec.grid), 0.0, 1.0, dt).series
    zero = TimeSeriesField(spec.grid, 0.0, 1.0, dt, np.zeros_like(series.values))
    res = verify_inequality(series, zero, lam, range(1, 21))
    print(f"n={n}: max ratio {res.max_ratio:.4e} at s={res.s_grid[res.argmax]:g}, "
          f"non-increasing afterwards: {res.monotone_beyond_argmax}")

# %%
# The individual ratios for the finer grid:

for s, q in zip(res.s_grid, res.ratios):
    print(f"  s={s:5.1f}  ratio={q:.4e}")
