"""
Checking the structural hypotheses
==================================

A handful of coefficient choices run through the sampling checks.
"""

# %%

from degenerate_backward import make_problem
from degenerate_backward.assumptions import check_assumptions, check_drift_bound

cases = {
    "x(1-x), time independent": make_problem(a="x*(1-x)"),
    "exp(2t) x(1-x)": make_problem(a="exp(2*t)*x*(1-x)"),
    "a = x, b = 1": make_problem(a="x", b="1", sigma="x"),
    "Robin, |x-0.5|^1.5": make_problem(a="abs(x-0.5)^1.5", bc="robin", r="1"),
}
for name, spec in cases.items():
    rep = check_assumptions(spec)
    print(f"{name:28s} ok={rep.ok!s:5s} lambda1={rep.lambda1} drift C={rep.drift_C:.4g}")

# %%
# The drift constant for ``b = 1`` against ``sigma = x`` keeps doubling
# under refinement because ``1/sqrt(x)`` is unbounded near 0.

for n in (100, 400, 1600):
    d = check_drift_bound(make_problem(a="x", b="1", sigma="x", n_cells=n))
    print(f"n={n:5d}  C={d.C_est:.3f}  refined={d.C_refined:.3f}")
