"""
Difference stability for a semilinear problem
=============================================

Two solutions of ``u_t = (x(1-x) u_x)_x - u^3`` that start a bump of
size ``eps`` apart: how fast does their gap at ``t0`` shrink with the gap
at ``T``?
"""

# %%

from degenerate_backward import make_problem
from degenerate_backward.experiments import semilinear_stability_experiment

spec = make_problem(n_cells=200, T=1.0, a="x*(1-x)", f="-u^3")
rep = semilinear_stability_experiment(spec, "sin(3.14159265*x)",
                                      [1e-4, 3e-4, 1e-3, 3e-3, 1e-2], t0=0.5, dt=1e-3,
                                      M_bound=2.0)
for p in rep.points:
    print(f"eps={p.delta:.0e}  D={p.D:.3e}  gap at t0={p.error:.3e}")
print(f"slope {rep.fitted_slope:.4f} vs theory {rep.theta_theory:.6f}; passed={rep.passed}")
