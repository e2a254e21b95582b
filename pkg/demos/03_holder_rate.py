"""
Hölder-type stability for an interior time
==========================================

Reconstruct ``u(., 0.5)`` from noisy terminal data of the degenerate
problem ``a = x(1-x)`` and fit the error against the data size ``D`` on a
log-log scale.  The fitted slope should not fall below the theoretical
exponent.
"""

# %%

from degenerate_backward import make_problem
from degenerate_backward.experiments import holder_rate_experiment

spec = make_problem(n_cells=200, T=1.0, a="x*(1-x)")
rep = holder_rate_experiment(spec, 0.5, "sin(3.14159265*x)",
                             [1e-4, 3e-4, 1e-3, 3e-3, 1e-2], seeds=[42], dt=1e-3)

for p in rep.points:
    print(f"delta={p.delta:.0e}  D={p.D:.3e}  error={p.error:.3e}  s*={p.s:.3f}")
print(f"slope {rep.fitted_slope:.4f} vs theory {rep.theta_theory:.6f}; passed={rep.passed}")
print("noiseless relative error:", rep.details["clean_relative_error"])
