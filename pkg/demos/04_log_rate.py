"""
Logarithmic stability at the initial time
=========================================

Recovering the initial state is only logarithmically stable.  Here the data
size combines terminal perturbations and their first two time derivatives,
and every error is compared with a calibrated ``C (ln 1/D)^(-alpha)``
envelope on the heat benchmark.
"""

# %%

from degenerate_backward import make_problem
from degenerate_backward.experiments import log_rate_experiment

spec = make_problem(n_cells=200, T=1.0)
rep = log_rate_experiment(spec, "sin(3.14159265*x)", [1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
                          seeds=[42], dt=1e-3, alpha=0.9)
for p, env in zip(rep.points, rep.details["envelope"]):
    print(f"delta={p.delta:.0e}  D={p.D:.3e}  error={p.error:.3e}  envelope={env:.3e}")
print("passed:", rep.passed)
