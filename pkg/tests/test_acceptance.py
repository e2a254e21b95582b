"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines, or execute the
file directly for a summary.
"""

import json
import math
import sys

import numpy as np
import pytest

from degenerate_backward.assumptions import (
    LAMBDA1_FLOOR, check_boundary_nondegeneracy, check_drift_bound, find_lambda1,
)
from degenerate_backward.carleman import (
    log_rate_s, mu, optimal_s, phi, theta_exponent, verify_inequality,
)
from degenerate_backward.cli import main
from degenerate_backward.experiments import (
    holder_rate_experiment, log_rate_experiment, semilinear_stability_experiment,
)
from degenerate_backward.pde_solver import Propagator, Scheme, forward_solve
from degenerate_backward.problem_model import TimeSeriesField, make_problem, sample

SIN = "sin(3.14159265*x)"
SIN_EXACT = "sin(3.14159265358979*x)"
DELTAS = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2]


def verdict(number, title, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}")
    assert ok, detail


def _heat_error(n, dt, scheme, T=0.1):
    spec = make_problem(n_cells=n, T=T)
    res = forward_solve(spec, sample(SIN_EXACT, spec.grid), 0.0, T, dt, scheme)
    exact = math.exp(-math.pi ** 2 * T) * np.sin(math.pi * spec.grid.nodes)
    return float(np.abs(res.final.values - exact).max())


def test_criterion_1_forward_oracle():
    err = _heat_error(200, 1e-4, Scheme.IMPLICIT_EULER)
    # spatial ratio with the time error suppressed (Crank-Nicolson, tiny dt)
    e_h = _heat_error(100, 1e-5, Scheme.CRANK_NICOLSON), _heat_error(200, 1e-5, Scheme.CRANK_NICOLSON)
    # temporal ratio with the space error suppressed
    e_t = _heat_error(1000, 2e-3, Scheme.IMPLICIT_EULER), _heat_error(1000, 1e-3, Scheme.IMPLICIT_EULER)
    rh, rt = e_h[0] / e_h[1], e_t[0] / e_t[1]
    ok = err <= 2e-3 and 3.5 <= rh <= 4.5 and 1.8 <= rt <= 2.2
    verdict(1, "forward solver vs separable heat solution", ok,
            f"max error {err:.3e} (<= 2e-3), h-ratio {rh:.4f} in [3.5,4.5], "
            f"dt-ratio {rt:.4f} in [1.8,2.2]")


def test_criterion_2_adjoint_identity():
    cases = {
        "non-degenerate Dirichlet": make_problem(n_cells=100, a="1+x", b="x", c="-1"),
        "degenerate Dirichlet": make_problem(n_cells=100, a="x*(1-x)"),
        "Robin r=1": make_problem(n_cells=100, a="1+x*(1-x)", b="x", bc="robin", r="1",
                                  sigma="1"),
    }
    rng = np.random.default_rng(2024)
    worst = {}
    for name, spec in cases.items():
        prop = Propagator(spec, 0.0, 1.0, 1e-2)
        w_ = 0.0
        for _ in range(10):
            v, w = rng.normal(size=(2, spec.grid.size))
            d = abs(prop.apply(v) @ w - v @ prop.apply_transpose(w))
            w_ = max(w_, d / (np.linalg.norm(v) * np.linalg.norm(w)))
        worst[name] = w_
    assert check_boundary_nondegeneracy(cases["Robin r=1"])
    ok = all(v <= 1e-10 for v in worst.values())
    verdict(2, "discrete adjoint identity", ok,
            ", ".join(f"{k}: {v:.2e}" for k, v in worst.items()) + " (<= 1e-10)")


def test_criterion_3_rate_formulas():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        T = rng.uniform(0.1, 3)
        t0, lam = rng.uniform(0.01, 0.99) * T, rng.uniform(0.1, 3)
        D0 = 10 ** rng.uniform(-8, 0)
        M = D0 * 10 ** rng.uniform(0.01, 6)
        s = optimal_s(M, D0, t0, T, lam)
        log_gap = (2 * math.log(D0) + 3 * s * phi(T, lam)) - (2 * math.log(M) - s * mu(t0, lam))
        worst = max(worst, abs(math.expm1(log_gap)))
    checks = {
        "theta(0)=0": theta_exponent(0.0, 1.0, 1.0) == 0.0,
        "theta(0.5,1,1)": abs(theta_exponent(0.5, 1, 1) - 0.0736884) <= 1e-6,
        "s*(M<=D0)=0": optimal_s(1.0, 2.0, 0.5, 1, 1) == 0.0 and optimal_s(2.0, 2.0, 0.5, 1, 1) == 0.0,
        "s* balances": worst <= 1e-9,
        "log_rate_s": abs(log_rate_s(math.exp(-10), 0.5) - 3.1622777) <= 1e-6,
    }
    verdict(3, "rate formulas", all(checks.values()),
            ", ".join(f"{k}={'ok' if v else 'BAD'}" for k, v in checks.items())
            + f", worst balance defect {worst:.1e}")


def _prop1_sweep(n):
    spec = make_problem(n_cells=n, T=1.0, a="x*(1-x)")
    series = forward_solve(spec, sample(SIN, spec.grid), 0.0, 1.0, 1e-4).series
    zero = TimeSeriesField(spec.grid, 0.0, 1.0, 1e-4, np.zeros_like(series.values))
    return verify_inequality(series, zero, 5.0, range(1, 21))


def test_criterion_4_carleman_ratio():
    r1, r2 = _prop1_sweep(100), _prop1_sweep(200)
    factor = r2.max_ratio / r1.max_ratio
    finite = bool(np.all(np.isfinite(r1.ratios)) and np.all(np.isfinite(r2.ratios)))
    ok = finite and 0.5 < factor < 2 and r1.monotone_beyond_argmax and r2.monotone_beyond_argmax
    verdict(4, "weighted energy inequality ratio", ok,
            f"max ratio {r1.max_ratio:.4e} (n=100) -> {r2.max_ratio:.4e} (n=200), factor "
            f"{factor:.3f}; argmax s={r1.s_grid[r1.argmax]:g}/{r2.s_grid[r2.argmax]:g}; "
            f"non-increasing beyond argmax: {r1.monotone_beyond_argmax}/{r2.monotone_beyond_argmax}")


def test_criterion_5_holder_rate():
    spec = make_problem(n_cells=200, T=1.0, a="x*(1-x)")
    r = holder_rate_experiment(spec, 0.5, SIN, DELTAS, seeds=[42], dt=1e-3, lam=1.0)
    clean = r.details["clean_relative_error"]
    ok = (abs(r.theta_theory - 0.0736884) <= 1e-6 and r.fitted_slope >= r.theta_theory - 0.02
          and clean <= 1e-2)
    verdict(5, "Hölder rate for 0 < t0 < T", ok,
            f"slope {r.fitted_slope:.4f} >= {r.theta_theory:.7f} - 0.02, "
            f"noiseless relative error {clean:.2e} (<= 1e-2)")


def test_criterion_6_log_shape():
    spec = make_problem(n_cells=200, T=1.0, a="1")
    r = log_rate_experiment(spec, SIN, [1e-6, 1e-5, 1e-4, 1e-3, 1e-2], seeds=[42], dt=1e-3,
                            alpha=0.9)
    margin = min(env / p.error for p, env in zip(r.points, r.details["envelope"]))
    verdict(6, "logarithmic shape at t0 = 0", r.passed,
            f"C_fit {r.details['C_fit']:.3e}, every point below 1.5 C_fit (ln 1/D)^-0.9 "
            f"(smallest envelope/error {margin:.2f})")


def test_criterion_7_semilinear():
    kw = dict(n_cells=200, T=1.0, a="x*(1-x)")
    eps = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2]
    r = semilinear_stability_experiment(make_problem(f="-u^3", **kw), SIN, eps, t0=0.5,
                                        dt=1e-3, lam=1.0, M_bound=2.0)
    z = semilinear_stability_experiment(make_problem(f="0", **kw), SIN, eps, t0=0.5, dt=1e-3)
    lin = semilinear_stability_experiment(make_problem(**kw), SIN, eps, t0=0.5, dt=1e-3)
    gap = max(abs(u - v) for p, q in zip(z.points, lin.points) for u, v in zip(p, q))
    sup_ok = r.details["sup_u"] <= 2.0 and max(r.details["sup_v"]) <= 2.0
    ok = r.fitted_slope >= r.theta_theory - 0.02 and sup_ok and gap <= 1e-9
    verdict(7, "semilinear difference stability", ok,
            f"slope {r.fitted_slope:.4f} >= {r.theta_theory:.7f} - 0.02, sup norms "
            f"{r.details['sup_u']:.3f}/{max(r.details['sup_v']):.3f} <= 2, f=0 vs linear gap {gap:.1e}")


def test_criterion_8_assumptions():
    lam_a = find_lambda1(make_problem(a="x*(1-x)"))
    lam_c = find_lambda1(make_problem(a="exp(2*t)*x*(1-x)"))
    drift = check_drift_bound(make_problem(a="x", sigma="x", b="1", n_cells=100))
    bnd = check_boundary_nondegeneracy(make_problem(a="abs(x-0.5)^1.5"))
    doubling = drift.C_refined / drift.C_est
    ok = (lam_a == LAMBDA1_FLOOR and abs(lam_c - 2) <= 1e-4 and not drift.stable
          and abs(doubling - 2) <= 1e-9 and bnd)
    verdict(8, "structural hypothesis checks", ok,
            f"time-independent lambda1={lam_a:g}, separable lambda1={lam_c:.8f}, drift C "
            f"{drift.C_est:.4f} -> {drift.C_refined:.4f} (x{doubling:.3f}, unstable), "
            f"|x-0.5|^1.5 boundary non-degenerate={bnd}")


def test_criterion_9_determinism(tmp_path):
    cfg = tmp_path / "thm1.json"
    cfg.write_text(json.dumps({
        "problem": {"a": "x*(1-x)", "n_cells": 200, "T": 1, "u0": SIN},
        "discretization": {"dt": 1e-3}, "carleman": {"lambda": 1},
        "reconstruction": {"t0": 0.5}, "experiment": {"deltas": DELTAS, "seeds": [42]}}))
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["rate-thm1", "--config", str(cfg), "--output-dir", str(o), "--quiet"])
             for o in outs]
    same_csv = (outs[0] / "report.csv").read_bytes() == (outs[1] / "report.csv").read_bytes()
    same_json = (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()
    rows = len((outs[0] / "report.csv").read_text().splitlines()) - 1
    verdict(9, "byte-identical reruns", codes == [0, 0] and same_csv and same_json and rows == 5,
            f"exit codes {codes}, report.csv identical={same_csv}, report.json identical="
            f"{same_json}, rows={rows}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
