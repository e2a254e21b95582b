import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dense_linear_map, heat_dirichlet

from degenerate_backward.backward_recon import (
    AdjointCheckError, ForwardMap, NoiseSpec, add_noise, apply_forward_map, choose_alpha,
    noise_direction, reconstruct_tikhonov,
)
from degenerate_backward.pde_solver import forward_solve
from degenerate_backward.problem_model import GridFunction, l2_norm, make_problem, sample

SIN = "sin(3.14159265358979*x)"


def test_forward_map_of_zero():
    spec = make_problem(n_cells=20)
    out = apply_forward_map(spec, GridFunction(spec.grid, np.zeros(21)), 0.5, 0.01)
    assert np.all(out.values == 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_forward_map_linearity(seed, al, be):
    spec = make_problem(n_cells=30, a="x*(1-x)", b="x*(1-x)")
    rng = np.random.default_rng(seed)
    v, w = rng.normal(size=(2, 31))
    v[[0, -1]] = w[[0, -1]] = 0

    def A(z):
        return apply_forward_map(spec, z, 0.5, 0.05, linear=True).values

    lhs = A(al * v + be * w)
    rhs = al * A(v) + be * A(w)
    assert np.abs(lhs - rhs).max() <= 1e-11 * (1 + np.abs(rhs).max())


def test_forward_map_heat_oracle():
    spec = make_problem(n_cells=200)
    out = apply_forward_map(spec, sample(SIN, spec.grid), 0.5, 1e-4)
    assert np.abs(out.values - heat_dirichlet(spec.grid.nodes, 0.5)).max() <= 2e-3


def test_forward_map_matches_dense_map():
    spec = make_problem(n_cells=12, a="x*(1-x)+0.05", b="1", c="-t", T=0.2)
    fmap = ForwardMap(spec, 0.1, 0.01)
    P = dense_linear_map(spec, 0.1, 0.2, 0.01)
    rng = np.random.default_rng(0)
    v = rng.normal(size=13)
    assert np.allclose(fmap.linear(v), P @ v, rtol=1e-12, atol=1e-14)
    assert fmap.check_adjoint() < 1e-14


def test_weighted_adjoint():
    spec = make_problem(n_cells=25, b="1")
    fmap = ForwardMap(spec, 0.0, 0.05)
    rng = np.random.default_rng(1)
    v, w = rng.normal(size=(2, 26))
    v[[0, -1]] = 0
    assert fmap.inner(fmap.linear(v), w) == pytest.approx(fmap.inner(v, fmap.adjoint(w)), rel=1e-12)


def test_rejects_semilinear():
    with pytest.raises(ValueError):
        ForwardMap(make_problem(f="-u^3"), 0.5, 0.1)


def test_noise_contract():
    spec = make_problem(n_cells=50)
    d = sample(SIN, spec.grid)
    assert add_noise(d, NoiseSpec(0.0)) is d
    a, b = add_noise(d, NoiseSpec(1e-3, 7)), add_noise(d, NoiseSpec(1e-3, 7))
    assert np.array_equal(a.values, b.values)
    assert l2_norm(a - d) / l2_norm(d) == pytest.approx(1e-3, rel=1e-12)
    assert not np.array_equal(add_noise(d, NoiseSpec(1e-3, 8)).values, a.values)
    zero = GridFunction(spec.grid, np.zeros(51))
    assert l2_norm(add_noise(zero, NoiseSpec(0.5))) == pytest.approx(0.5, rel=1e-12)


def test_noise_generator_is_philox():
    ref = np.random.Generator(np.random.Philox(np.random.SeedSequence(42))).standard_normal(5)
    assert np.array_equal(noise_direction(5, 42), ref)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(0.1, seed=-1)


def test_choose_alpha_examples():
    assert choose_alpha(0, 5) == 1e-14
    assert choose_alpha(1e-3, 1) == pytest.approx(1e-6, rel=1e-15)
    assert choose_alpha(1e-2, 2) == pytest.approx(4e-4, rel=1e-15)


def _heat_data(n=100, t0=0.5, dt=1e-3, a="1"):
    spec = make_problem(n_cells=n, a=a)
    series = forward_solve(spec, sample(SIN, spec.grid), 0, 1, dt).series
    return spec, series.at(t0), series.frame(series.n_steps)


def test_zero_data_zero_estimate():
    spec = make_problem(n_cells=20)
    res = reconstruct_tikhonov(spec, GridFunction(spec.grid, np.zeros(21)), 0.5, 0.05, 1e-6)
    assert np.all(res.estimate.values == 0) and res.converged and res.cg_iterations == 0


@pytest.mark.parametrize("a", ["1", "x*(1-x)"])
def test_noiseless_reconstruction(a):
    spec, truth, data = _heat_data(a=a)
    res = reconstruct_tikhonov(spec, data, 0.5, 1e-3, 1e-10)
    assert res.converged
    assert l2_norm(res.estimate - truth) / l2_norm(truth) <= 1e-2
    # normal-equation optimality
    fmap = ForwardMap(spec, 0.5, 1e-3)
    v, d = res.estimate.values, data.values - fmap.offset
    r = fmap.adjoint(fmap.linear(v)) + 1e-10 * v - fmap.adjoint(d)
    b = fmap.adjoint(d)
    assert math.sqrt(fmap.inner(r, r)) <= 1e-10 * math.sqrt(fmap.inner(b, b)) * 1.0001


def test_objective_non_increasing():
    spec, truth, data = _heat_data(a="x*(1-x)")
    noisy = add_noise(data, NoiseSpec(1e-3, 3))
    res = reconstruct_tikhonov(spec, noisy, 0.5, 1e-3, 1e-12)
    h = np.array(res.objective_history)
    assert len(h) == res.cg_iterations + 1 > 2
    assert np.all(np.diff(h) <= 1e-12 * abs(h[0]))


def test_misfit_monotone_in_alpha():
    spec, truth, data = _heat_data()
    noisy = add_noise(data, NoiseSpec(1e-2, 5))
    misfits = [reconstruct_tikhonov(spec, noisy, 0.5, 1e-3, a).data_misfit
               for a in (1e-10, 1e-8, 1e-6, 1e-4)]
    assert all(b >= a for a, b in zip(misfits, misfits[1:]))


def test_error_decreases_as_alpha_vanishes():
    spec, truth, data = _heat_data()
    errs = [l2_norm(reconstruct_tikhonov(spec, data, 0.5, 1e-3, a).estimate - truth)
            for a in (1e-4, 1e-6, 1e-8)]
    assert errs[0] > errs[1] > errs[2]


def test_source_offset_subtracted():
    spec = make_problem(n_cells=50, a="x*(1-x)", F="x*(1-x)")
    series = forward_solve(spec, sample(SIN, spec.grid), 0, 1, 1e-3).series
    res = reconstruct_tikhonov(spec, series.frame(series.n_steps), 0.5, 1e-3, 1e-10)
    truth = series.at(0.5)
    assert l2_norm(res.estimate - truth) / l2_norm(truth) <= 1e-2


def test_iteration_cap_flagged():
    spec, truth, data = _heat_data(a="x*(1-x)")
    res = reconstruct_tikhonov(spec, add_noise(data, NoiseSpec(1e-3)), 0.5, 1e-3, 1e-14,
                               cg_tol=1e-14, max_iter=2)
    assert res.cg_iterations == 2 and not res.converged


def test_argument_checks():
    spec, truth, data = _heat_data(n=20, dt=0.01)
    with pytest.raises(ValueError):
        reconstruct_tikhonov(spec, data, 0.5, 0.01, 0.0)
    with pytest.raises(ValueError):
        reconstruct_tikhonov(spec.with_cells(10), data, 0.5, 0.01, 1e-6)


def test_adjoint_gate():
    spec, truth, data = _heat_data(n=20, dt=0.01)

    class Broken(ForwardMap):
        def transpose(self, w):
            return 1.1 * super().transpose(w)

    with pytest.raises(AdjointCheckError):
        reconstruct_tikhonov(spec, data, 0.5, 0.01, 1e-6, forward_map=Broken(spec, 0.5, 0.01))
