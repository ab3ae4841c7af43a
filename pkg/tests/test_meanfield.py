import math

import numpy as np
import pytest

from agehawkes import kernels as K
from agehawkes import rates as R
from agehawkes.meanfield import (
    NonConvergenceError,
    cross_validate,
    solve_hard_refractory_dde,
    solve_picard_mc,
)
from agehawkes.network import AgeLaw, InitialSignal
from agehawkes.stationary import solve_fixed_point
from conftest import one_class


def mf(rate, kernel=None, T=10.0, age=None, signal=None):
    return one_class(rate, kernel, size=100, T=T, mode="mean_field", age=age, signal=signal)


def test_picard_constant_rate_phi_linear():
    cfg = mf(R.hard_refractory(R.constant(2.0), 0.0, L=2.0), T=5.0)
    sol = solve_picard_mc(cfg, particles=500)
    assert np.allclose(sol.lambda_bar, 2.0)
    assert np.allclose(sol.phi, 2.0 * sol.grid[None, :], atol=1e-12)
    assert sol.converged


def test_renewal_limit_rate():
    rate = R.hard_refractory(R.constant(1.0), 1.0)
    cfg = mf(rate, T=40.0, age=AgeLaw("point_mass", value=50.0))
    dde = solve_hard_refractory_dde(cfg)
    assert dde.lambda_bar[0, -1] == pytest.approx(0.5, abs=1e-6)
    mc = solve_picard_mc(cfg, particles=4000)
    tail = mc.grid > 30
    # average of the late rate against the renewal value, MC error ~ 1/sqrt(M * window)
    assert abs(mc.lambda_bar[0, tail].mean() - 0.5) < 0.02


def test_dde_no_interaction_stationary():
    c, delta = 3.0, 0.5
    rate = R.hard_refractory(R.constant(c), delta)
    cfg = mf(rate, K.erlang(0.0, 1.0, 0), T=30.0, age=AgeLaw("exponential", rate=1.0))
    errs = []
    for dt in (0.01, 0.005):
        sol = solve_hard_refractory_dde(cfg, dt=dt)
        errs.append(abs(sol.p[0, -1] - 1 / (1 + c * delta)))
        assert sol.lambda_bar[0, -1] == pytest.approx(c / (1 + c * delta), abs=1e-4)
    # Heun steps: second-order bias
    assert errs[0] < 1e-4
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_dde_silent_rate():
    rate = R.hard_refractory(R.constant(0.0), 1.0)
    age = AgeLaw("uniform", a_max=2.0)
    sol = solve_hard_refractory_dde(mf(rate, K.erlang(-1.0, 1.0, 1), T=3.0, age=age))
    assert np.all(sol.lambda_bar == 0)
    assert np.allclose(sol.p[0], age.survival(1.0 - sol.grid), atol=1e-12)


def test_dde_matches_fixed_point():
    rate = R.hard_refractory(R.logistic(3.0, 2.0), 1.0)
    ker = K.erlang(-1.0, 1.0, 1)
    sol = solve_hard_refractory_dde(mf(rate, ker, T=80.0, age=AgeLaw("exponential", rate=1.0)))
    fp = solve_fixed_point(rate, ker.integral())
    assert sol.lambda_bar[0, -1] == pytest.approx(fp.lambda_bar, abs=1e-4)
    assert sol.x[0, -1] == pytest.approx(fp.x_star, abs=1e-4)


def test_dde_step_must_divide_delta():
    rate = R.hard_refractory(R.constant(1.0), 1.0)
    with pytest.raises(ValueError):
        solve_hard_refractory_dde(mf(rate, K.erlang(-1.0, 1.0, 0)), dt=0.3)


def test_derivative_jump_at_delta():
    delta = 1.0
    rate = R.hard_refractory(R.logistic(3.0, 2.0), delta)
    age = AgeLaw("exponential", rate=1.0)
    cfg = mf(rate, K.erlang(-1.0, 1.0, 1), T=3.0, age=age, signal=InitialSignal("exponential", amplitude=0.5))
    dt = delta / 50
    sol = solve_hard_refractory_dde(cfg, dt=dt)
    i = int(round(delta / dt))
    p = sol.p[0]
    left = (p[i] - p[i - 1]) / dt
    right = (p[i + 1] - p[i]) / dt
    expect = float(rate.f(sol.x[0, 0])) * p[0] - float(age.density(0.0))
    assert abs((right - left) - expect) <= 5 * dt * max(1.0, abs(expect))


def test_solution_invariants():
    rate = R.hard_refractory(R.logistic(2.0, 1.5), 1.0)
    ker = K.erlang(-0.8, 1.0, 0)
    cfg = mf(rate, ker, T=15.0, age=AgeLaw("uniform", a_max=2.0), signal=InitialSignal("exponential", amplitude=1.0))
    mc = solve_picard_mc(cfg, particles=2000)
    for sol in (mc, solve_hard_refractory_dde(cfg)):
        assert sol.phi[0, 0] == 0
        assert np.all(np.diff(sol.phi[0]) >= -1e-12)
        assert np.all(sol.lambda_bar >= 0)
        assert np.all((sol.p >= -1e-12) & (sol.p <= 1 + 1e-12))
    # x = beta + int h dphi on the grid (independent quadrature of the MC rates)
    g = mc.grid
    conv = np.array([np.trapezoid(ker.eval(t - g[: i + 1]) * mc.lambda_bar[0, : i + 1], g[: i + 1])
                     for i, t in enumerate(g)])
    assert np.max(np.abs(mc.x[0] - (mc.beta[0] + conv))) < 5e-3
    # contraction: deviations decrease over the last iterations
    d = mc.deviations[-5:]
    assert all(b <= a for a, b in zip(d, d[1:]))


def test_picard_nonconvergence_reports_trace():
    rate = R.hard_refractory(R.logistic(2.0, 1.5), 1.0)
    cfg = mf(rate, K.erlang(-0.8, 1.0, 0), T=10.0)
    with pytest.raises(NonConvergenceError) as err:
        solve_picard_mc(cfg, particles=200, max_iter=1, tol=1e-12, raise_on_failure=True)
    assert len(err.value.solution.deviations) == 1


def test_cross_validate_examples():
    rate = R.hard_refractory(R.constant(1.5), 1.0)
    cfg = mf(rate, K.erlang(0.0, 1.0, 0), T=6.0, age=AgeLaw("exponential", rate=1.0))
    dde = solve_hard_refractory_dde(cfg)
    self_rep = cross_validate(dde, dde)
    assert self_rep["sup_lambda_gap"] == 0 and self_rep["sup_x_gap"] == 0
    small = solve_picard_mc(cfg, particles=1000, seed=1)
    big = solve_picard_mc(cfg, particles=4000, seed=1)
    assert cross_validate(small, dde)["within_band"]
    assert cross_validate(big, dde)["within_band"]
    # CLT: four times the particles halves the band
    ratio = cross_validate(small, dde)["max_band"] / cross_validate(big, dde)["max_band"]
    assert 1.7 < ratio < 2.3


def test_phi_continuity_under_refinement():
    rate = R.hard_refractory(R.logistic(2.0, 1.0), 1.0)
    cfg = mf(rate, K.erlang(-0.5, 1.0, 1), T=5.0, age=AgeLaw("exponential", rate=1.0))
    jumps = [np.max(np.diff(solve_hard_refractory_dde(cfg, dt=d).phi[0])) for d in (0.1, 0.05, 0.025)]
    assert jumps[0] > jumps[1] > jumps[2]
    xs = [np.max(np.abs(solve_hard_refractory_dde(cfg, dt=d).x)) for d in (0.05, 0.025)]
    assert abs(xs[0] - xs[1]) < 1e-3
