import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, optimize

from agehawkes import rates as R
from agehawkes.stationary import (
    NoSolutionError,
    change_of_variables_check,
    delta_sweep,
    solve_fixed_point,
    stationary_age_density,
)


def test_constant_f_closed_form():
    res = solve_fixed_point(R.hard_refractory(R.constant(1.0), 1.0), -2.0)
    assert res.lambda_bar == pytest.approx(0.5, rel=1e-12)
    assert res.unique
    for c, d in [(2.0, 0.3), (0.5, 4.0)]:
        res = solve_fixed_point(R.hard_refractory(R.constant(c), d), 1.7)
        assert res.lambda_bar == pytest.approx(c / (1 + d * c), rel=1e-12)


def test_no_refractory_period():
    res = solve_fixed_point(R.hard_refractory(R.constant(3.0), 0.0, L=3.0), 0.5)
    assert res.lambda_bar == pytest.approx(3.0, rel=1e-12)


def bisect_oracle(f, delta, H):
    # independent bracket on (0, 1/delta) for 1/l = delta + 1/f(l H)
    g = lambda l: 1.0 / l - delta - 1.0 / float(f(l * H))
    return optimize.bisect(g, 1e-9, 1.0 / delta - 1e-12, xtol=1e-14)


@pytest.mark.parametrize("H", [-1.0, -3.0, 0.5])
def test_logistic_against_bisection(H):
    f = R.logistic(3.0, 2.0, 0.0, 0.1)
    res = solve_fixed_point(R.hard_refractory(f, 1.0), H)
    assert res.lambda_bar == pytest.approx(bisect_oracle(f, 1.0, H), abs=1e-10)
    assert res.residual <= 1e-10
    assert res.x_star == pytest.approx(H * res.lambda_bar)


def test_inhibitory_unique():
    for gain in (0.5, 2.0, 8.0):
        res = solve_fixed_point(R.hard_refractory(R.logistic(4.0, gain), 0.7), -2.0)
        assert res.status == "unique"


def test_bounded_excitatory_unique():
    f = R.logistic(3.0, 1.0, 0.0, 0.5)
    for d in (0.1, 0.5, 1.0, 2.0):
        assert len(solve_fixed_point(R.hard_refractory(f, d), 1.0).roots) == 1


def test_multiple_roots_are_reported():
    # steep excitatory f: three fixed points
    f = R.logistic(5.0, 20.0, 1.0, 0.05)
    res = solve_fixed_point(R.hard_refractory(f, 0.1), 2.0)
    assert res.status == "multiple"
    assert len(res.roots) == 3
    for lam in res.roots:
        assert abs(1 / lam - 0.1 - 1 / float(f(2.0 * lam))) < 1e-9


def test_no_solution():
    # f vanishes everywhere reachable: the renewal mean is infinite
    with pytest.raises(NoSolutionError):
        solve_fixed_point(R.hard_refractory(R.constant(0.0), 1.0), -1.0)


def test_hard_refractory_density():
    c, d = 2.0, 0.5
    dens = stationary_age_density(R.hard_refractory(R.constant(c), d), 0.0)
    kappa = 1 / (d + 1 / c)
    assert dens.kappa == pytest.approx(kappa)
    a = np.array([0.0, 0.2, 0.49, 0.5, 1.0, 3.0])
    expect = np.where(a < d, kappa, kappa * np.exp(-c * (a - d)))
    assert np.allclose(dens(a), expect, rtol=1e-12)


def test_exponential_density_for_constant_psi():
    c = 1.3
    rate = R.custom_rate(lambda x, a: c + 0 * np.asarray(a, dtype=float), 1.3)
    dens = stationary_age_density(rate, 0.0)
    assert dens.kappa == pytest.approx(c, rel=1e-6)
    a = np.array([0.0, 0.5, 2.0, 10.0])
    assert np.allclose(dens(a), c * np.exp(-c * a), rtol=1e-5)


def test_density_integrates_to_one_and_kappa_is_rate():
    rate = R.product_rate(R.logistic(2.0, 1.0), lambda a: 1 - np.exp(-np.asarray(a)), 1.0, 1.0, 0.0)
    res = solve_fixed_point(rate, -1.0)
    dens = res.age_density
    total = integrate.quad(dens, 0, dens.grid[-1], limit=500, points=[1.0, 5.0])[0]
    total += float(dens(dens.grid[-1])) / dens.tail_rate
    assert total == pytest.approx(1.0, abs=1e-6)
    assert res.kappa == pytest.approx(res.lambda_bar, rel=1e-10)


def test_general_rhs_matches_hard_refractory_closed_form():
    # a hard-refractory rate written as a custom psi goes through the quadrature path
    f = R.logistic(3.0, 2.0)
    hr = R.hard_refractory(f, 1.0)
    cu = R.custom_rate(lambda x, a: f(x) * (np.asarray(a) >= 1.0), hr.lipschitz_L, 1.0)
    a = solve_fixed_point(hr, -1.0).lambda_bar
    b = solve_fixed_point(cu, -1.0).lambda_bar
    assert b == pytest.approx(a, rel=1e-6)


def test_change_of_variables_identity():
    for rate, x in [(R.hard_refractory(R.logistic(3.0, 2.0), 1.0), -0.4),
                    (R.product_rate(R.logistic(2.0, 1.0), lambda a: np.minimum(np.asarray(a) / 2, 1.0),
                                    1.0, 1.0), 0.3)]:
        assert change_of_variables_check(rate, x) <= 1e-6


def test_delta_sweep_examples():
    deltas = np.linspace(0.1, 2.0, 20)
    c = 1.5
    sw = delta_sweep(lambda d: R.hard_refractory(R.constant(c), d), 1.0, deltas)
    assert sw["verdict"] == "decreasing"
    assert np.allclose(sw["lambda_bar"], c / (1 + deltas * c), rtol=1e-12)
    base = R.hard_refractory(R.logistic(3.0, 2.0), 1.0)
    sw = delta_sweep(lambda d: replace(base, delta=d), -1.0, deltas)
    assert sw["verdict"] == "decreasing"


def test_implicit_derivative_sign():
    # implicit differentiation of 1/l - delta - 1/f(l H) = 0:
    # d lambda / d delta = -lambda^2 / (1 - lambda^2 H f'(x) / f(x)^2), negative at a down-crossing root
    f = R.logistic(3.0, 1.0, 0.0, 0.5)
    H = 1.0
    lam = lambda d: solve_fixed_point(R.hard_refractory(f, d), H, with_density=False).lambda_bar
    d, h = 1.0, 1e-5
    num = (lam(d + h) - lam(d - h)) / (2 * h)
    l0 = lam(d)
    x = H * l0
    fp = (float(f(x + 1e-6)) - float(f(x - 1e-6))) / 2e-6
    ana = -l0 ** 2 / (1 - l0 ** 2 * H * fp / float(f(x)) ** 2)
    assert num == pytest.approx(ana, rel=1e-4)
    assert num < 0
