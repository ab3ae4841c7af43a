import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from agehawkes import kernels as K
from agehawkes import rates as R
from agehawkes.rates import ModelError


# --- kernel evaluation -------------------------------------------------------

def test_erlang_eval_closed_forms():
    assert K.erlang(1, 1, 0).eval(0.0) == 1.0
    assert K.erlang(2, 1, 1).eval(1.0) == pytest.approx(2 * math.exp(-1), rel=1e-15)
    assert K.zero_kernel().eval(3.7) == 0.0


def test_negative_time_is_domain_error():
    with pytest.raises(ValueError):
        K.erlang(1, 1, 0).eval(-0.1)


def test_envelope_examples():
    assert K.erlang(1, 1, 0).envelope(2.0) == pytest.approx(math.exp(-2))
    # sup of t e^{-t}: grid-sup oracle
    s = np.linspace(0, 30, 300001)
    assert K.erlang(1, 1, 1).envelope(0.0) == pytest.approx((s * np.exp(-s)).max(), rel=1e-9)
    assert K.erlang(1, 1, 1).envelope(0.0) == pytest.approx(math.exp(-1), rel=1e-14)
    assert K.zero_kernel().envelope(1.0) == 0.0


def test_integral_examples():
    assert K.erlang(3, 2, 0).integral() == pytest.approx(1.5, rel=1e-14)
    assert K.erlang(1, 1, 2).integral() == pytest.approx(1.0, rel=1e-14)
    assert K.zero_kernel().integral(0, 10) == 0.0


@pytest.mark.parametrize("b,nu,n", [(1.0, 1.0, 0), (-2.0, 0.5, 1), (0.7, 3.0, 3), (1.0, 2.0, 6)])
def test_integral_matches_quadrature(b, nu, n):
    ker = K.erlang(b, nu, n)
    quad = integrate.quad(lambda t: ker.eval(t), 0, ker.horizon, limit=400, epsabs=1e-14, epsrel=1e-13)[0]
    assert ker.integral() == pytest.approx(b / nu ** (n + 1), rel=1e-13)
    assert abs(ker.integral() - quad) < 1e-9


def test_integrability_examples():
    rep = K.erlang(1, 1, 0).integrability_check()
    assert rep["pass"]
    assert rep["l1_envelope"] == pytest.approx(1.0, abs=1e-9)
    assert rep["l2_envelope"] == pytest.approx(0.5, abs=1e-9)
    rep = K.piecewise_constant([0, 2], [1.0]).integrability_check()
    assert rep["t_weighted_l1"] == pytest.approx(2.0, abs=1e-12)


def test_truncation_zeroes_tail():
    ker = K.truncated(K.erlang(1, 1, 0), 2.0)
    assert ker.eval(2.5) == 0.0
    assert ker.eval(1.0) == pytest.approx(math.exp(-1))
    assert ker.integral() == pytest.approx(1 - math.exp(-2), rel=1e-13)


def test_piecewise_right_continuous_and_suffix_max_envelope():
    ker = K.piecewise_constant([0, 1, 2, 3], [0.5, -2.0, 1.0])
    assert ker.eval(1.0) == -2.0
    assert ker.eval(0.999) == 0.5
    assert ker.envelope(0.0) == 2.0
    assert ker.envelope(1.5) == 2.0
    assert ker.envelope(2.0) == 1.0


def test_default_horizon_rule():
    ker = K.erlang(1, 1, 0)
    # smallest t with envelope <= 1e-12 envelope(0)
    assert ker.horizon == pytest.approx(12 * math.log(10), rel=1e-6)
    assert K.erlang(1, 0.01, 0).horizon <= 50 / 0.01 + 1e-9


kernels = st.builds(
    K.erlang,
    st.floats(-3, 3).filter(lambda b: abs(b) > 1e-3),
    st.floats(0.2, 5),
    st.integers(0, 5),
)


@settings(max_examples=60, deadline=None)
@given(kernels, st.lists(st.floats(0, 20), min_size=2, max_size=2))
def test_envelope_dominates_and_decreases(ker, ts):
    t1, t2 = sorted(ts)
    assert ker.envelope(t1) >= ker.envelope(t2) - 1e-15
    s = np.linspace(t1, t1 + 40, 2001)
    assert ker.envelope(t1) >= np.max(np.abs(ker.eval(s))) * (1 - 1e-12)


def test_kernel_matrix_square():
    with pytest.raises(ValueError):
        K.KernelMatrix(((K.zero_kernel(), K.zero_kernel()),))


# --- rates -----------------------------------------------------------------

def test_hard_refractory_eval():
    r = R.hard_refractory(R.constant(1.0), 1.0)
    assert r.psi_eval(5.0, 0.5) == 0.0
    assert r.psi_eval(5.0, 2.0) == 1.0
    with pytest.raises(ValueError):
        r.psi_eval(0.0, -1.0)


def test_custom_rate():
    r = R.custom_rate(lambda x, a: 2.0 + 0 * np.asarray(x), 2.0)
    assert r.psi_eval(0.0, 0.0) == 2.0
    bad = R.custom_rate(lambda x, a: -1.0 + 0 * np.asarray(x), 1.0)
    with pytest.raises(ModelError):
        bad.psi_eval(0.0, 0.0)


def test_sublinear_majorant_examples():
    assert R.custom_rate(lambda x, a: x * 0, 1.0).sublinear_majorant(0.0) == 1.0
    assert R.custom_rate(lambda x, a: x * 0, 2.0).sublinear_majorant(3.0) == 8.0
    r = R.hard_refractory(R.logistic(2.0, 1.0), 1.0, L=1.5)
    xs = np.linspace(-4, 4, 2001)
    grid_max = np.max(r.psi_eval(xs, 2.0))
    assert r.sublinear_majorant(4.0) == pytest.approx(min(1.5 * 5, 2.0))
    assert r.sublinear_majorant(4.0) >= grid_max


def test_validate_examples():
    r = R.hard_refractory(R.constant(1.0), 1.0, postjump_bound_K=1.0)
    assert r.validate(2000)["pass"]
    r = R.hard_refractory(R.exponential_map(1.0, 1.0), 1.0, L=1.0)
    rep = r.validate(2000)
    assert not rep["lipschitz"]["pass"]
    r = R.custom_rate(lambda x, a: 0 * np.asarray(x, dtype=float), 1.0, doeblin_c=0.5, a_star=1.0, x_star=1.0)
    assert not r.validate(500)["doeblin_lower_bound"]["pass"]


def test_hard_refractory_vanishes_in_window():
    r = R.hard_refractory(R.logistic(3.0, 2.0), 0.7)
    rng = np.random.default_rng(1)
    x = rng.uniform(-50, 50, 1000)
    a = rng.uniform(0, 0.7 - 1e-12, 1000)
    assert np.all(r.psi_eval(x, a) == 0)
    assert r.postjump_bound_K == 0.0


def test_rate_constructor_checks():
    with pytest.raises(ValueError):
        R.hard_refractory(R.constant(1.0), -1.0)
    with pytest.raises(ValueError):
        R.RateSpec("hard_refractory", lipschitz_L=0.5, f=R.constant(1.0))
