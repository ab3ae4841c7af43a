import math

import numpy as np
import pytest

from agehawkes import kernels as K
from agehawkes import rates as R
from agehawkes.network import (
    AgeLaw,
    ExplosionError,
    InitialSignal,
    Population,
    _replay_memory,
    compensator,
    domination_bound_check,
    intensity_trace,
    memory_trace,
    simulate,
    simulate_dominating,
    time_average,
)
from conftest import one_class, two_class


def poisson_rate(c):
    return R.hard_refractory(R.constant(c), 0.0, L=max(1.0, c))


def test_constant_intensity_is_poisson():
    cfg = one_class(poisson_rate(2.0), T=10.0)
    counts = np.array([len(simulate(cfg, s)) for s in range(300)])
    # Poisson(20): sd of the mean is sqrt(20/300)
    assert abs(counts.mean() - 20.0) < 4 * math.sqrt(20 / 300)
    assert abs(counts.var() / 20.0 - 1) < 0.3


def test_zero_intensity_gives_empty_log():
    cfg = one_class(R.hard_refractory(R.constant(0.0), 0.5), T=50.0)
    log = simulate(cfg, 1)
    assert len(log) == 0
    assert log.times.size == 0


def test_renewal_rate(renewal_rate):
    T = 4000.0
    log = simulate(one_class(renewal_rate, T=T), 11)
    # gaps 1 + Exp(1): count sd ~ sqrt(T var / mean^3) = sqrt(T / 8)
    assert abs(len(log) / T - 0.5) < 4 * math.sqrt(T / 8) / T


def test_single_jump_drives_memory():
    silent = R.hard_refractory(R.constant(0.0), 0.0)
    once = R.hard_refractory(R.constant(1.0), 1e6)
    kz = K.zero_kernel()
    cfg = two_class(silent, [[kz, K.erlang(5.0, 1.0, 0)], [kz, kz]], T=30.0)
    # old enough to fire at once, then refractory for the rest of the run
    firing = Population(1, once, InitialSignal(), AgeLaw("point_mass", value=2e6))
    cfg = cfg.with_(populations=(cfg.populations[0], firing))
    log = simulate(cfg, 4)
    assert len(log) == 1 and log.populations[0] == 1
    tau = log.times[0]
    grid = np.linspace(0, 30, 301)
    X = memory_trace(log, cfg, grid)[:, 0]
    expect = np.where(grid > tau, 5 * np.exp(-(grid - tau)), 0.0)
    assert np.allclose(X, expect, rtol=0, atol=1e-12)
    assert np.allclose(_replay_memory(log, cfg, 0, grid), expect, atol=1e-12)


def test_intensity_trace_examples(renewal_rate):
    cfg = one_class(poisson_rate(1.7), T=20.0)
    log = simulate(cfg, 0)
    tr = intensity_trace(log, cfg, np.linspace(0, 20, 41))
    assert np.all(tr == 1.7)
    cfg = one_class(renewal_rate, T=50.0)
    log = simulate(cfg, 2)
    inside = (log.times[:, None] + np.linspace(1e-9, 1 - 1e-9, 7)[None, :]).ravel()
    inside = inside[inside < 50.0]
    assert np.all(intensity_trace(log, cfg, inside) == 0)
    with pytest.raises(ValueError):
        intensity_trace(log, cfg, [60.0])


def inhibitory_pair(T=200.0, n=1):
    rate = R.hard_refractory(R.logistic(2.0, 2.0), 1.0)
    ker = [[K.erlang(-0.5, 2.0, n), K.erlang(-1.0, 1.0, n)], [K.erlang(-1.0, 1.0, n), K.erlang(-0.5, 2.0, n)]]
    return two_class(rate, ker, sizes=(3, 2), T=T, signal=InitialSignal("exponential", amplitude=1.0),
                     ages=(AgeLaw("uniform", a_max=3.0), AgeLaw("exponential", rate=1.0)))


@pytest.mark.parametrize("n", [0, 2])
def test_memory_replay_matches_bruteforce(n, rng):
    cfg = inhibitory_pair(T=100.0, n=n)
    log = simulate(cfg, 8)
    q = np.sort(rng.uniform(0, 100, 100))
    brute = memory_trace(log, cfg, q)
    for k in range(2):
        assert np.max(np.abs(_replay_memory(log, cfg, k, q) - brute[:, k])) <= 1e-9


def test_general_kernel_memory_matches_bruteforce(rng):
    rate = R.hard_refractory(R.logistic(2.0, 1.0), 0.5)
    ker = K.piecewise_constant([0, 0.5, 1.5, 4.0], [0.3, -0.6, 0.2])
    cfg = one_class(rate, ker, size=4, T=60.0)
    log = simulate(cfg, 3)
    q = np.sort(rng.uniform(0, 60, 100))
    assert np.max(np.abs(_replay_memory(log, cfg, 0, q) - memory_trace(log, cfg, q)[:, 0])) <= 1e-9


def test_inherited_signal_enters_memory():
    rate = R.hard_refractory(R.constant(0.0), 0.0)
    sig = InitialSignal("inherited", point_times={0: [-0.5, -2.0]})
    cfg = one_class(rate, K.erlang(2.0, 1.0, 1), T=5.0, signal=sig)
    log = simulate(cfg, 0)
    t = np.array([0.0, 1.0, 3.0])
    expect = sum(2.0 * (t - s) * np.exp(-(t - s)) for s in (-0.5, -2.0))
    assert np.allclose(memory_trace(log, cfg, t)[:, 0], expect, atol=1e-13)
    assert np.allclose(_replay_memory(log, cfg, 0, t), expect, atol=1e-12)


def test_explicit_signal_is_zero_after_grid():
    sig = InitialSignal("explicit", grid=(0.0, 1.0, 2.0), values=(1.0, 0.5, 0.25))
    assert sig.direct(1.5) == pytest.approx(0.375)
    assert sig.direct(2.5) == 0.0
    with pytest.raises(ValueError):
        InitialSignal("explicit", grid=(0.5, 1.0), values=(1.0, 2.0))


def test_refractory_spacing_and_age_reset():
    cfg = inhibitory_pair(T=150.0)
    log = simulate(cfg, 21)
    for k, pop in enumerate(cfg.populations):
        for j in range(pop.size):
            tt = log.unit_times(k, j)
            a0 = log.initial_ages[k][j]
            assert np.all(np.diff(tt) >= 1.0)
            if tt.size:
                assert tt[0] >= 1.0 - a0 - 1e-12
                # pathwise count bound on windows of length T
                assert tt.size <= math.ceil(150.0 / 1.0) + 1
    # ages at horizon: time since last event
    ages = log.ages_at(150.0)
    t = log.unit_times(0, 0)
    if t.size:
        assert ages[0] == pytest.approx(150.0 - t[-1])
    assert np.all(log.times > 0)


def test_audit_sublinear_and_majorant():
    log = simulate(inhibitory_pair(T=100.0), 5, audit_candidates=True)
    assert log.audit["sublinear_violations"] == 0
    assert log.audit["candidates_evaluated"] >= len(log)


def test_determinism_and_seed_dependence():
    cfg = inhibitory_pair(T=80.0)
    a, b, c = simulate(cfg, 3), simulate(cfg, 3), simulate(cfg, 4)
    assert a.records() == b.records()
    assert a.records() != c.records()


def test_explosion_guard():
    cfg = one_class(poisson_rate(5.0), T=100.0, max_events=50)
    with pytest.raises(ExplosionError):
        simulate(cfg, 0)


def test_compensator_of_poisson_is_linear():
    cfg = one_class(poisson_rate(3.0), T=40.0)
    log = simulate(cfg, 6)
    times, comp, total = compensator(log, cfg, 0, 0)
    assert np.allclose(comp, 3.0 * times, rtol=1e-12)
    assert total == pytest.approx(120.0)


def test_compensator_renewal_closed_form(renewal_rate):
    cfg = one_class(renewal_rate, T=30.0, age=AgeLaw("point_mass", value=0.25))
    log = simulate(cfg, 9)
    times, comp, total = compensator(log, cfg, 0, 0)
    # each gap contributes (gap - delta); the first one (gap - (delta - a0))
    prev = np.concatenate([[-0.25], times[:-1]])
    expect = np.cumsum(times - prev - 1.0)
    assert np.allclose(comp, expect, atol=1e-10)


# --- dominating process ---------------------------------------------------

def test_dominating_without_interaction_is_poisson(renewal_rate):
    cfg = one_class(renewal_rate, T=400.0)
    log, lam = simulate_dominating(cfg, 3)
    # L = 1, K = 0, C = 1: rate 1
    assert np.all(lam == 1.0)
    assert abs(len(log) / 400.0 - 1.0) < 4 * math.sqrt(1 / 400.0)


def test_network_events_are_dominating_events():
    rng = np.random.default_rng(77)
    for r in range(5):
        b = -rng.uniform(0.2, 1.5)
        rate = R.hard_refractory(R.logistic(rng.uniform(1, 3), rng.uniform(0.5, 2)), rng.uniform(0.5, 1.5))
        cfg = one_class(rate, K.erlang(b, rng.uniform(0.5, 2), int(rng.integers(0, 3))), size=3, T=60.0)
        streams = cfg.streams(r)
        net = simulate(cfg, streams)
        dom, _ = simulate_dominating(cfg, cfg.streams(r))
        g = net.global_units
        dom_set = set(zip(dom.times.tolist(), dom.global_units.tolist()))
        assert all((t, int(u)) in dom_set for t, u in zip(net.times.tolist(), g))


def test_domination_bound_examples():
    rate = R.hard_refractory(R.logistic(2.0, 1.0), 1.0)
    ker = K.erlang(-1.0, 1.0, 1)
    cfg = one_class(rate, ker, size=2, T=100.0)
    streams = cfg.streams(0)
    log = simulate(cfg, streams)
    first = log.unit_times(0, 1)[0]
    rep = domination_bound_check(log, cfg, streams, (0, 0), (0, 1), first * 0.5, first)
    assert rep["lhs"] == 0 and rep["pass"]
    # a single event before t1: lhs = |h(t2 - tau)| <= hbar(t2 - t1 + A)
    t1 = first + 0.3
    t2 = t1 + 0.4
    rep = domination_bound_check(log, cfg, streams, (0, 0), (0, 1), t1, t2)
    assert rep["lhs"] == pytest.approx(abs(ker.eval(t2 - first)))
    assert rep["lhs"] <= ker.envelope(t2 - t1 + 0.3) + 1e-15
    assert rep["pass"]
    rng = np.random.default_rng(1)
    for _ in range(100):
        t1, t2 = np.sort(rng.uniform(0, 100, 2))
        assert domination_bound_check(log, cfg, streams, (0, 0), (0, 1), t1, t2)["pass"]


# --- ergodic averages -------------------------------------------------------

def test_time_average_examples(renewal_rate):
    cfg = one_class(poisson_rate(2.0), T=2000.0)
    log = simulate(cfg, 1)
    assert time_average(log, lambda ev: 1.0, 5.0) == 1.0
    est = time_average(log, lambda ev: ev.size, 5.0, step=0.5)
    assert abs(est - 10.0) < 0.5
    log = simulate(one_class(renewal_rate, T=4000.0), 2)
    assert abs(time_average(log, lambda ev: ev.size, 4.0, step=0.5) - 2.0) < 0.1
    with pytest.raises(ValueError):
        time_average(log, len, 5000.0)
