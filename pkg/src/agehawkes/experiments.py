"""Desk-scale experiments: coupling, propagation of chaos, weight approximation,
and the time-rescaling diagnostic.

Replicates are independent and may run on a thread pool; results are
collected in replicate order, so every reduction is independent of the
number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .kernels import KernelMatrix, KernelSpec, truncated
from .meanfield import MeanFieldSolution, solve_picard_mc
from .network import (
    AgeLaw,
    EventLog,
    InitialSignal,
    NetworkConfig,
    Population,
    _replay_memory,
    compensator,
    simulate,
    simulate_frozen,
)
from .prm import _combine

__all__ = [
    "replicate_seed",
    "run_replicates",
    "CouplingReport",
    "coupling_time",
    "coupling_experiment",
    "ChaosReport",
    "chaos_experiment",
    "non_common_events",
    "weight_approx_experiment",
    "rescaling_test",
]


def replicate_seed(seed: int, r: int) -> int:
    """Seed of replicate r, hashed so that nearby base seeds do not share replicates."""
    return int(_combine(int(seed), 0x5EED, int(r)))


def run_replicates(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """map(fn, items) in order, optionally on a thread pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# coupling


@dataclass
class CouplingReport:
    coupled: list
    coupling_time: list
    horizon: float
    seeds: list = field(default_factory=list)

    @property
    def fraction_coupled(self) -> float:
        return float(np.mean(self.coupled)) if self.coupled else math.nan

    def rows(self):
        return [(i, int(c), float(t), s) for i, (c, t, s) in
                enumerate(zip(self.coupled, self.coupling_time, self.seeds))]


def coupling_time(log_a: EventLog, log_b: EventLog):
    """(coupled, t0): the logs agree on (t0, T] and the ages agree at T.

    t0 is the time of the last event present in only one of the logs (0 if
    none). When the ages at the horizon differ the pair is not coupled and
    t0 is the horizon.
    """
    ra, rb = log_a.records(), log_b.records()
    i, j = len(ra), len(rb)
    while i > 0 and j > 0 and ra[i - 1] == rb[j - 1]:
        i -= 1
        j -= 1
    t0 = max(ra[i - 1][0] if i else 0.0, rb[j - 1][0] if j else 0.0)
    ages_equal = np.array_equal(log_a.final_ages, log_b.final_ages)
    if not ages_equal:
        return False, float(log_a.horizon)
    return True, float(t0)


def coupling_experiment(config: NetworkConfig, seed: int, init_a: tuple, init_r: tuple | None = None,
                        replicates: int = 100, threads: int = 1,
                        horizon: float | None = None) -> CouplingReport:
    """Two runs per replicate on the same PRMs, differing in initial ages and/or signals.

    ``init_a`` is a pair of AgeLaws (applied to every population);
    ``init_r`` an optional pair of InitialSignals.
    """
    if horizon is not None:
        config = config.with_(horizon=horizon)
    interacting = not all(ker.is_zero for row in config.kernels.entries for ker in row)
    if interacting and any(p.rate.delta <= 0 for p in config.populations if p.size):
        raise ValueError("coupling needs a positive refractory length when units interact")
    cfgs = []
    for side in range(2):
        pops = []
        for p in config.populations:
            sig = p.initial_signal if init_r is None else init_r[side]
            pops.append(replace(p, initial_age=init_a[side], initial_signal=sig))
        cfgs.append(config.with_(populations=tuple(pops)))
    for c in cfgs:
        for p in c.populations:
            if p.initial_signal.integral_abs(c.horizon) == math.inf:
                raise ValueError("initial signal is not integrable")
    seeds = [replicate_seed(seed, r) for r in range(replicates)]

    def one(s):
        la = simulate(cfgs[0], cfgs[0].streams(s))
        lb = simulate(cfgs[1], cfgs[1].streams(s))
        return coupling_time(la, lb)

    res = run_replicates(one, seeds, threads)
    return CouplingReport([r[0] for r in res], [r[1] for r in res], config.horizon, seeds)


# ---------------------------------------------------------------------------
# propagation of chaos


def non_common_events(a, b) -> int:
    """Number of event times present in exactly one of two sorted arrays."""
    common = np.intersect1d(a, b, assume_unique=True).size
    return int(a.size + b.size - 2 * common)


@dataclass
class ChaosReport:
    """Per N: mean and standard error over replicates of sup|X^N - x| and of the
    non-common event count between units and their limit twins (an upper-bound
    surrogate of the variation distance)."""

    N: list
    sup_distance: list
    sup_distance_se: list
    noncommon: list
    noncommon_se: list
    per_population_distance: list
    replicates: int

    def rows(self):
        return [(n, d, dse, c, cse) for n, d, dse, c, cse in
                zip(self.N, self.sup_distance, self.sup_distance_se, self.noncommon, self.noncommon_se)]


def _sized(config: NetworkConfig, N: int) -> NetworkConfig:
    frac = config.fractions
    sizes = np.floor(frac * N + 0.5).astype(int)
    sizes[-1] = N - sizes[:-1].sum()
    if np.any(sizes[frac > 0] < 1):
        raise ValueError(f"N={N} is below the number of populations")
    pops = tuple(replace(p, size=int(n)) for p, n in zip(config.populations, sizes))
    return config.with_(populations=pops, mode="mean_field")


def chaos_experiment(config: NetworkConfig, N_grid: Sequence[int], replicates: int = 20, seed: int = 0,
                     limit: MeanFieldSolution | None = None, particles: int = 10_000,
                     eval_step: float | None = None, tagged: str = "all", threads: int = 1) -> ChaosReport:
    """Network at each N against the limit driven by the same PRMs.

    ``tagged='all'`` averages the twin distance over every unit (each unit
    is a tagged unit); ``'first'`` uses unit (k, 0) only.
    """
    if limit is None:
        limit = solve_picard_mc(config, particles=particles, seed=seed)
    grid = limit.grid if eval_step is None else np.arange(0.0, config.horizon + 1e-12, eval_step)
    x_lim = np.vstack([np.interp(grid, limit.grid, row) for row in limit.x])
    T = config.horizon
    out = ChaosReport([], [], [], [], [], [], replicates)
    for N in N_grid:
        cfg = _sized(config, int(N))

        def one(r):
            s = replicate_seed(seed, 1000 * int(N) + r)
            streams = cfg.streams(s)
            log = simulate(cfg, streams)
            dists = []
            for k in range(cfg.n_populations):
                X = _replay_memory(log, cfg, k, grid)
                dists.append(float(np.max(np.abs(X - x_lim[k]))))
            counts = []
            for k, pop in enumerate(cfg.populations):
                units = np.arange(pop.size) if tagged == "all" else np.arange(min(1, pop.size))
                twins = simulate_frozen(pop.rate, limit.grid, limit.x[k], streams, k, units,
                                        log.initial_ages[k][units], T)
                for j, tw in zip(units, twins):
                    counts.append(non_common_events(log.unit_times(k, int(j)), tw))
            return max(dists), dists, float(np.mean(counts))

        res = run_replicates(one, list(range(replicates)), threads)
        d = np.array([r[0] for r in res])
        c = np.array([r[2] for r in res])
        sq = math.sqrt(max(replicates, 1))
        out.N.append(int(N))
        out.sup_distance.append(float(d.mean()))
        out.sup_distance_se.append(float(d.std(ddof=1) / sq) if replicates > 1 else math.nan)
        out.noncommon.append(float(c.mean()))
        out.noncommon_se.append(float(c.std(ddof=1) / sq) if replicates > 1 else math.nan)
        out.per_population_distance.append(np.mean([r[1] for r in res], axis=0).tolist())
    return out


# ---------------------------------------------------------------------------
# weight approximation


def kernel_l1_gap(a: KernelSpec, b: KernelSpec, T: float, n: int = 20001) -> float:
    """int_0^T |h_a - h_b| by the trapezoid rule on a fine grid plus the kernels' breakpoints."""
    pts = [np.linspace(0.0, T, n)]
    for ker in (a, b):
        if ker.truncate and ker.horizon < T:
            pts.append(np.array([ker.horizon, np.nextafter(ker.horizon, math.inf)]))
        if ker.kind == "piecewise_constant":
            g = np.asarray(ker.grid)
            pts.append(g[g <= T])
            pts.append(np.nextafter(g[g <= T], -math.inf).clip(0))
    t = np.unique(np.concatenate(pts))
    return float(np.trapezoid(np.abs(np.asarray(a.eval(t)) - np.asarray(b.eval(t))), t))


def weight_approx_experiment(config: NetworkConfig, variants: Sequence[KernelMatrix], replicates: int = 20,
                             seed: int = 0, threads: int = 1) -> dict:
    """Network with ``config.kernels`` against each variant kernel matrix on the same PRMs.

    Returns per variant the l1 gap sum_kl int_0^T |h_kl - h~_kl|, the mean
    per-unit non-common event count and their ratio; ``C_hat`` is the
    largest ratio and ``ratio_spread`` the max/min ratio.
    """
    T = config.horizon
    K = config.n_populations
    gaps = []
    for var in variants:
        g = sum(kernel_l1_gap(config.kernels[k, l], var[k, l], T) for k in range(K) for l in range(K))
        gaps.append(g)
    seeds = [replicate_seed(seed, r) for r in range(replicates)]
    var_cfgs = [config.with_(kernels=v) for v in variants]

    def one(s):
        base = simulate(config, config.streams(s))
        row = []
        for vc in var_cfgs:
            other = simulate(vc, vc.streams(s))
            total = 0
            for k, pop in enumerate(config.populations):
                for j in range(pop.size):
                    total += non_common_events(base.unit_times(k, j), other.unit_times(k, j))
            row.append(total / config.N)
        return row

    res = np.array(run_replicates(one, seeds, threads))
    dist = res.mean(axis=0)
    se = res.std(axis=0, ddof=1) / math.sqrt(replicates) if replicates > 1 else np.full(len(variants), math.nan)
    gaps = np.array(gaps)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gaps > 0, dist / gaps, np.nan)
    finite = ratio[np.isfinite(ratio)]
    c_hat = float(finite.max()) if finite.size else math.nan
    spread = float(finite.max() / finite.min()) if finite.size and finite.min() > 0 else math.inf
    return {"l1_gap": gaps, "event_distance": dist, "event_distance_se": se, "ratio": ratio,
            "C_hat": c_hat, "ratio_spread": spread}


def truncation_ladder(kernels: KernelMatrix, horizons: Sequence[float]) -> list:
    """Copies of a kernel matrix with every entry truncated at each horizon."""
    return [KernelMatrix(tuple(tuple(truncated(ker, h) if not ker.is_zero else ker for ker in row)
                               for row in kernels.entries), kernels.scale) for h in horizons]


# ---------------------------------------------------------------------------
# time rescaling


def rescaling_test(log: EventLog, config: NetworkConfig, population: int = 0, unit: int = 0,
                   min_events: int = 100, compensated: np.ndarray | None = None) -> dict:
    """KS test of the time-rescaled inter-event gaps of one unit against Exp(1).

    ``compensated`` overrides the integrated intensity at the unit's events
    (used to check the power of the test on corrupted inputs).
    """
    if compensated is None:
        times, comp, _ = compensator(log, config, population, unit)
    else:
        comp = np.asarray(compensated, dtype=float)
    if comp.size < min_events:
        raise ValueError(f"need at least {min_events} events, got {comp.size}")
    gaps = np.diff(np.concatenate([[0.0], comp]))
    res = stats.kstest(gaps, "expon")
    return {"ks_statistic": float(res.statistic), "p_value": float(res.pvalue), "n": int(gaps.size)}
