"""Exact event-driven simulation of age dependent Hawkes networks.

Units are grouped into populations. Every unit of population k has rate
psi_k(X^k_t, A_t) where A is the unit's own age and X^k is the memory shared
by the population:

    X^k_t = sum_l scale * sum_{events tau of pop l, tau < t} h_kl(t - tau) + R^k_t.

Sampling is by thinning of the per-unit PRMs (see :mod:`agehawkes.prm`): over
a look-ahead window a majorant of every population's intensity is derived,
the PRM points below it are fetched, and a point (s, z) of unit i is accepted
iff z <= psi(X_{s-}, A_{s-}). After each accepted event the window restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cascade import CascadeState, init_from_point_measure, taylor_weights
from .kernels import KernelMatrix, KernelSpec
from .prm import StreamSet
from .rates import ModelError, RateSpec

__all__ = [
    "AgeLaw",
    "InitialSignal",
    "Population",
    "NetworkConfig",
    "EventLog",
    "ExplosionError",
    "simulate",
    "simulate_frozen",
    "intensity_trace",
    "memory_trace",
    "compensator",
    "simulate_dominating",
    "domination_bound_check",
    "envelope_sum",
    "time_average",
]

_AGE_TAG = 0xA6E
_EPS = 1e-12


class ExplosionError(RuntimeError):
    """More accepted events than the configured cap."""


# ---------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class AgeLaw:
    """Law of the initial ages A_0 of a population.

    kinds: ``point_mass`` (value), ``exponential`` (rate), ``uniform``
    (a_max) and ``empirical`` (ages, drawn uniformly).
    """

    kind: str = "point_mass"
    value: float = 0.0
    rate: float = 1.0
    a_max: float = 1.0
    ages: tuple = ()
    salt: int = 0

    def __post_init__(self):
        if self.kind not in ("point_mass", "exponential", "uniform", "empirical"):
            raise ValueError(f"unknown age law {self.kind!r}")
        if self.kind == "point_mass" and self.value < 0:
            raise ValueError("initial age must be nonnegative")
        if self.kind == "exponential" and self.rate <= 0:
            raise ValueError("exponential age law needs a positive rate")
        if self.kind == "uniform" and self.a_max <= 0:
            raise ValueError("uniform age law needs a_max > 0")
        if self.kind == "empirical":
            if not self.ages or min(self.ages) < 0:
                raise ValueError("empirical age law needs a non-empty list of nonnegative ages")
            object.__setattr__(self, "ages", tuple(float(a) for a in self.ages))

    def sample(self, u):
        """Inverse-CDF transform of uniforms u in (0, 1)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "point_mass":
            return np.full(u.shape, float(self.value))
        if self.kind == "exponential":
            return -np.log1p(-u) / self.rate
        if self.kind == "uniform":
            return u * self.a_max
        ages = np.asarray(self.ages)
        return ages[np.minimum((u * len(ages)).astype(int), len(ages) - 1)]

    def density(self, a):
        """Lebesgue density (zero for atomic laws)."""
        a = np.asarray(a, dtype=float)
        if self.kind == "exponential":
            return np.where(a >= 0, self.rate * np.exp(-self.rate * np.maximum(a, 0)), 0.0)
        if self.kind == "uniform":
            return np.where((a >= 0) & (a <= self.a_max), 1.0 / self.a_max, 0.0)
        return np.zeros_like(a)

    def survival(self, a):
        """P(A_0 >= a)."""
        a = np.asarray(a, dtype=float)
        if self.kind == "point_mass":
            return (self.value >= a).astype(float)
        if self.kind == "exponential":
            return np.exp(-self.rate * np.maximum(a, 0.0))
        if self.kind == "uniform":
            return np.clip(1.0 - a / self.a_max, 0.0, 1.0)
        ages = np.asarray(self.ages)
        return (ages[None, :] >= np.atleast_1d(a)[:, None]).mean(axis=1).reshape(a.shape)

    @property
    def atoms(self):
        """(ages, weights) of the atomic part."""
        if self.kind == "point_mass":
            return np.array([self.value]), np.array([1.0])
        if self.kind == "empirical":
            vals, counts = np.unique(self.ages, return_counts=True)
            return vals, counts / counts.sum()
        return np.empty(0), np.empty(0)

    @property
    def is_smooth(self) -> bool:
        return self.kind in ("exponential", "uniform")


@dataclass(frozen=True)
class InitialSignal:
    """Initial signal R^k_t of a population.

    kinds: ``zero``; ``exponential`` (amplitude * exp(-rate t)); ``explicit``
    (piecewise-linear through (grid, values), zero after the last grid
    point); ``inherited`` (past events at times <= 0 of the source
    populations, propagated through the kernel row).
    """

    kind: str = "zero"
    amplitude: float = 0.0
    rate: float = 1.0
    grid: tuple = ()
    values: tuple = ()
    point_times: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("zero", "exponential", "explicit", "inherited"):
            raise ValueError(f"unknown initial signal kind {self.kind!r}")
        if self.kind == "exponential" and self.rate < 0:
            raise ValueError("exponential signal needs a nonnegative rate")
        if self.kind == "explicit":
            if len(self.grid) != len(self.values) or len(self.grid) < 2:
                raise ValueError("explicit signal needs matching grid/values of length >= 2")
            if self.grid[0] != 0 or np.any(np.diff(self.grid) <= 0):
                raise ValueError("explicit signal grid must start at 0 and increase")
        if self.kind == "inherited":
            pts = {int(k): np.asarray(v, dtype=float) for k, v in self.point_times.items()}
            if any(np.any(v > 0) for v in pts.values()):
                raise ValueError("inherited point times must be <= 0")
            object.__setattr__(self, "point_times", pts)

    def direct(self, t):
        """The part of R that does not go through the kernels."""
        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            return self.amplitude * np.exp(-self.rate * t)
        if self.kind == "explicit":
            return np.interp(t, self.grid, self.values, right=0.0)
        return np.zeros_like(t)

    def direct_sup(self, t1: float, t2: float) -> float:
        """sup of |direct part| over [t1, t2]."""
        if self.kind == "exponential":
            return abs(self.amplitude) * math.exp(-self.rate * t1)
        if self.kind == "explicit":
            g = np.asarray(self.grid)
            inside = (g > t1) & (g < t2)
            pts = np.concatenate([self.direct(np.array([t1, t2])), np.asarray(self.values)[inside]])
            return float(np.max(np.abs(pts)))
        return 0.0

    def integral_abs(self, T: float, n: int = 4001) -> float:
        """int_0^T |R_t| dt for the direct part (the integrability proxy)."""
        if self.kind in ("zero", "inherited"):
            return 0.0
        if self.kind == "exponential":
            if self.rate == 0:
                return abs(self.amplitude) * T
            return abs(self.amplitude) * (1 - math.exp(-self.rate * T)) / self.rate
        t = np.union1d(np.linspace(0, T, n), np.asarray(self.grid)[np.asarray(self.grid) <= T])
        return float(np.trapezoid(np.abs(self.direct(t)), t))


@dataclass(frozen=True)
class Population:
    size: int
    rate: RateSpec
    initial_signal: InitialSignal = InitialSignal()
    initial_age: AgeLaw = AgeLaw()
    name: str = ""

    def __post_init__(self):
        if self.size < 0:
            raise ValueError("population size must be nonnegative")


@dataclass(frozen=True)
class NetworkConfig:
    """A population-structured network.

    ``mode='mean_field'`` scales every kernel by 1/N; ``'finite'`` uses
    ``kernels.scale``. ``lookahead`` is the thinning window width (default
    0.1 * min(1/nu, delta, 1)). ``prehistory`` replaces the pre-zero PRM
    integral in the dominating process.
    """

    populations: tuple
    kernels: KernelMatrix
    horizon: float
    mode: str = "finite"
    strip_height: float | None = None
    prm_window: float = 1.0
    lookahead: float | None = None
    max_events: int = 10_000_000
    prehistory: float = 0.0

    def __post_init__(self):
        pops = tuple(self.populations)
        object.__setattr__(self, "populations", pops)
        if self.mode not in ("finite", "mean_field"):
            raise ValueError("mode must be 'finite' or 'mean_field'")
        if sum(p.size for p in pops) <= 0:
            raise ValueError("total network size must be positive")
        if self.kernels.size != len(pops):
            raise ValueError("kernel matrix size must equal the number of populations")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        bad = self.kernels.check()
        if bad:
            raise ValueError(f"kernels {bad} fail the integrability check")

    @property
    def N(self) -> int:
        return sum(p.size for p in self.populations)

    @property
    def n_populations(self) -> int:
        return len(self.populations)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([p.size for p in self.populations], dtype=int)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def scale(self) -> float:
        return 1.0 / self.N if self.mode == "mean_field" else float(self.kernels.scale)

    @property
    def fractions(self) -> np.ndarray:
        return self.sizes / self.N

    def default_lookahead(self) -> float:
        if self.lookahead is not None:
            return float(self.lookahead)
        cands = [1.0]
        for row in self.kernels.entries:
            for ker in row:
                if ker.kind == "erlang" and not ker.is_zero:
                    cands.append(1.0 / ker.nu)
        for p in self.populations:
            if p.rate.delta > 0:
                cands.append(p.rate.delta)
        return 0.1 * min(cands)

    def default_strip_height(self) -> float:
        if self.strip_height is not None:
            return float(self.strip_height)
        return 16.0 * max(p.rate.lipschitz_L for p in self.populations)

    def streams(self, seed: int) -> StreamSet:
        return StreamSet(seed, strip_height=self.default_strip_height(), window=self.prm_window)

    def with_(self, **changes) -> "NetworkConfig":
        from dataclasses import replace

        return replace(self, **changes)


# ---------------------------------------------------------------------------
# event log


@dataclass
class EventLog:
    """Time-ordered events (time, population, unit) plus final state and audit counters."""

    times: np.ndarray
    populations: np.ndarray
    units: np.ndarray
    horizon: float
    sizes: np.ndarray
    initial_ages: list
    final_ages: np.ndarray | None = None
    final_memory: np.ndarray | None = None
    audit: dict = field(default_factory=dict)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def global_units(self) -> np.ndarray:
        return self.offsets[self.populations] + self.units

    def unit_times(self, population: int, unit: int) -> np.ndarray:
        mask = (self.populations == population) & (self.units == unit)
        return self.times[mask]

    def population_times(self, population: int) -> np.ndarray:
        return self.times[self.populations == population]

    def __len__(self) -> int:
        return len(self.times)

    def records(self):
        return list(zip(self.times.tolist(), self.populations.tolist(), self.units.tolist()))

    def ages_at(self, t: float) -> np.ndarray:
        """Left-limit ages of all units at time t (global unit order)."""
        n = int(self.sizes.sum())
        ages = np.concatenate(self.initial_ages) + t
        g = self.global_units
        mask = self.times < t
        last = np.full(n, -np.inf)
        np.maximum.at(last, g[mask], self.times[mask])
        has = np.isfinite(last)
        ages[has] = t - last[has]
        return ages


def initial_ages(config: NetworkConfig, streams: StreamSet) -> list:
    """Per-population arrays of A_0, drawn from each unit's auxiliary stream."""
    out = []
    for k, pop in enumerate(config.populations):
        u = streams.aux_uniform(k, np.arange(pop.size), _AGE_TAG + pop.initial_age.salt)
        out.append(pop.initial_age.sample(u))
    return out


# ---------------------------------------------------------------------------
# memory


class _Memory:
    """Incremental X^k: Erlang cascades where possible, event-history scans otherwise."""

    def __init__(self, config: NetworkConfig):
        self.config = config
        K = config.n_populations
        self.K = K
        scale = config.scale
        self.cascades = {}
        self.general = {}
        self.past = {}
        self.history = [[] for _ in range(K)]
        for k in range(K):
            sig = config.populations[k].initial_signal
            for l in range(K):
                ker = config.kernels[k, l]
                past = sig.point_times.get(l, np.empty(0)) if sig.kind == "inherited" else np.empty(0)
                if ker.is_zero:
                    continue
                if ker.is_erlang:
                    self.cascades[k, l] = init_from_point_measure(past, ker.n, ker.nu, ker.b * scale)
                else:
                    self.general[k, l] = ker
                    self.past[k, l] = np.asarray(past, dtype=float)
        self.hist_arr = [np.empty(0) for _ in range(K)]
        self._dirty = [False] * K

    def _hist(self, l):
        if self._dirty[l]:
            self.hist_arr[l] = np.asarray(self.history[l])
            self._dirty[l] = False
        return self.hist_arr[l]

    def advance_to(self, t: float):
        for c in self.cascades.values():
            c.advance_to(t)

    def on_event(self, t: float, l: int):
        for (k, src), c in self.cascades.items():
            if src == l:
                c.advance_to(t)
                c.on_event()
        self.history[l].append(t)
        self._dirty[l] = True

    def _general_sum(self, k, l, ker, s, envelope=False):
        scale = self.config.scale
        hist = self._hist(l)
        past = self.past[k, l]
        s = np.atleast_1d(np.asarray(s, dtype=float))
        total = np.zeros_like(s)
        lo_t = float(np.min(s)) - ker.horizon
        for src in (past, hist):
            if src.size == 0:
                continue
            i0 = np.searchsorted(src, lo_t, side="left")
            ev = src[i0:]
            if ev.size == 0:
                continue
            lag = s[:, None] - ev[None, :]
            ok = (lag > 0) & (lag <= ker.horizon)
            lag = np.where(ok, lag, 0.0)
            vals = ker.envelope(lag) if envelope else ker.eval(lag)
            total += np.sum(np.where(ok, vals, 0.0), axis=1)
        return scale * total

    def x(self, k: int, s):
        """X^k at times s, assuming no events between the last update and s."""
        s = np.asarray(s, dtype=float)
        out = np.asarray(self.config.populations[k].initial_signal.direct(s), dtype=float).copy()
        for (kk, l), c in self.cascades.items():
            if kk == k:
                out = out + c.x0_at(s)
        for (kk, l), ker in self.general.items():
            if kk == k:
                out = out + self._general_sum(k, l, ker, s).reshape(out.shape)
        return out

    def bound(self, k: int, t: float, width: float) -> float:
        """Upper bound on |X^k| over [t, t + width] with no new events."""
        total = self.config.populations[k].initial_signal.direct_sup(t, t + width)
        for (kk, l), c in self.cascades.items():
            if kk == k:
                total += c.abs_bound(t + width - c.last_update)
        for (kk, l), ker in self.general.items():
            if kk == k:
                total += float(self._general_sum(k, l, ker, [t], envelope=True)[0])
        return total


# ---------------------------------------------------------------------------
# simulation


def simulate(config: NetworkConfig, streams: StreamSet | int, *, audit_candidates: bool = False) -> EventLog:
    """Sample the network on [0, horizon] by thinning the shared PRMs.

    ``streams`` may be a seed. With ``audit_candidates`` the evaluated
    candidates (time, population, unit, mark, intensity, memory) are kept
    in ``log.audit['candidates']``.
    """
    if not isinstance(streams, StreamSet):
        streams = config.streams(streams)
    pops = config.populations
    K = config.n_populations
    T = config.horizon
    w = config.default_lookahead()
    if config.lookahead is None and _width_free(config):
        # the majorant does not tighten with a narrower window
        w = max(w, streams.window)
    L_of = np.array([p.rate.lipschitz_L for p in pops])
    A0 = initial_ages(config, streams)
    last = [np.full(p.size, np.nan) for p in pops]
    unit_ids = [np.arange(p.size) for p in pops]
    mem = _Memory(config)
    hard = [p.rate.form == "hard_refractory" and p.rate.delta > 0 for p in pops]

    ev_t, ev_k, ev_u = [], [], []
    n_cand = 0
    sublinear_viol = 0
    worst_ratio = 0.0
    cand_log = [] if audit_candidates else None
    t = 0.0

    while t < T:
        start = t
        if all(hard[k] or pops[k].size == 0 for k in range(K)):
            # nobody can fire before its refractory window ends
            start = max(t, min(_eligible_from(last[k], A0[k], pops[k].rate.delta) for k in range(K) if pops[k].size))
            if start >= T:
                break
        end = min(start + w, T)
        mem.advance_to(start)
        cts, czs, cks, cus, cms = [], [], [], [], []
        for k in range(K):
            if pops[k].size == 0:
                continue
            xb = mem.bound(k, start, end - start)
            M = float(pops[k].rate.sublinear_majorant(xb))
            if not M > 0:
                continue
            ct, cz, cu = streams.points(k, unit_ids[k], start, end, M)
            if ct.size:
                cts.append(ct); czs.append(cz); cus.append(cu)
                cks.append(np.full(ct.size, k)); cms.append(np.full(ct.size, M))
        if not cts:
            t = end
            continue
        ct = np.concatenate(cts); cz = np.concatenate(czs); ck = np.concatenate(cks)
        cu = np.concatenate(cus); cm = np.concatenate(cms)
        if len(cts) > 1:
            order = np.lexsort((cu, ck, ct))
            ct, cz, ck, cu, cm = ct[order], cz[order], ck[order], cu[order], cm[order]

        # evaluate in growing chunks; everything after the first acceptance is discarded
        lo, chunk, stop = 0, 16, -1
        while lo < ct.size:
            hi = min(lo + chunk, ct.size)
            sl = slice(lo, hi)
            lam = np.empty(hi - lo)
            xs = np.empty(hi - lo)
            kk, uu, tt = ck[sl], cu[sl], ct[sl]
            for k in (np.unique(kk) if len(cts) > 1 else (kk[0],)):
                sel = kk == k
                tk = tt[sel]
                lu = last[k][uu[sel]]
                age = np.where(np.isnan(lu), A0[k][uu[sel]] + tk, tk - lu)
                x = mem.x(k, tk)
                xs[sel] = x
                lam[sel] = pops[k].rate.psi_eval(x, age)
            accepted = cz[sl] <= lam
            n_seen = int(np.argmax(accepted)) + 1 if accepted.any() else hi - lo
            seen = slice(0, n_seen)
            n_cand += n_seen
            mj = cm[sl][seen]
            if np.any(lam[seen] > mj * (1 + 1e-9) + _EPS):
                i = int(np.argmax(lam[seen] - mj))
                raise ModelError(
                    f"intensity {lam[i]:.6g} exceeds thinning majorant {mj[i]:.6g} at t={tt[i]:.6g}; "
                    "declared rate bounds are wrong"
                )
            sub = L_of[kk[seen]] * (1 + np.abs(xs[seen]))
            sublinear_viol += int(np.sum(lam[seen] > sub * (1 + 1e-12) + _EPS))
            worst_ratio = max(worst_ratio, float(np.max(lam[seen] / sub)))
            if cand_log is not None:
                cand_log.append(np.column_stack([tt[seen], kk[seen], uu[seen], cz[sl][seen], lam[seen], xs[seen]]))
            if accepted.any():
                stop = lo + n_seen - 1
                break
            lo = hi
            chunk *= 2
        if stop < 0:
            t = end
            continue
        tau, k, u = float(ct[stop]), int(ck[stop]), int(cu[stop])
        ev_t.append(tau); ev_k.append(k); ev_u.append(u)
        if len(ev_t) > config.max_events:
            raise ExplosionError(f"more than {config.max_events} events before t={tau:.6g}")
        last[k][u] = tau
        mem.on_event(tau, k)
        t = tau

    mem.advance_to(T)
    final_ages = np.concatenate([
        np.where(np.isnan(last[k]), A0[k] + T, T - last[k]) for k in range(K)
    ])
    final_mem = np.array([float(mem.x(k, T)) for k in range(K)])
    audit = {
        "candidates_evaluated": n_cand,
        "sublinear_violations": sublinear_viol,
        "max_intensity_to_sublinear_ratio": worst_ratio,
    }
    if cand_log is not None:
        audit["candidates"] = np.concatenate(cand_log) if cand_log else np.empty((0, 6))
    return EventLog(
        np.asarray(ev_t, dtype=float), np.asarray(ev_k, dtype=int), np.asarray(ev_u, dtype=int),
        T, config.sizes, A0, final_ages, final_mem, audit,
    )


def _width_free(config: NetworkConfig) -> bool:
    """True when the window majorant is the same for every window width."""
    for row in config.kernels.entries:
        for ker in row:
            if ker.is_erlang and ker.n > 0 and not ker.is_zero:
                return False
    return all(p.initial_signal.kind != "explicit" for p in config.populations)


def _eligible_from(last, a0, delta):
    """Earliest time any unit of the population is out of its refractory window."""
    t_next = np.where(np.isnan(last), delta - a0, last + delta)
    return float(np.min(t_next)) if t_next.size else math.inf


# ---------------------------------------------------------------------------
# oracle paths (recompute from the log)


def memory_trace(log: EventLog, config: NetworkConfig, grid) -> np.ndarray:
    """X^k at the grid times (left limits), by direct summation over the log."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    K = config.n_populations
    scale = config.scale
    out = np.zeros((grid.size, K))
    for k in range(K):
        sig = config.populations[k].initial_signal
        out[:, k] = sig.direct(grid)
        for l in range(K):
            ker = config.kernels[k, l]
            if ker.is_zero:
                continue
            src = [log.population_times(l)]
            if sig.kind == "inherited" and l in sig.point_times:
                src.append(sig.point_times[l])
            ev = np.sort(np.concatenate(src))
            for start in range(0, grid.size, 256):
                g = grid[start:start + 256]
                lag = g[:, None] - ev[None, :]
                ok = lag > 0
                vals = ker.eval(np.where(ok, lag, 0.0))
                out[start:start + 256, k] += scale * np.sum(np.where(ok, vals, 0.0), axis=1)
    return out


def intensity_trace(log: EventLog, config: NetworkConfig, grid) -> np.ndarray:
    """Left-limit intensities lambda^i at grid times, shape (len(grid), N), from the log."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size and (grid.min() < 0 or grid.max() > log.horizon + 1e-12):
        raise ValueError("grid must lie within [0, horizon]")
    X = memory_trace(log, config, grid)
    out = np.empty((grid.size, config.N))
    pop_of = np.repeat(np.arange(config.n_populations), config.sizes)
    for gi, t in enumerate(grid):
        ages = log.ages_at(t)
        for k, pop in enumerate(config.populations):
            sel = pop_of == k
            out[gi, sel] = pop.rate.psi_eval(X[gi, k], ages[sel])
    return out


def compensator(log: EventLog, config: NetworkConfig, population: int, unit: int,
                nodes: int = 8, max_step: float = 0.25):
    """Integrated intensity of one unit at each of its event times.

    Gauss-Legendre quadrature on pieces cut at every network event, at the
    unit's refractory boundary and at most ``max_step`` long. Returns
    (event_times, Lambda(event_times), Lambda(horizon)).
    """
    T = log.horizon
    rate = config.populations[population].rate
    own = log.unit_times(population, unit)
    cuts = [0.0, T]
    cuts.extend(log.times.tolist())
    a0 = float(log.initial_ages[population][unit])
    if rate.delta > 0:
        cuts.append(rate.delta - a0)
        cuts.extend((own + rate.delta).tolist())
    cuts = np.unique(np.clip(np.asarray(cuts), 0.0, T))
    # subdivide long pieces
    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        m = max(1, int(math.ceil((hi - lo) / max_step)))
        edges = np.linspace(lo, hi, m + 1)
        pieces.append(np.column_stack([edges[:-1], edges[1:]]))
    pieces = np.concatenate(pieces)
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    mid = 0.5 * (pieces[:, 0] + pieces[:, 1])
    half = 0.5 * (pieces[:, 1] - pieces[:, 0])
    s = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    X = _replay_memory(log, config, population, s)
    idx = np.searchsorted(own, s, side="left") - 1
    age = np.where(idx >= 0, s - own[np.maximum(idx, 0)], a0 + s)
    lam = np.asarray(rate.psi_eval(X, age), dtype=float).reshape(-1, nodes)
    piece_int = half * (lam @ wg)
    cum = np.concatenate([[0.0], np.cumsum(piece_int)])
    ends = np.concatenate([[0.0], pieces[:, 1]])
    at_events = np.interp(own, ends, cum)
    return own, at_events, float(cum[-1])


def _replay_memory(log: EventLog, config: NetworkConfig, k: int, s) -> np.ndarray:
    """X^k at sorted-or-not times s (left limits) by replaying the log through the memory."""
    s = np.asarray(s, dtype=float)
    order = np.argsort(s, kind="stable")
    ss = s[order]
    out = np.empty_like(ss)
    K = config.n_populations
    scale = config.scale
    sig = config.populations[k].initial_signal
    out[:] = sig.direct(ss)
    for l in range(K):
        ker = config.kernels[k, l]
        if ker.is_zero:
            continue
        ev = log.population_times(l)
        past = sig.point_times.get(l, np.empty(0)) if sig.kind == "inherited" else np.empty(0)
        if ker.is_erlang:
            out += _erlang_replay(ev, past, ker, scale, ss)
        else:
            allev = np.sort(np.concatenate([past, ev]))
            for start in range(0, ss.size, 512):
                g = ss[start:start + 512]
                i0 = np.searchsorted(allev, g[0] - ker.horizon)
                i1 = np.searchsorted(allev, g[-1], side="left")
                e = allev[i0:i1]
                lag = g[:, None] - e[None, :]
                ok = (lag > 0) & (lag <= ker.horizon)
                vals = ker.eval(np.where(ok, lag, 0.0))
                out[start:start + 512] += scale * np.sum(np.where(ok, vals, 0.0), axis=1)
    res = np.empty_like(out)
    res[order] = out
    return res


def _erlang_replay(ev, past, ker, scale, ss):
    """Cascade X^(0) at sorted times ss given event times ev (left limits)."""
    c = init_from_point_measure(past, ker.n, ker.nu, ker.b * scale)
    states = np.empty((ev.size + 1, ker.n + 1))
    stamps = np.empty(ev.size + 1)
    states[0] = c.coords
    stamps[0] = 0.0
    for i, tau in enumerate(ev):
        c.advance_to(tau)
        c.on_event()
        states[i + 1] = c.coords
        stamps[i + 1] = tau
    # the state after event i applies to times strictly greater than ev[i]
    idx = np.searchsorted(ev, ss, side="left")
    lag = ss - stamps[idx]
    w = taylor_weights(lag, ker.n)
    return np.exp(-ker.nu * lag) * np.einsum("ij,ij->i", w, states[idx])


# ---------------------------------------------------------------------------
# frozen-memory units (limit processes)


def simulate_frozen(rate: RateSpec, grid, x_grid, streams: StreamSet, population: int,
                    units, a0, horizon: float | None = None):
    """Units with deterministic memory x(t) (linear interpolation of x_grid).

    Each unit is driven by its own PRM pi^{population, unit}; same
    acceptance rule as :func:`simulate`, vectorised across units. Returns
    a list of per-unit event-time arrays.
    """
    grid = np.asarray(grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    units = np.asarray(units, dtype=np.int64)
    a0 = np.asarray(a0, dtype=float)
    T = float(grid[-1] if horizon is None else horizon)
    W = streams.window
    n = units.size
    pos = np.full(int(units.max()) + 1 if n else 0, -1, dtype=np.int64)
    pos[units] = np.arange(n)
    last = np.full(n, np.nan)
    out_t, out_u = [], []
    t0 = 0.0
    while t0 < T:
        t1 = min(t0 + W, T)
        inside = (grid > t0) & (grid < t1)
        xs = np.concatenate([np.interp([t0, t1], grid, x_grid), x_grid[inside]])
        M = float(rate.sublinear_majorant(float(np.max(np.abs(xs)))))
        if M > 0:
            ct, cz, cu = streams.points(population, units, t0, t1, M)
            if ct.size:
                p = pos[cu]
                order = np.lexsort((ct, p))
                ct, cz, p = ct[order], cz[order], p[order]
                starts = np.searchsorted(p, np.arange(n), side="left")
                counts = np.searchsorted(p, np.arange(n), side="right") - starts
                x_c = np.interp(ct, grid, x_grid)
                for r in range(int(counts.max())):
                    who = np.nonzero(counts > r)[0]
                    idx = starts[who] + r
                    tt = ct[idx]
                    lu = last[who]
                    age = np.where(np.isnan(lu), a0[who] + tt, tt - lu)
                    lam = np.asarray(rate.psi_eval(x_c[idx], age), dtype=float)
                    if np.any(lam > M * (1 + 1e-9) + _EPS):
                        raise ModelError("frozen-memory intensity exceeds its majorant")
                    acc = cz[idx] <= lam
                    if acc.any():
                        last[who[acc]] = tt[acc]
                        out_t.append(tt[acc])
                        out_u.append(who[acc])
        t0 = t1
    if out_t:
        tt = np.concatenate(out_t)
        uu = np.concatenate(out_u)
        order = np.lexsort((tt, uu))
        tt, uu = tt[order], uu[order]
        splits = np.searchsorted(uu, np.arange(1, n))
        return np.split(tt, splits)
    return [np.empty(0) for _ in range(n)]


# ---------------------------------------------------------------------------
# domination


def envelope_sum(ker: KernelSpec, start: float, delta: float) -> float:
    """sum_{k >= 0} envelope(start + k delta), truncated at the kernel horizon."""
    if delta <= 0:
        raise ValueError("refractory length must be positive")
    if ker.is_zero:
        return 0.0
    if ker.is_erlang and ker.n == 0:
        q = math.exp(-ker.nu * delta)
        return float(ker.envelope(start)) / (1 - q)
    kmax = int(math.floor(max(ker.horizon - start, 0.0) / delta))
    if kmax > 50_000_000:
        raise ValueError("envelope series too long")
    return float(np.sum(ker.envelope(start + np.arange(kmax + 1) * delta)))


@dataclass
class _Envelope:
    """Aggregate envelope hbar = sum over all unit pairs of the scaled kernel envelopes."""

    parts: list  # (multiplicity * scale, kernel)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return sum(w * np.asarray(ker.envelope(t)) for w, ker in self.parts) if self.parts else np.zeros_like(t)

    def series(self, delta: float) -> float:
        return sum(w * envelope_sum(ker, delta, delta) for w, ker in self.parts)

    @property
    def horizon(self) -> float:
        return max((ker.horizon for _, ker in self.parts), default=0.0)


def _aggregate_envelope(config: NetworkConfig) -> _Envelope:
    sizes = config.sizes
    parts = []
    for k in range(config.n_populations):
        for l in range(config.n_populations):
            ker = config.kernels[k, l]
            if not ker.is_zero and sizes[k] and sizes[l]:
                parts.append((float(sizes[k] * sizes[l]) * config.scale, ker))
    return _Envelope(parts)


def dominating_constants(config: NetworkConfig) -> dict:
    """L, K, delta, C and the constant offset used by the dominating process."""
    rates = [p.rate for p in config.populations if p.size]
    delta = min(r.delta for r in rates)
    if delta <= 0:
        raise ValueError("dominating process needs a positive refractory length")
    L = max(r.lipschitz_L for r in rates)
    K = max(r.postjump_bound_K for r in rates)
    if not math.isfinite(K):
        raise ValueError("dominating process needs a finite post-jump bound K")
    env = _aggregate_envelope(config)
    series = env.series(delta)
    if not math.isfinite(series):
        raise ValueError("sum_k hbar(k delta) diverges")
    C = max(1.0 + series, K)
    T = config.horizon
    signal = max(p.initial_signal.direct_sup(0.0, T) for p in config.populations)
    inherited = 0.0
    for k, p in enumerate(config.populations):
        sig = p.initial_signal
        if sig.kind == "inherited":
            bound = 0.0
            for l, pts in sig.point_times.items():
                ker = config.kernels[k, l]
                if pts.size and not ker.is_zero:
                    bound += config.scale * float(np.sum(ker.envelope(-pts)))
            inherited = max(inherited, bound)
    return {"L": L, "K": K, "delta": delta, "C": C, "offset": config.prehistory + signal + inherited,
            "envelope": env}


def simulate_dominating(config: NetworkConfig, streams: StreamSet | int, a_hat0: float = 0.0):
    """The one-dimensional dominating process driven by the superposed unit PRMs.

    lambda_hat_t = L (C + offset + int_0^{t-} hbar(t-s) pi_NK(ds) + hbar(A_hat_t)).
    Returns (EventLog, lambda_hat_at_events) where the log's ``units``
    column holds the global index of the unit whose PRM point was accepted.
    """
    if not isinstance(streams, StreamSet):
        streams = config.streams(streams)
    cst = dominating_constants(config)
    L, K, C, off, env = cst["L"], cst["K"], cst["C"], cst["offset"], cst["envelope"]
    T = config.horizon
    W = streams.window
    pops = [(k, np.arange(p.size)) for k, p in enumerate(config.populations) if p.size]
    offsets = config.offsets
    piK = []  # times of pi_NK points seen so far (all are events)
    ev_t, ev_g, ev_lam = [], [], []
    last = None

    def lam_hat(s, right=False):
        # right=True gives the right limit (points at s itself included)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        age = s - last if last is not None else a_hat0 + s
        total = C + off + env(age)
        if piK:
            arr = np.asarray(piK)
            lag = s[:, None] - arr[None, :]
            ok = lag >= 0 if right else lag > 0
            total = total + np.sum(np.where(ok, env(np.where(ok, lag, 0.0)), 0.0), axis=1)
        return L * total

    t = 0.0
    while t < T:
        # non-increasing between events: the value just after t dominates
        M = float(lam_hat(t, right=True)[0])
        end = min(t + W, T)
        cts, czs, cgs = [], [], []
        for k, units in pops:
            ct, cz, cu = streams.points(k, units, t, end, M)
            cts.append(ct); czs.append(cz); cgs.append(offsets[k] + cu)
        ct = np.concatenate(cts); cz = np.concatenate(czs); cg = np.concatenate(cgs)
        if ct.size == 0:
            t = end
            continue
        order = np.lexsort((cg, ct))
        ct, cz, cg = ct[order], cz[order], cg[order]
        lam = lam_hat(ct)
        if np.any(lam > M * (1 + 1e-9) + _EPS):
            raise ModelError("dominating intensity increased between events")
        acc = cz <= lam
        if not acc.any():
            t = end
            continue
        i = int(np.argmax(acc))
        tau = float(ct[i])
        ev_t.append(tau); ev_g.append(int(cg[i])); ev_lam.append(float(lam[i]))
        if cz[i] <= K:
            piK.append(tau)
        if len(ev_t) > config.max_events:
            raise ExplosionError("dominating process exceeded the event cap")
        last = tau
        t = tau
    g = np.asarray(ev_g, dtype=int)
    pop = np.searchsorted(offsets, g, side="right") - 1
    log = EventLog(np.asarray(ev_t), pop, g - offsets[pop], T, config.sizes,
                   [np.full(p.size, a_hat0) for p in config.populations])
    return log, np.asarray(ev_lam)


def domination_bound_check(log: EventLog, config: NetworkConfig, streams: StreamSet,
                           target: tuple, source: tuple, t1: float, t2: float,
                           initial_bound: float = 0.0) -> dict:
    """Compare |Y_ij(t1, t2)| with its refractory-spacing bound.

    Y_ij(t1, t2) = sum over events tau of unit j in [0, t1) of scaled
    h_ij(t2 - tau). The bound is sum_{k>=0} hbar_ij(t2 - t1 + A^j_{t1} + k delta)
    + int_0^{t1 - A^j_{t1}} hbar_ij(t2 - s) pi^j_K(ds) + ``initial_bound``.
    """
    if not 0 <= t1 <= t2 <= log.horizon:
        raise ValueError("need 0 <= t1 <= t2 <= horizon")
    (ki, _), (kj, j) = target, source
    ker = config.kernels[ki, kj]
    scale = config.scale
    rate = config.populations[kj].rate
    ev = log.unit_times(kj, j)
    before = ev[ev < t1]
    lhs = abs(scale * float(np.sum(ker.eval(t2 - before)))) if before.size else 0.0
    if before.size:
        age = t1 - before[-1]
    else:
        age = float(log.initial_ages[kj][j]) + t1
    rhs = scale * envelope_sum(ker, t2 - t1 + age, rate.delta)
    Kb = rate.postjump_bound_K
    if Kb > 0:
        upper = t1 - age
        if upper > 0:
            pts = streams.unit(kj, j).truncated_events(0.0, upper, Kb)
            rhs += scale * float(np.sum(ker.envelope(t2 - pts)))
    rhs += initial_bound
    return {"lhs": lhs, "rhs": rhs, "pass": bool(lhs <= rhs + 1e-9)}


# ---------------------------------------------------------------------------
# ergodic averages


def time_average(log: EventLog, f: Callable, window: float, step: float | None = None) -> float:
    """(1/(T - window)) int_window^T f(events in (s - window, s]) ds on a midpoint grid.

    ``f`` receives the event times in the window shifted to (-window, 0]
    (and, as keyword ``log``/``mask``, the log and selection mask).
    """
    T = log.horizon
    if window > T:
        raise ValueError("horizon shorter than averaging window")
    if window == T:
        return float(f(log.times - T))
    step = window / 10 if step is None else step
    n = max(1, int(math.ceil((T - window) / step)))
    grid = window + (np.arange(n) + 0.5) * (T - window) / n
    lo = np.searchsorted(log.times, grid - window, side="right")
    hi = np.searchsorted(log.times, grid, side="right")
    vals = np.fromiter((f(log.times[a:b] - s) for a, b, s in zip(lo, hi, grid)), float, count=n)
    return float(vals.mean())
