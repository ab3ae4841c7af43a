"""Reproducible Poisson random measures on time x mark space.

Each unit owns an independent PRM with Lebesgue intensity on
(0, inf) x (0, inf). The plane is cut into cells of fixed width in time
(``window``) and fixed height in mark (``strip_height``). The points of a
cell are a pure function of ``(seed, population, unit, strip, window)``
computed with a SplitMix64 counter hash, so two simulations built from the
same seed see literally the same points no matter in which order, or up to
which mark ceiling, they query them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

__all__ = ["StreamSet", "PRMStream", "splitmix64", "uniforms"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_DOMAIN_PRM = 0x5052
_DOMAIN_AUX = 0x4155
_BLOCK = 32


def splitmix64(x):
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _combine(*parts):
    """Hash a tuple of (broadcastable) integer arrays into one uint64 key."""
    with np.errstate(over="ignore"):
        h = np.zeros(np.broadcast(*[np.asarray(p) for p in parts]).shape, dtype=np.uint64)
        for p in parts:
            p = np.asarray(p)
            if p.dtype != np.uint64:
                p = p.astype(np.int64).astype(np.uint64)
            h = splitmix64(h ^ p)
    return h


def uniforms(keys, counters):
    """Open-interval (0, 1) uniforms indexed by (key, counter)."""
    with np.errstate(over="ignore"):
        z = splitmix64(np.asarray(keys, dtype=np.uint64) + np.asarray(counters, dtype=np.uint64) * _GOLDEN)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


@dataclass
class StreamSet:
    """The family of PRMs pi^{kj} for one seed.

    Cell geometry is part of the realization: changing ``strip_height`` or
    ``window`` changes the sampled points.
    """

    seed: int
    strip_height: float = 16.0
    window: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)
    _prefix: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.strip_height <= 0 or self.window <= 0:
            raise ValueError("strip height and window width must be positive")
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        mean = self.strip_height * self.window
        kmax = int(mean + 20 * np.sqrt(mean) + 40)
        # inverse-CDF table for the cell counts; u beyond the table falls back to ppf
        self._count_cdf = stats.poisson.cdf(np.arange(kmax + 1), mean)

    def unit(self, population: int, index: int) -> "PRMStream":
        return PRMStream(self, (int(population), int(index)))

    def cells(self, population: int, units, strip: int, window: int):
        """Points of cell (strip, window) for many units of one population.

        Returns (times, marks, unit_indices) sorted by time. Cells are
        generated in blocks of consecutive windows and cached per
        (population, strip, window, units).
        """
        units = np.asarray(units, dtype=np.int64)
        ub = units.tobytes()
        key = (population, strip, window, ub)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        first = window - window % _BLOCK
        block = self._generate(population, units, ub, strip, first)
        for i, cell in enumerate(block):
            self._cache[(population, strip, first + i, ub)] = cell
        return block[window - first]

    def _generate(self, population, units, ub, strip, first):
        prefix = self._prefix.get((population, ub))
        if prefix is None:
            prefix = _combine(self.seed, _DOMAIN_PRM, population, units)
            self._prefix[(population, ub)] = prefix
        windows = first + np.arange(_BLOCK)
        cell_keys = _combine(prefix[None, :], strip, windows[:, None]).ravel()
        u = uniforms(cell_keys, 0)
        counts = np.searchsorted(self._count_cdf, u, side="left").astype(np.int64)
        tail = counts >= len(self._count_cdf)
        if tail.any():
            counts[tail] = stats.poisson.ppf(u[tail], self.strip_height * self.window).astype(np.int64)
        total = int(counts.sum())
        owner = np.repeat(np.arange(cell_keys.size), counts)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        k = cell_keys[owner]
        win = owner // len(units)
        t = (first + win + uniforms(k, 1 + 2 * offsets)) * self.window
        z = (strip + uniforms(k, 2 + 2 * offsets)) * self.strip_height
        order = np.argsort(t, kind="stable")
        t, z, who = t[order], z[order], units[owner[order] % len(units)]
        cuts = np.searchsorted(win[order], np.arange(1, _BLOCK))
        return list(zip(np.split(t, cuts), np.split(z, cuts), np.split(who, cuts)))

    def points(self, population: int, units, t1: float, t2: float, ceiling: float):
        """All points of the given units' PRMs in (t1, t2] x (0, ceiling]."""
        if ceiling <= 0 or t2 <= t1:
            return np.empty(0), np.empty(0), np.empty(0, dtype=np.int64)
        w_lo = int(max(t1, 0.0) // self.window)
        w_hi = int(np.ceil(t2 / self.window))
        n_strips = int(np.ceil(ceiling / self.strip_height))
        ts, zs, us = [], [], []
        for w in range(w_lo, w_hi):
            for s in range(n_strips):
                t, z, u = self.cells(population, units, s, w)
                lo = t.searchsorted(t1, side="right")
                hi = t.searchsorted(t2, side="right")
                if hi == lo:
                    continue
                zz = z[lo:hi]
                keep = zz <= ceiling
                ts.append(t[lo:hi][keep])
                zs.append(zz[keep])
                us.append(u[lo:hi][keep])
        if len(ts) == 1:
            return ts[0], zs[0], us[0]
        if not ts:
            return np.empty(0), np.empty(0), np.empty(0, dtype=np.int64)
        t = np.concatenate(ts)
        order = np.argsort(t, kind="stable")
        return t[order], np.concatenate(zs)[order], np.concatenate(us)[order]

    def aux_uniform(self, population: int, units, tag: int, counter=0):
        """Per-unit auxiliary uniforms (initial ages and similar), independent of the PRM cells."""
        keys = _combine(self.seed, _DOMAIN_AUX, population, np.asarray(units), tag)
        return uniforms(keys, counter)

    def clear(self):
        self._cache.clear()


@dataclass(frozen=True)
class PRMStream:
    """The PRM of a single unit, a view into a :class:`StreamSet`."""

    streams: StreamSet
    unit_key: tuple

    def points_in(self, t1: float, t2: float, mark_ceiling: float):
        """Points in (t1, t2] x (0, mark_ceiling], as an (m, 2) array of (time, mark) sorted by time."""
        if t1 >= t2:
            raise ValueError("points_in needs t1 < t2")
        if mark_ceiling < 0:
            raise ValueError("mark ceiling must be nonnegative")
        k, j = self.unit_key
        t, z, _ = self.streams.points(k, [j], t1, t2, mark_ceiling)
        return np.column_stack([t, z])

    def truncated_events(self, t1: float, t2: float, K: float):
        """Times of the points with mark <= K in (t1, t2]."""
        if K <= 0:
            return np.empty(0)
        return self.points_in(t1, t2, K)[:, 0]
