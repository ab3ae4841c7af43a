"""Markovian completion of Erlang-kernel memory.

For h(t) = b t^n e^{-nu t} / n! the convolution X = sum_tau h(t - tau) is the
first coordinate of the linear system

    dX^(k) = (-nu X^(k) + X^(k+1)) dt,   k < n
    dX^(n) = -nu X^(n) dt + b dZ

whose flow over a gap s is the Jordan-block exponential

    X^(k)(t+s) = e^{-nu s} sum_{m=0}^{n-k} s^m/m! X^(k+m)(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

__all__ = ["CascadeState", "init_from_point_measure", "flow_matrix", "taylor_weights"]

MAX_ORDER = 64


def taylor_weights(s, n: int):
    """Array [..., m] of s^m / m! for m = 0..n, by running products."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape + (n + 1,))
    out[..., 0] = 1.0
    for m in range(1, n + 1):
        out[..., m] = out[..., m - 1] * s / m
    return out


def _scalar_taylor(s: float, n: int) -> np.ndarray:
    out = [1.0]
    for m in range(1, n + 1):
        out.append(out[-1] * s / m)
    return np.array(out)


def flow_matrix(s: float, nu: float, n: int) -> np.ndarray:
    """exp(s J) for the (n+1)x(n+1) cascade generator J."""
    w = taylor_weights(s, n)
    mat = np.zeros((n + 1, n + 1))
    for m in range(n + 1):
        idx = np.arange(n + 1 - m)
        mat[idx, idx + m] = w[m]
    return math.exp(-nu * s) * mat


@dataclass
class CascadeState:
    """Coordinates (X^(0), ..., X^(n)) of one Erlang block at time ``last_update``."""

    coords: np.ndarray
    nu: float
    b: float
    last_update: float = 0.0

    def __post_init__(self):
        self.coords = np.array(self.coords, dtype=float)
        if self.coords.ndim != 1 or not 1 <= len(self.coords) <= MAX_ORDER + 1:
            raise ValueError(f"cascade order must be in [0, {MAX_ORDER}]")
        if self.nu <= 0:
            raise ValueError("decay rate nu must be positive")

    @classmethod
    def zeros(cls, n: int, nu: float, b: float, t: float = 0.0) -> "CascadeState":
        return cls(np.zeros(n + 1), nu, b, t)

    @property
    def n(self) -> int:
        return len(self.coords) - 1

    @property
    def x0(self) -> float:
        return float(self.coords[0])

    def copy(self) -> "CascadeState":
        return CascadeState(self.coords.copy(), self.nu, self.b, self.last_update)

    def advance(self, dt: float, source_rate: float = 0.0) -> "CascadeState":
        """Flow forward by ``dt`` in place.

        ``source_rate`` adds a constant inflow b * rate * dt into X^(n) over the
        step, integrated exactly (used by the mean-field solvers).
        """
        if dt < 0:
            raise ValueError("cannot advance a cascade backwards")
        if dt == 0:
            return self
        n = self.n
        decay = math.exp(-self.nu * dt)
        if n == 0:
            new = self.coords * decay
        else:
            w = _scalar_taylor(dt, n)
            # new[k] = sum_m w[m] coords[k + m]
            new = np.convolve(self.coords[::-1], w)[: n + 1][::-1] * decay
        if source_rate:
            # int_0^dt e^{-nu u} u^m/m! du = P(m+1, nu dt) / nu^{m+1}
            m = np.arange(n + 1)
            inflow = gammainc(m + 1, self.nu * dt) / self.nu ** (m + 1)
            new += self.b * source_rate * inflow[::-1]
        self.coords = new
        self.last_update += dt
        return self

    def advance_to(self, t: float, source_rate: float = 0.0) -> "CascadeState":
        return self.advance(t - self.last_update, source_rate)

    def on_event(self, weight: float = 1.0) -> "CascadeState":
        """Jump X^(n) by b (times ``weight``) in place."""
        self.coords[-1] += self.b * weight
        return self

    def x0_at(self, t):
        """X^(0) at time(s) t >= last_update assuming no events in between."""
        s = np.asarray(t, dtype=float) - self.last_update
        if np.any(s < -1e-12):
            raise ValueError("x0_at queried before last update")
        s = np.maximum(s, 0.0)
        w = taylor_weights(s, self.n)
        return np.exp(-self.nu * s) * (w @ self.coords)

    def abs_bound(self, width: float) -> float:
        """Upper bound on |X^(0)| over [last_update, last_update + width] with no events."""
        if self.n == 0:
            return abs(float(self.coords[0]))
        return float(np.dot(_scalar_taylor(width, self.n), np.abs(self.coords)))


def init_from_point_measure(times, n: int, nu: float, b: float, weight: float = 1.0) -> CascadeState:
    """Cascade state at t = 0 for past events at ``times`` <= 0.

    X^(k)(0) = b sum_s (-s)^{n-k}/(n-k)! e^{nu s}.
    """
    times = np.asarray(times, dtype=float)
    if times.size and np.any(times > 0):
        raise ValueError("initial point measure must live on t <= 0")
    coords = np.zeros(n + 1)
    if times.size:
        w = taylor_weights(-times, n) * np.exp(nu * times)[:, None]
        coords = b * weight * w.sum(axis=0)[::-1]
    return CascadeState(coords, nu, b, 0.0)
