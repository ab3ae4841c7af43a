"""Weight functions h(t), their decreasing envelopes and integral transforms.

Three kinds are supported: Erlang ``b t^n e^{-nu t} / n!``, right-continuous
piecewise-constant step functions, and the zero kernel. All evaluation
methods accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "KernelSpec",
    "KernelMatrix",
    "erlang",
    "piecewise_constant",
    "zero_kernel",
    "truncated",
]

_TAIL_REL = 1e-12
_ERLANG_MAX_ORDER = 64


def _check_time(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("kernel evaluated at negative time")
    return arr


def _scalar_or_array(arr):
    return float(arr) if arr.ndim == 0 else arr


@dataclass(frozen=True)
class KernelSpec:
    """A weight function h on [0, inf).

    ``truncate`` switches the kernel to ``h(t) 1{t <= truncation_horizon}``;
    when it is off the horizon is only used to bound history scans and
    quadrature ranges.
    """

    kind: str
    b: float = 0.0
    nu: float = 1.0
    n: int = 0
    grid: tuple = ()
    values: tuple = ()
    truncation_horizon: float | None = None
    truncate: bool = False
    _horizon: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("erlang", "piecewise_constant", "zero"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "erlang":
            if not self.nu > 0:
                raise ValueError("Erlang decay rate nu must be positive")
            if int(self.n) != self.n or not 0 <= self.n <= _ERLANG_MAX_ORDER:
                raise ValueError(f"Erlang order must be an integer in [0, {_ERLANG_MAX_ORDER}]")
            object.__setattr__(self, "n", int(self.n))
        if self.kind == "piecewise_constant":
            grid = tuple(float(g) for g in self.grid)
            values = tuple(float(v) for v in self.values)
            if len(grid) != len(values) + 1 or len(values) == 0:
                raise ValueError("piecewise kernel needs len(grid) == len(values) + 1 >= 2")
            if grid[0] < 0 or np.any(np.diff(grid) <= 0):
                raise ValueError("piecewise kernel grid must be increasing and start at t >= 0")
            object.__setattr__(self, "grid", grid)
            object.__setattr__(self, "values", values)
        horizon = self.truncation_horizon
        if horizon is None:
            horizon = self._default_horizon()
        elif horizon < 0:
            raise ValueError("truncation horizon must be nonnegative")
        object.__setattr__(self, "_horizon", float(horizon))

    # -- construction helpers -------------------------------------------------

    def _default_horizon(self) -> float:
        if self.kind == "zero" or (self.kind == "erlang" and self.b == 0):
            return 0.0
        if self.kind == "piecewise_constant":
            return self.grid[-1]
        mode = self.n / self.nu
        cap = 50.0 / self.nu
        log_level = math.log(_TAIL_REL) + self._log_abs_erlang(mode)

        def excess(t):
            return self._log_abs_erlang(t) - log_level

        if excess(cap) > 0:
            return cap
        lo = max(mode, 1e-300)
        if excess(lo) <= 0:
            return lo
        return float(optimize.brentq(excess, lo, cap, xtol=1e-12))

    def _log_abs_erlang(self, t: float) -> float:
        if t == 0:
            return math.log(abs(self.b)) if self.n == 0 else -math.inf
        return math.log(abs(self.b)) + self.n * math.log(t) - math.lgamma(self.n + 1) - self.nu * t

    @property
    def horizon(self) -> float:
        return self._horizon

    @property
    def mode(self) -> float:
        """Location of the maximum of |h|."""
        if self.kind == "erlang":
            return self.n / self.nu
        if self.kind == "piecewise_constant":
            i = int(np.argmax(np.abs(self.values)))
            return self.grid[i]
        return 0.0

    @property
    def is_erlang(self) -> bool:
        return self.kind == "erlang" and not self.truncate

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "erlang":
            return self.b == 0
        return not any(self.values)

    # -- evaluation -------------------------------------------------------------

    def eval(self, t):
        """h(t) for t >= 0."""
        t = _check_time(t)
        if self.kind == "zero":
            out = np.zeros_like(t)
        elif self.kind == "erlang":
            out = self.b * _erlang_shape(t, self.nu, self.n)
        else:
            grid = np.asarray(self.grid)
            idx = np.searchsorted(grid, t, side="right") - 1
            inside = (idx >= 0) & (idx < len(self.values))
            vals = np.asarray(self.values)
            out = np.where(inside, vals[np.clip(idx, 0, len(vals) - 1)], 0.0)
        if self.truncate:
            out = np.where(t > self._horizon, 0.0, out)
        return _scalar_or_array(np.asarray(out, dtype=float))

    __call__ = eval

    def envelope(self, t):
        """sup_{s >= t} |h(s)|, the smallest non-increasing majorant of |h|."""
        t = _check_time(t)
        if self.kind == "zero":
            out = np.zeros_like(t)
        elif self.kind == "erlang":
            mode = self.mode
            peak = abs(self.b) * _erlang_shape(np.asarray(mode), self.nu, self.n)
            if self.truncate and self._horizon < mode:
                peak = abs(self.b) * _erlang_shape(np.asarray(self._horizon), self.nu, self.n)
            out = np.where(t >= mode, np.abs(self.b) * _erlang_shape(t, self.nu, self.n), peak)
        else:
            grid = np.asarray(self.grid)
            absv = np.abs(np.asarray(self.values))
            if self.truncate:
                absv = np.where(grid[:-1] > self._horizon, 0.0, absv)
            suffix = np.maximum.accumulate(absv[::-1])[::-1]
            # piece i covers [grid[i], grid[i+1]); it still counts for t < grid[i+1]
            idx = np.searchsorted(grid[1:], t, side="right")
            out = np.where(idx < len(suffix), suffix[np.clip(idx, 0, len(suffix) - 1)], 0.0)
        if self.truncate:
            out = np.where(t > self._horizon, 0.0, out)
        return _scalar_or_array(np.asarray(out, dtype=float))

    def integral(self, a: float = 0.0, b: float = math.inf) -> float:
        """Integral of h over [a, b]."""
        if a < 0 or b < a:
            raise ValueError("integral needs 0 <= a <= b")
        if self.kind == "zero" or a == b:
            return 0.0
        if self.truncate:
            b = min(b, self._horizon)
            if b <= a:
                return 0.0
        if self.kind == "erlang":
            return self.b * (_erlang_cdf_mass(b, self.nu, self.n) - _erlang_cdf_mass(a, self.nu, self.n))
        if math.isinf(b):
            b = self.grid[-1]
        grid = np.asarray(self.grid)
        lo = np.clip(grid[:-1], a, b)
        hi = np.clip(grid[1:], a, b)
        return float(np.sum(np.asarray(self.values) * (hi - lo)))

    def integrability_check(self) -> dict:
        """Quadratures of the envelope, its square and t|h(t)| on [0, horizon]."""
        horizon = self._horizon
        if horizon == 0 or self.is_zero:
            return {"l1_envelope": 0.0, "l2_envelope": 0.0, "t_weighted_l1": 0.0, "pass": True}
        points = self._breakpoints(horizon)

        def quad(fn):
            total = 0.0
            for lo, hi in zip(points[:-1], points[1:]):
                val, _ = integrate.quad(fn, lo, hi, limit=200, epsabs=1e-13, epsrel=1e-11)
                total += val
            return total

        l1 = quad(lambda s: self.envelope(s))
        l2 = quad(lambda s: self.envelope(s) ** 2)
        tl1 = quad(lambda s: s * abs(self.eval(s)))
        ok = all(math.isfinite(v) for v in (l1, l2, tl1))
        return {"l1_envelope": l1, "l2_envelope": l2, "t_weighted_l1": tl1, "pass": ok}

    def _breakpoints(self, horizon: float) -> list:
        pts = {0.0, horizon}
        if self.kind == "erlang":
            pts.add(min(self.mode, horizon))
        elif self.kind == "piecewise_constant":
            pts.update(g for g in self.grid if g < horizon)
        return sorted(pts)

    def envelope_series(self, delta: float) -> float:
        """sum_{k >= 1} envelope(k delta).

        Terms beyond the horizon are dropped; for non-truncated Erlang kernels
        the dropped tail is at most (integral of |h| past the horizon) / delta.
        """
        if delta <= 0:
            raise ValueError("series over k*delta needs delta > 0")
        if self.is_zero:
            return 0.0
        if self.is_erlang and self.n == 0:
            q = math.exp(-self.nu * delta)
            return abs(self.b) * q / (1 - q)
        kmax = int(math.floor(self._horizon / delta))
        if kmax > 50_000_000:
            raise ValueError("envelope series too long; refractory length too small")
        ks = np.arange(1, kmax + 1) * delta
        return float(np.sum(self.envelope(ks))) if kmax else 0.0

    def to_config(self) -> dict:
        if self.kind == "erlang":
            cfg = {"kind": "erlang", "b": self.b, "nu_per_time": self.nu, "n": self.n}
        elif self.kind == "piecewise_constant":
            cfg = {"kind": "piecewise_constant", "grid_time": list(self.grid), "values": list(self.values)}
        else:
            cfg = {"kind": "zero"}
        if self.truncate:
            cfg["truncate_after_time"] = self._horizon
        return cfg


def _erlang_shape(t, nu: float, n: int):
    """t^n e^{-nu t} / n! without overflow for large t or n."""
    t = np.asarray(t, dtype=float)
    if n == 0:
        return np.exp(-nu * t)
    with np.errstate(divide="ignore"):
        logv = n * np.log(t) - math.lgamma(n + 1) - nu * t
    return np.where(t > 0, np.exp(logv), 0.0)


def _erlang_cdf_mass(t: float, nu: float, n: int) -> float:
    """int_0^t s^n e^{-nu s}/n! ds = P(n+1, nu t) / nu^{n+1}."""
    from scipy.special import gammainc

    if math.isinf(t):
        return nu ** -(n + 1)
    return float(gammainc(n + 1, nu * t)) * nu ** -(n + 1)


def erlang(b: float, nu: float, n: int = 0, **kw) -> KernelSpec:
    return KernelSpec("erlang", b=float(b), nu=float(nu), n=int(n), **kw)


def piecewise_constant(grid, values, **kw) -> KernelSpec:
    return KernelSpec("piecewise_constant", grid=tuple(grid), values=tuple(values), **kw)


def zero_kernel() -> KernelSpec:
    return KernelSpec("zero")


def truncated(kernel: KernelSpec, horizon: float) -> KernelSpec:
    """The same kernel set to zero after ``horizon``."""
    return KernelSpec(
        kernel.kind, b=kernel.b, nu=kernel.nu, n=kernel.n, grid=kernel.grid,
        values=kernel.values, truncation_horizon=horizon, truncate=True,
    )


@dataclass(frozen=True)
class KernelMatrix:
    """Population-level kernels h_{kl}: effect of a unit of population l on population k.

    ``scale`` multiplies every entry (1/N in mean-field mode).
    """

    entries: tuple
    scale: float = 1.0

    def __post_init__(self):
        rows = tuple(tuple(row) for row in self.entries)
        if not rows or any(len(r) != len(rows) for r in rows):
            raise ValueError("kernel matrix must be square and non-empty")
        object.__setattr__(self, "entries", rows)

    @property
    def size(self) -> int:
        return len(self.entries)

    def __getitem__(self, kl):
        k, l = kl
        return self.entries[k][l]

    def check(self) -> list:
        """Indices (k, l) of entries failing the integrability check."""
        return [
            (k, l)
            for k, row in enumerate(self.entries)
            for l, ker in enumerate(row)
            if not ker.integrability_check()["pass"]
        ]
