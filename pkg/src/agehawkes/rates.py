"""Rate functions psi(x, a) and their declared regularity constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ModelError",
    "ScalarMap",
    "RateSpec",
    "constant",
    "logistic",
    "affine_clamped",
    "exponential_map",
    "hard_refractory",
    "product_rate",
    "custom_rate",
]


class ModelError(RuntimeError):
    """A model contract (nonnegativity, majorant, ...) was violated at run time."""


@dataclass(frozen=True)
class ScalarMap:
    """A scalar map f(x) with declared Lipschitz constant and range bounds.

    ``sup``/``inf`` are None when unbounded.
    """

    fn: Callable
    lipschitz: float
    sup: float | None = None
    inf: float | None = None
    increasing: bool = False
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    @property
    def bounded(self) -> bool:
        return self.sup is not None

    def to_config(self) -> dict:
        return {"kind": self.kind, **self.params}


def constant(value: float) -> ScalarMap:
    value = float(value)
    return ScalarMap(
        lambda x: np.full(np.shape(x), value) if np.ndim(x) else value,
        lipschitz=0.0, sup=value, inf=value, kind="constant", params={"value": value},
    )


def logistic(max_rate: float, gain: float = 1.0, threshold: float = 0.0, min_rate: float = 0.0) -> ScalarMap:
    """min_rate + (max_rate - min_rate) / (1 + exp(-gain (x - threshold)))."""
    span = max_rate - min_rate

    def fn(x):
        z = gain * (x - threshold)
        return min_rate + span * 0.5 * (1.0 + np.tanh(0.5 * z))

    return ScalarMap(
        fn, lipschitz=abs(span * gain) / 4.0, sup=max(max_rate, min_rate), inf=min(max_rate, min_rate),
        increasing=span * gain > 0, kind="logistic",
        params={"max_rate": max_rate, "gain": gain, "threshold": threshold, "min_rate": min_rate},
    )


def affine_clamped(intercept: float, slope: float, lower: float = 0.0, upper: float | None = None) -> ScalarMap:
    """clip(intercept + slope x, lower, upper)."""
    hi = np.inf if upper is None else upper

    def fn(x):
        return np.clip(intercept + slope * x, lower, hi)

    return ScalarMap(
        fn, lipschitz=abs(slope), sup=upper, inf=lower, increasing=slope > 0, kind="affine_clamped",
        params={"intercept": intercept, "slope": slope, "lower": lower, "upper": upper},
    )


def exponential_map(scale: float = 1.0, gain: float = 1.0) -> ScalarMap:
    """scale * exp(gain x); unbounded and not globally Lipschitz."""
    return ScalarMap(
        lambda x: scale * np.exp(gain * x), lipschitz=math.inf, sup=None, inf=0.0,
        increasing=scale * gain > 0, kind="exponential", params={"scale": scale, "gain": gain},
    )


@dataclass(frozen=True)
class RateSpec:
    """Rate function psi(x, a) with user-declared constants.

    form is one of ``hard_refractory`` (f(x) 1{a >= delta}), ``product``
    (f(x) g(a)) or ``custom`` (psi(x, a) given directly). The constants are
    the ones the stability and thinning arguments consume: Lipschitz ``L``,
    post-jump bound ``K`` on ages in [0, delta], and the regeneration lower
    bound ``c`` valid for |x| <= x_star, a >= a_star.
    """

    form: str
    lipschitz_L: float = 1.0
    delta: float = 0.0
    postjump_bound_K: float | None = None
    f: ScalarMap | None = None
    g: Callable | None = None
    g_sup: float | None = None
    psi: Callable | None = None
    cap: float | None = None
    doeblin_c: float = 0.0
    a_star: float = 0.0
    x_star: float = 0.0

    def __post_init__(self):
        if self.form not in ("hard_refractory", "product", "custom"):
            raise ValueError(f"unknown rate form {self.form!r}")
        if self.delta < 0:
            raise ValueError("refractory length delta must be nonnegative")
        if self.lipschitz_L < 1:
            raise ValueError("Lipschitz constant L must be >= 1")
        if self.form in ("hard_refractory", "product") and self.f is None:
            raise ValueError(f"{self.form} rate needs a scalar map f")
        if self.form == "product" and self.g is None:
            raise ValueError("product rate needs an age map g")
        if self.form == "custom" and self.psi is None:
            raise ValueError("custom rate needs psi(x, a)")
        if self.postjump_bound_K is None:
            object.__setattr__(self, "postjump_bound_K", self._default_K())

    def _default_K(self) -> float:
        if self.form == "hard_refractory":
            return 0.0
        upper = self.upper_bound
        return math.inf if upper is None else upper

    @property
    def upper_bound(self) -> float | None:
        """A declared global bound on psi, or None."""
        if self.cap is not None:
            return self.cap
        if self.form == "hard_refractory" and self.f.bounded:
            return self.f.sup
        if self.form == "product" and self.f.bounded and self.g_sup is not None:
            return self.f.sup * self.g_sup
        return None

    def __call__(self, x, a):
        return self.psi_eval(x, a)

    def psi_eval(self, x, a):
        """psi(x, a); arrays broadcast."""
        a = np.asarray(a, dtype=float)
        if np.any(a < 0):
            raise ValueError("age must be nonnegative")
        x = np.asarray(x, dtype=float)
        if self.form == "hard_refractory":
            out = self.f(x) * (a >= self.delta)
        elif self.form == "product":
            out = self.f(x) * self.g(a)
        else:
            out = np.asarray(self.psi(x, a), dtype=float)
            if np.any(out < 0):
                raise ModelError("custom rate returned a negative intensity")
        out = np.asarray(out, dtype=float)
        return float(out) if out.ndim == 0 else out

    def sublinear_majorant(self, x_abs):
        """An upper bound for psi(x, a) over all a and |x| <= x_abs."""
        if isinstance(x_abs, float):
            if x_abs < 0:
                raise ValueError("x_abs must be nonnegative")
            bound = self.lipschitz_L * (1.0 + x_abs)
            upper = self.upper_bound
            return bound if upper is None else min(bound, upper)
        if np.any(np.asarray(x_abs) < 0):
            raise ValueError("x_abs must be nonnegative")
        bound = self.lipschitz_L * (1.0 + np.asarray(x_abs, dtype=float))
        upper = self.upper_bound
        if upper is not None:
            bound = np.minimum(bound, upper)
        return float(bound) if np.ndim(bound) == 0 else bound

    def validate(self, sample_count: int = 10_000, x_range: float = 20.0, seed: int = 0) -> dict:
        """Monte-Carlo check of the declared constants.

        Returns, per property, the worst observed margin (positive means
        violated) and a pass flag.
        """
        if sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        rng = np.random.default_rng(seed)
        a_hi = max(4.0 * (self.delta + self.a_star), 10.0)
        x = rng.uniform(-x_range, x_range, sample_count)
        a = rng.uniform(0.0, a_hi, sample_count)
        report = {}

        vals = self._raw(x, a)
        report["nonnegative"] = _entry(float(np.max(-vals)))
        report["sublinear"] = _entry(float(np.max(vals - self.lipschitz_L * (1 + np.abs(x)))))

        if self.delta > 0:
            a_pj = rng.uniform(0.0, self.delta, sample_count)
            pj = self._raw(x, a_pj)
            report["postjump_bound"] = _entry(float(np.max(pj - self.postjump_bound_K)))
        else:
            report["postjump_bound"] = {"margin": math.nan, "pass": False, "vacuous": True}

        if self.doeblin_c > 0:
            xs = rng.uniform(-self.x_star, self.x_star, sample_count)
            as_ = self.a_star + rng.exponential(max(self.delta, 1.0), sample_count)
            low = self._raw(xs, as_)
            report["doeblin_lower_bound"] = _entry(float(np.max(self.doeblin_c - low)))
        else:
            report["doeblin_lower_bound"] = {"margin": math.nan, "pass": True, "vacuous": True}

        # nearby and distant pairs at equal age
        step = np.where(rng.random(sample_count) < 0.5, rng.uniform(-1e-3, 1e-3, sample_count),
                        rng.uniform(-2.0, 2.0, sample_count))
        x2 = x + step
        diff = np.abs(self._raw(x, a) - self._raw(x2, a))
        lip = np.abs(step)
        with np.errstate(invalid="ignore"):
            excess = diff - self.lipschitz_L * lip
        report["lipschitz"] = _entry(float(np.nanmax(excess)))
        report["pass"] = all(v["pass"] for v in report.values() if isinstance(v, dict))
        return report

    def _raw(self, x, a):
        with np.errstate(over="ignore"):
            if self.form == "custom":
                return np.asarray(self.psi(x, a), dtype=float)
            return np.asarray(self.psi_eval(x, a), dtype=float)

    def to_config(self) -> dict:
        cfg = {"form": self.form, "lipschitz_L": self.lipschitz_L, "delta_time": self.delta}
        if self.f is not None:
            cfg["f"] = self.f.to_config()
        return cfg


def _entry(margin: float) -> dict:
    tol = 1e-12
    return {"margin": margin, "pass": bool(margin <= tol)}


def hard_refractory(f: ScalarMap, delta: float, L: float | None = None, **kw) -> RateSpec:
    """psi(x, a) = f(x) 1{a >= delta}; L defaults to max(1, Lipschitz(f), f(0))."""
    if L is None:
        f0 = float(f(0.0))
        L = max(1.0, f.lipschitz, f0)
    return RateSpec("hard_refractory", lipschitz_L=L, delta=delta, f=f, **kw)


def product_rate(f: ScalarMap, g: Callable, g_sup: float, L: float, delta: float = 0.0, **kw) -> RateSpec:
    return RateSpec("product", lipschitz_L=L, delta=delta, f=f, g=g, g_sup=g_sup, **kw)


def custom_rate(psi: Callable, L: float, delta: float = 0.0, **kw) -> RateSpec:
    return RateSpec("custom", lipschitz_L=L, delta=delta, psi=psi, **kw)
