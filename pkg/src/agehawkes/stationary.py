"""Equilibrium jump rate and stationary age law of the mean-field limit.

At equilibrium the memory is x* = H lambda_bar with H = int h, the age
process is a renewal process with hazard psi(x*, .) and

    1 / lambda_bar = int_0^inf exp(-int_0^a psi(H lambda_bar, z) dz) da,

which for psi = f(x) 1{a >= delta} reads 1 / lambda_bar = delta + 1 / f(H lambda_bar).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .rates import RateSpec

__all__ = [
    "StationaryResult",
    "AgeDensity",
    "NoSolutionError",
    "solve_fixed_point",
    "stationary_age_density",
    "delta_sweep",
]


class NoSolutionError(RuntimeError):
    pass


@dataclass
class AgeDensity:
    """g(a) = kappa exp(-int_0^a psi(x*, z) dz) on a grid plus an exponential tail."""

    kappa: float
    grid: np.ndarray
    cumulative_hazard: np.ndarray
    tail_rate: float
    normalizer: float

    @property
    def values(self) -> np.ndarray:
        return self.kappa * np.exp(-self.cumulative_hazard)

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        end = self.grid[-1]
        cum = np.interp(a, self.grid, self.cumulative_hazard)
        cum = cum + self.tail_rate * np.maximum(a - end, 0.0)
        return self.kappa * np.exp(-cum)


@dataclass
class StationaryResult:
    lambda_bar: float
    x_star: float
    kappa: float
    age_density: AgeDensity | None
    bracket: tuple
    residual: float
    roots: list = field(default_factory=list)
    status: str = "unique"

    @property
    def unique(self) -> bool:
        return self.status == "unique"


def _hard_refractory_rhs(rate: RateSpec, x: float) -> float:
    fx = float(rate.f(x))
    return math.inf if fx <= 0 else rate.delta + 1.0 / fx


def renewal_mean(rate: RateSpec, x: float, **kw) -> float:
    """int_0^inf exp(-int_0^a psi(x, z) dz) da (the mean inter-event time at memory x)."""
    if rate.form == "hard_refractory":
        return _hard_refractory_rhs(rate, x)
    return _survival_integral(rate, x, **kw)[0]


def _age_grid(rate: RateSpec, x: float, n: int):
    """Geometric grid up to a* + delta + 40/c with the breakpoint delta included."""
    a_far = max(rate.a_star, rate.delta) + 1.0
    c = float(rate.psi_eval(x, a_far))
    if rate.doeblin_c > 0 and abs(x) <= rate.x_star:
        c = max(c, rate.doeblin_c)
    if not c > 0:
        raise NoSolutionError(f"psi(x*={x:.6g}, a) vanishes for large a; the age law is not normalisable")
    end = a_far + 40.0 / c
    pts = np.concatenate([[0.0], np.geomspace(1e-9, end, n)])
    extra = [rate.delta] if rate.delta > 0 else []
    grid = np.unique(np.concatenate([pts, extra, np.linspace(0, end, n)]))
    return grid, end


def _survival_integral(rate: RateSpec, x: float, n: int = 20000):
    grid, end = _age_grid(rate, x, n)
    # hazard on each piece from its midpoint: exact for piecewise-constant-in-a rates
    mid = 0.5 * (grid[1:] + grid[:-1])
    haz = np.asarray(rate.psi_eval(np.full(mid.size, x), mid), dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(haz * np.diff(grid))])
    surv = np.exp(-cum)
    # int of exp(-cum) on each piece with constant hazard
    with np.errstate(divide="ignore", invalid="ignore"):
        piece = np.where(haz > 1e-14, surv[:-1] * (-np.expm1(-haz * np.diff(grid))) / haz,
                         surv[:-1] * np.diff(grid))
    tail_rate = float(rate.psi_eval(x, grid[-1]))
    total = float(piece.sum()) + surv[-1] / tail_rate
    return total, grid, surv, tail_rate


def stationary_age_density(rate: RateSpec, x_star: float, n: int = 20000) -> AgeDensity:
    """kappa = 1 / int exp(-int psi) and the density g on a geometric grid."""
    if rate.form == "hard_refractory":
        fx = float(rate.f(x_star))
        if not fx > 0:
            raise NoSolutionError("f(x*) = 0: the age law is not normalisable")
        kappa = 1.0 / (rate.delta + 1.0 / fx)
        end = rate.delta + 40.0 / fx
        grid = np.unique(np.concatenate([np.geomspace(1e-9, end, n), [0.0, rate.delta]]))
        cum = fx * np.maximum(grid - rate.delta, 0.0)
        return AgeDensity(kappa, grid, cum, fx, 1.0 / kappa)
    total, grid, surv, tail_rate = _survival_integral(rate, x_star, n)
    if not math.isfinite(total) or total <= 0:
        raise NoSolutionError("divergent normaliser")
    kappa = 1.0 / total
    return AgeDensity(kappa, grid, -np.log(surv), tail_rate, total)


def solve_fixed_point(rate: RateSpec, h_integral: float, tol: float = 1e-12,
                      lam_max: float | None = None, eps: float = 1e-12, n_grid: int = 400,
                      with_density: bool = True) -> StationaryResult:
    """All roots of 1/lambda = RHS(lambda) on a log grid over (eps, lam_max].

    ``status`` is ``unique``, ``multiple`` (every root is reported, the
    smallest is returned first) or ``none`` (raises NoSolutionError).
    """
    if lam_max is None:
        upper = rate.upper_bound
        if upper is not None:
            lam_max = 10.0 * upper
        else:
            lam_max = 10.0 * rate.lipschitz_L * (1.0 + abs(h_integral) * rate.lipschitz_L)
        if rate.delta > 0:
            lam_max = min(lam_max, 1.0 / rate.delta * (1 + 1e-9))
    H = float(h_integral)
    if not lam_max > eps:
        raise NoSolutionError(f"empty search interval ({eps:g}, {lam_max:g}]: the rate vanishes")

    def resid(lam):
        # lambda * RHS(lambda) - 1: same sign as RHS - 1/lambda
        try:
            r = renewal_mean(rate, H * lam)
        except NoSolutionError:
            r = math.inf
        return lam * r - 1.0 if math.isfinite(r) else math.inf

    lams = np.geomspace(eps, lam_max, n_grid)
    vals = np.array([resid(l) for l in lams])
    roots = []
    for i in range(n_grid - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0:
            roots.append(float(lams[i]))
        elif np.sign(a) != np.sign(b) and np.isfinite(a) and np.isfinite(b):
            roots.append(float(optimize.brentq(resid, lams[i], lams[i + 1], xtol=tol * lams[i], rtol=1e-15)))
        elif np.sign(a) != np.sign(b):
            # one side infinite (f vanishes): bisect on the finite side
            roots.append(float(optimize.brentq(lambda l: np.clip(resid(l), -1e300, 1e300),
                                               lams[i], lams[i + 1], xtol=tol * lams[i])))
    if vals[-1] == 0:
        roots.append(float(lams[-1]))
    if not roots:
        raise NoSolutionError(f"no sign change of the fixed-point residual on ({eps:g}, {lam_max:g}]")
    lam = roots[0]
    x_star = H * lam
    dens = stationary_age_density(rate, x_star) if with_density else None
    kappa = dens.kappa if dens is not None else 1.0 / renewal_mean(rate, x_star)
    residual = abs(renewal_mean(rate, x_star) - 1.0 / lam)
    return StationaryResult(lam, x_star, kappa, dens, (eps, lam_max), residual, roots,
                            "unique" if len(roots) == 1 else "multiple")


def delta_sweep(rate_for_delta: Callable[[float], RateSpec], h_integral: float, deltas,
                **kw) -> dict:
    """lambda_bar(delta) over a grid with a monotonicity verdict.

    Returns {'delta', 'lambda_bar', 'n_roots', 'verdict'}; the verdict is
    ``decreasing``, ``increasing``, ``non-monotone`` or ``failed``.
    """
    deltas = np.asarray(deltas, dtype=float)
    lam = np.full(deltas.size, np.nan)
    nroots = np.zeros(deltas.size, dtype=int)
    errors = []
    for i, d in enumerate(deltas):
        try:
            res = solve_fixed_point(rate_for_delta(float(d)), h_integral, with_density=False, **kw)
            lam[i] = res.lambda_bar
            nroots[i] = len(res.roots)
        except NoSolutionError as exc:
            errors.append((float(d), str(exc)))
    if errors or np.any(nroots != 1):
        verdict = "failed"
    else:
        diff = np.diff(lam)
        if np.all(diff < 0):
            verdict = "decreasing"
        elif np.all(diff > 0):
            verdict = "increasing"
        else:
            verdict = "non-monotone"
    return {"delta": deltas, "lambda_bar": lam, "n_roots": nroots, "verdict": verdict, "errors": errors}


def change_of_variables_check(rate: RateSpec, x_star: float) -> float:
    """|int psi(x*, a) g(a) da - kappa| by adaptive quadrature."""
    dens = stationary_age_density(rate, x_star)
    end = dens.grid[-1]
    pts = [rate.delta] if 0 < rate.delta < end else None

    def integrand(a):
        return float(rate.psi_eval(x_star, a)) * float(dens(a))

    # piecewise on the density grid (coarsened) so quad never straddles a kink
    knots = np.unique(np.concatenate([dens.grid[:: max(1, dens.grid.size // 400)], [end] + (pts or [])]))
    val = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(knots[:-1], knots[1:]):
            val += integrate.quad(integrand, lo, hi, limit=200, epsabs=1e-15, epsrel=1e-12)[0]
    val += float(dens.values[-1])  # tail: int tail_rate * g_end e^{-r u} du = g_end
    return abs(val - dens.kappa)
