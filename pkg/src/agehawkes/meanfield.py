"""Mean-field limit of a population network.

Two solvers for the limit system

    x^k(t) = sum_l p_l int_0^t h_kl(t - s) dphi^l(s) + beta^k(t),
    phi^k(t) = E Z^k(t),  Z^k with intensity psi_k(x^k_t, A^k_t):

* :func:`solve_picard_mc`: Picard iteration on x, the expectation over ages
  estimated with M particles thinned against the frozen memory.
* :func:`solve_hard_refractory_dde`: one population with psi = f(x) 1{a >= delta}
  and an Erlang kernel; the age enters only through p_t = P(A_t >= delta) and
  the closed loop is a delay differential system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .cascade import CascadeState, init_from_point_measure
from .network import NetworkConfig, initial_ages, simulate_frozen
from .prm import StreamSet

__all__ = [
    "MeanFieldSolution",
    "NonConvergenceError",
    "beta_grid",
    "solve_picard_mc",
    "solve_hard_refractory_dde",
    "cross_validate",
    "default_step",
]


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, solution=None):
        super().__init__(msg)
        self.solution = solution


@dataclass
class MeanFieldSolution:
    """Grid functions of the limit, arrays of shape (K, len(grid))."""

    grid: np.ndarray
    phi: np.ndarray
    x: np.ndarray
    lambda_bar: np.ndarray
    beta: np.ndarray
    p: np.ndarray | None = None
    lambda_se: np.ndarray | None = None
    method: str = ""
    iterations: int = 0
    deviations: list = field(default_factory=list)
    converged: bool = True
    particles: int = 0

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def x_at(self, k: int, t):
        return np.interp(t, self.grid, self.x[k])

    def rows(self):
        """(time, population, phi, x, lambda_bar, p) records."""
        out = []
        K = self.x.shape[0]
        for k in range(K):
            p = self.p[k] if self.p is not None else np.full(self.grid.size, np.nan)
            for i, t in enumerate(self.grid):
                out.append((float(t), k, float(self.phi[k, i]), float(self.x[k, i]),
                            float(self.lambda_bar[k, i]), float(p[i])))
        return out


def default_step(config: NetworkConfig) -> float:
    """delta / 50 for the smallest positive refractory length, else 1/50."""
    deltas = [p.rate.delta for p in config.populations if p.rate.delta > 0]
    return (min(deltas) if deltas else 1.0) / 50.0


def _grid(T: float, dt: float) -> np.ndarray:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("grid step must divide the horizon")
    return np.linspace(0.0, T, n + 1)


def beta_grid(config: NetworkConfig, grid) -> np.ndarray:
    """Input trajectories beta^k = direct initial signal + inherited past events (scaled)."""
    grid = np.asarray(grid, dtype=float)
    K = config.n_populations
    out = np.zeros((K, grid.size))
    for k, pop in enumerate(config.populations):
        sig = pop.initial_signal
        out[k] = sig.direct(grid)
        if sig.kind == "inherited":
            for l, pts in sig.point_times.items():
                ker = config.kernels[k, l]
                if pts.size and not ker.is_zero:
                    lag = grid[:, None] - pts[None, :]
                    out[k] += config.scale * np.sum(ker.eval(lag), axis=1)
    return out


def _memory_from_rates(config: NetworkConfig, grid, lam, beta) -> np.ndarray:
    """x on the grid given lambda_bar on the grid (trapezoid source per step)."""
    K = config.n_populations
    frac = config.fractions
    dt = grid[1] - grid[0]
    x = beta.copy()
    mid = 0.5 * (lam[:, 1:] + lam[:, :-1])  # source on (t_i, t_{i+1}]
    dphi = mid * dt
    for k in range(K):
        for l in range(K):
            ker = config.kernels[k, l]
            if ker.is_zero or frac[l] == 0:
                continue
            if ker.is_erlang:
                c = CascadeState.zeros(ker.n, ker.nu, ker.b * frac[l])
                vals = np.empty(grid.size)
                vals[0] = 0.0
                for i in range(grid.size - 1):
                    c.advance(dt, mid[l, i])
                    vals[i + 1] = c.x0
                x[k] += vals
            else:
                # left-endpoint Stieltjes sum: mass of (t_j, t_{j+1}] placed at t_j
                hv = np.asarray(ker.eval(np.arange(grid.size) * dt))
                conv = np.convolve(dphi[l], hv)[: grid.size - 1]
                x[k, 1:] += frac[l] * conv
    return x


def _particle_rates(rate, grid, xg, ev_times, a0, delta):
    """Mean intensity and P(age >= delta) at grid points (left limits)."""
    M = a0.size
    counts = np.array([e.size for e in ev_times])
    tt = np.concatenate(ev_times) if counts.sum() else np.empty(0)
    uu = np.repeat(np.arange(M), counts)
    order = np.argsort(tt, kind="stable")
    tt, uu = tt[order], uu[order]
    last = np.full(M, np.nan)
    lam = np.empty(grid.size)
    se = np.empty(grid.size)
    p = np.empty(grid.size)
    j = 0
    for i, t in enumerate(grid):
        j2 = int(np.searchsorted(tt, t, side="left"))
        if j2 > j:
            last[uu[j:j2]] = tt[j:j2]
            j = j2
        age = np.where(np.isnan(last), a0 + t, t - last)
        vals = np.asarray(rate.psi_eval(np.full(M, xg[i]), age), dtype=float)
        lam[i] = vals.mean()
        se[i] = vals.std(ddof=1) / math.sqrt(M) if M > 1 else math.inf
        p[i] = np.mean(age >= delta)
    return lam, se, p


def solve_picard_mc(config: NetworkConfig, particles: int = 10_000, dt: float | None = None,
                    tol: float = 1e-3, max_iter: int = 50, seed: int = 0,
                    streams: StreamSet | None = None, raise_on_failure: bool = False) -> MeanFieldSolution:
    """Picard iteration with Monte-Carlo age expectation.

    Particle (k, j) is driven by the PRM of network unit (k, j) and starts
    from the same initial age, so the same particles are reused in every
    iteration (common random numbers).
    """
    if particles < 1:
        raise ValueError("need at least one particle")
    dt = default_step(config) if dt is None else dt
    T = config.horizon
    grid = _grid(T, dt)
    K = config.n_populations
    streams = config.streams(seed) if streams is None else streams
    pcfg = config.with_(populations=tuple(
        type(p)(particles, p.rate, p.initial_signal, p.initial_age, p.name) for p in config.populations))
    a0 = initial_ages(pcfg, streams)
    units = np.arange(particles)
    beta = beta_grid(config, grid)
    x = beta.copy()
    devs = []
    lam = np.zeros((K, grid.size))
    se = np.zeros((K, grid.size))
    p = np.zeros((K, grid.size))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for k, pop in enumerate(config.populations):
            ev = simulate_frozen(pop.rate, grid, x[k], streams, k, units, a0[k], T)
            lam[k], se[k], p[k] = _particle_rates(pop.rate, grid, x[k], ev, a0[k], pop.rate.delta)
        x_new = _memory_from_rates(config, grid, lam, beta)
        dev = float(np.max(np.abs(x_new - x)))
        devs.append(dev)
        x = x_new
        if dev <= tol:
            converged = True
            break
        if _is_static(config):
            converged = True
            break
    phi = np.concatenate([np.zeros((K, 1)), np.cumsum(0.5 * (lam[:, 1:] + lam[:, :-1]) * dt, axis=1)], axis=1)
    sol = MeanFieldSolution(grid, phi, x, lam, beta, p, se, "picard-mc", it, devs, converged, particles)
    if not converged and raise_on_failure:
        raise NonConvergenceError(f"Picard iteration did not reach tol={tol} in {max_iter} iterations", sol)
    return sol


def _is_static(config):
    return all(ker.is_zero for row in config.kernels.entries for ker in row)


def solve_hard_refractory_dde(config: NetworkConfig, dt: float | None = None) -> MeanFieldSolution:
    """Deterministic closed loop for one hard-refractory population with an Erlang kernel.

    State: cascade coordinates of x and p_t = P(A_t >= delta), with

        lambda_bar = f(x_t) p_t,
        p' = s(t) - f(x_t) p_t,  s(t) = pi_0(delta - t) for t < delta, lambda_bar(t - delta) after,

    plus a jump of the atom weight at t = delta - a for every atom a < delta
    of the initial age law. Heun steps; the source is evaluated side-aware
    at t = delta.
    """
    if config.n_populations != 1:
        raise ValueError("the delay closure covers a single population")
    pop = config.populations[0]
    rate = pop.rate
    if rate.form != "hard_refractory":
        raise ValueError("the delay closure needs a hard-refractory rate")
    ker = config.kernels[0, 0]
    if not (ker.is_erlang or ker.is_zero):
        raise ValueError("the delay closure needs an Erlang (or zero) kernel")
    delta = rate.delta
    dt = default_step(config) if dt is None else dt
    if delta > 0:
        m = delta / dt
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise ValueError("grid step must divide the refractory length")
        m = int(round(m))
    else:
        m = 0
    T = config.horizon
    grid = _grid(T, dt)
    f = rate.f
    law = pop.initial_age
    beta = beta_grid(config, grid)[0]
    n_order = 0 if ker.is_zero else ker.n
    nu = 1.0 if ker.is_zero else ker.nu
    b = 0.0 if ker.is_zero else ker.b

    atoms_a, atoms_w = law.atoms
    p0 = float(law.survival(np.array([delta]))[0]) if delta > 0 else 1.0
    # atoms strictly inside the refractory window release mass at delta - a
    release = {}
    for a, w in zip(atoms_a, atoms_w):
        if a < delta:
            release[float(delta - a)] = release.get(float(delta - a), 0.0) + float(w)
    # lambda_bar jumps only at release times, so the source jumps at release + delta
    special = sorted(set(release) | {r + delta for r in release})
    tol = 1e-12 * max(1.0, T)

    # lambda_bar history as knots with left and right limits
    kt, kl, kr = [], [], []

    def lam_hist(s, right):
        j = int(np.searchsorted(kt, s - tol))
        if j < len(kt) and abs(kt[j] - s) <= tol:
            return kr[j] if right else kl[j]
        # strictly between knots j-1 and j
        t0, t1 = kt[j - 1], kt[j]
        return kr[j - 1] + (kl[j] - kr[j - 1]) * (s - t0) / (t1 - t0)

    def source(t, right):
        if delta == 0:
            return 0.0
        if t < delta - tol or (abs(t - delta) <= tol and not right):
            return float(law.density(np.array([delta - t]))[0]) if law.is_smooth else 0.0
        return lam_hist(t - delta, right)

    def rhs(t, coords, p, right):
        x0 = coords[0] + float(np.interp(t, grid, beta))
        fx = float(f(x0))
        dc = -nu * coords
        dc[:-1] += coords[1:]
        dc[-1] += b * fx * p
        return dc, source(t, right) - fx * p

    def lam_now(t, coords, p):
        return float(f(coords[0] + float(np.interp(t, grid, beta)))) * p

    coords = np.zeros(n_order + 1)
    p = np.empty(grid.size)
    x = np.empty(grid.size)
    lam = np.empty(grid.size)
    pcur = p0
    p[0], x[0] = p0, beta[0]
    lam[0] = lam_now(0.0, coords, p0)
    kt.append(0.0); kl.append(lam[0]); kr.append(lam[0])
    for i in range(grid.size - 1):
        t0, t1 = grid[i], grid[i + 1]
        cuts = [t0] + [r for r in special if t0 + tol < r < t1 - tol] + [t1]
        for a, c in zip(cuts[:-1], cuts[1:]):
            if a > t0:
                left = lam_now(a, coords, pcur)
                pcur += release.get(_match(release, a, tol), 0.0)
                kt.append(a); kl.append(left); kr.append(lam_now(a, coords, pcur))
            h = c - a
            dc1, dp1 = rhs(a, coords, pcur, True)
            dc2, dp2 = rhs(c, coords + h * dc1, pcur + h * dp1, False)
            coords = coords + 0.5 * h * (dc1 + dc2)
            pcur = pcur + 0.5 * h * (dp1 + dp2)
        left = lam_now(t1, coords, pcur)
        pcur += release.get(_match(release, t1, tol), 0.0)
        pcur = min(max(pcur, 0.0), 1.0)
        p[i + 1] = pcur
        x[i + 1] = coords[0] + beta[i + 1]
        lam[i + 1] = lam_now(t1, coords, pcur)
        kt.append(t1); kl.append(left); kr.append(lam[i + 1])
    phi = np.concatenate([[0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * dt)])
    return MeanFieldSolution(grid, phi[None], x[None], lam[None], beta[None], p[None], None, "dde", 0, [], True, 0)


def _match(release, t, tol):
    for r in release:
        if abs(r - t) <= tol:
            return r
    return None


def cross_validate(mc: MeanFieldSolution, dde: MeanFieldSolution, level: float = 0.01) -> dict:
    """Sup-grid gaps between a Monte-Carlo and a deterministic solution.

    The band is Bonferroni-simultaneous over the grid at the given level
    from the particle standard errors.
    """
    grid = mc.grid
    lam_d = np.vstack([np.interp(grid, dde.grid, row) for row in dde.lambda_bar])
    x_d = np.vstack([np.interp(grid, dde.grid, row) for row in dde.x])
    gap = np.abs(mc.lambda_bar - lam_d)
    xgap = np.abs(mc.x - x_d)
    if mc.lambda_se is None:
        se = np.zeros_like(gap)
    else:
        se = mc.lambda_se
    z = stats.norm.ppf(1 - level / (2 * gap.size)) if gap.size else 0.0
    band = z * se
    return {
        "sup_lambda_gap": float(gap.max()),
        "sup_x_gap": float(xgap.max()),
        "band_z": float(z),
        "max_band": float(band.max()),
        "worst_excess": float(np.max(gap - band)),
        "within_band": bool(np.all(gap <= band + 1e-12)),
    }
