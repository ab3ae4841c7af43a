"""
Mean-field limit: two solvers and the equilibrium
=================================================

In the large network limit the memory of a population is a deterministic
curve x(t). For a hard refractory rate it can be obtained two ways: a
Monte-Carlo Picard iteration over independent particles, and a delay
differential equation for the mass p(t) of units out of their refractory
period. Both should settle at the fixed point lambda_bar solving
1/lambda = delta + 1/f(lambda * int h).
"""
import numpy as np

from agehawkes import kernels as K
from agehawkes import rates as R
from agehawkes.meanfield import cross_validate, solve_hard_refractory_dde, solve_picard_mc
from agehawkes.network import AgeLaw, InitialSignal, NetworkConfig, Population
from agehawkes.stationary import solve_fixed_point

rate = R.hard_refractory(R.logistic(3.0, 2.0), 1.0)
ker = K.erlang(-1.0, 1.0, 1)
pop = Population(1, rate, InitialSignal("exponential", amplitude=1.0), AgeLaw("exponential", rate=1.0))
cfg = NetworkConfig((pop,), K.KernelMatrix(((ker,),)), 30.0, "mean_field")

mc = solve_picard_mc(cfg, particles=4000, seed=3)
dde = solve_hard_refractory_dde(cfg)
cv = cross_validate(mc, dde)
print(f"Picard iterations: {len(mc.deviations)}, last deviation {mc.deviations[-1]:.2e}")
print(f"sup |lambda_mc - lambda_dde| = {cv['sup_lambda_gap']:.4f}, band {cv['max_band']:.4f}")

fp = solve_fixed_point(rate, ker.integral())
print(f"fixed point lambda_bar = {fp.lambda_bar:.5f}, x* = {fp.x_star:.5f}")
for t in (1.0, 5.0, 10.0, 30.0):
    i = np.searchsorted(dde.grid, t)
    print(f"  t={t:5.1f}  dde lambda {dde.lambda_bar[0, i]:.5f}  x {dde.x[0, i]:+.5f}")
