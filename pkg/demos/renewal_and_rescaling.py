"""
Renewal units and the time-rescaling check
==========================================

A unit with a hard refractory period delta and constant rate c after it is a
renewal process: gaps are delta plus an Exp(c) wait, so the long run rate is
c / (1 + c delta). We simulate it, compare with that value, and then push the
event times through the compensator. Under the model the rescaled gaps are
unit exponentials.
"""
import numpy as np

from agehawkes import kernels as K
from agehawkes import rates as R
from agehawkes.experiments import rescaling_test
from agehawkes.network import AgeLaw, InitialSignal, NetworkConfig, Population, simulate

c, delta, T = 1.0, 1.0, 1e4
rate = R.hard_refractory(R.constant(c), delta)
cfg = NetworkConfig((Population(1, rate, InitialSignal(), AgeLaw()),),
                    K.KernelMatrix(((K.zero_kernel(),),)), T)
log = simulate(cfg, 1)
print(f"renewal: {len(log)} events, rate {len(log) / T:.4f}, closed form {c / (1 + c * delta):.4f}")

# gaps never fall below the refractory period
gaps = np.diff(log.times)
print(f"shortest gap {gaps.min():.4f} (delta = {delta})")

# now a unit that inhibits itself through an Erlang kernel
rate = R.hard_refractory(R.logistic(2.0, 1.0), 1.0)
cfg = NetworkConfig((Population(1, rate, InitialSignal(), AgeLaw()),),
                    K.KernelMatrix(((K.erlang(-0.5, 1.0, 0),),)), 5000.0)
log = simulate(cfg, 2)
rep = rescaling_test(log, cfg)
print(f"self-inhibiting unit: n={rep['n']} KS statistic {rep['ks_statistic']:.4f} p={rep['p_value']:.3f}")
