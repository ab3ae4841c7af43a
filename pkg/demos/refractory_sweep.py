"""
How the equilibrium rate depends on the refractory period
=========================================================

Lengthening the refractory period delta calms an inhibitory population down.
For excitatory coupling the picture is less simple. Differentiating the
fixed point equation gives

    d lambda / d delta = -lambda^2 / (1 - lambda^2 H f'(x) / f(x)^2),  x = lambda H.

The denominator is positive exactly when the fixed point map crosses the
identity from above, which is the case whenever the root is unique. So a
unique equilibrium always decreases in delta, also when H > 0. An increase
only shows up on the middle root when f is steep enough for three roots.
"""
import numpy as np

from agehawkes import rates as R
from agehawkes.stationary import delta_sweep, solve_fixed_point

deltas = np.round(np.arange(0.1, 2.01, 0.1), 10)
for label, f, H in [("inhibitory", R.logistic(3.0, 2.0), -1.0),
                    ("excitatory", R.logistic(3.0, 1.0, 0.0, 0.5), 1.0)]:
    sw = delta_sweep(lambda d: R.hard_refractory(f, d), H, deltas)
    lam = sw["lambda_bar"]
    print(f"{label:10s} int h={H:+.0f}: verdict {sw['verdict']}, lambda_bar {lam[0]:.4f} -> {lam[-1]:.4f}")

# a steep excitatory f with three equilibria
f = R.logistic(5.0, 20.0, 1.0, 0.05)
for d in (0.10, 0.11):
    roots = solve_fixed_point(R.hard_refractory(f, d), 2.0, with_density=False).roots
    print(f"delta={d:.2f}: roots " + ", ".join(f"{r:.4f}" for r in roots))
print("the outer roots fall with delta, the middle (unstable) one rises")
