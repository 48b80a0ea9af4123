"""
Four-step staircase: dimension-free flow vs batch SGD
=====================================================

Runs the fig1 preset on a shorter horizon (t = 200) so it finishes in a few
seconds. Use ``msplab compare --preset fig1`` for the full run.
"""

from dataclasses import replace

import numpy as np

from msplab.activation import Activation
from msplab.dynamics import bsgd_train, coefficient_gap, crossing_times, dfpde_integrate
from msplab.fourier import from_string, set_label
from msplab.numerics import RngSpec
from msplab.presets import PRESETS

p = PRESETS["fig1"]
hp = replace(p.hp, horizon=200.0)
h = from_string(p.target)
act = Activation.shifted_sigmoid(0.5)

ref, _ = dfpde_integrate(h, hp, act, delta=p.delta)
sgd, _ = bsgd_train(h, hp, act, p.width, RngSpec(0), p.d)

# coefficient traces every 20 time units
print("t      " + "  ".join(f"{set_label(m):>12s}" for m in ref.sets))
for i in range(0, len(ref.times), 2):
    print(f"{ref.times[i]:6.0f} " + "  ".join(f"{a:6.3f}/{b:5.3f}" for a, b in zip(ref.C[i], sgd.C[i])))

print("risk at t=200: dfpde", ref.R[-1], "sgd", sgd.R[-1])
print("crossings of 0.5:", {set_label(m): t for m, t in crossing_times(ref).items()})
print("sup-time gap:", coefficient_gap(ref, sgd))

# degree 2 is picked up late: at t=200 its coefficient is still small
print(np.round(ref.C[-1], 3))
