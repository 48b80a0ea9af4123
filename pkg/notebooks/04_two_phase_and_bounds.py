"""
Layer-wise training and linear-method lower bounds
==================================================
"""

import numpy as np

from msplab.activation import Activation
from msplab.bounds import gram_permuted_class, polyk_bound, staircase_bound, staircase_row_average
from msplab.fourier import FourierFunction, from_string
from msplab.recurrence import continuous_oracle_check
from msplab.twophase import certify, phase2

act = Activation.shifted_sigmoid(0.5)

# phase 1 then the kernel of the frozen first layer; lambda_min grows like a
# power of T1 and only clears the certification threshold for longer phase 1
for spec in ("z1 + z1z2", "z1 + z1z2 + z1z2z3"):
    h = from_string(spec)
    for T1 in (0.1, 1.0, 2.0, 8.0):
        cert, fmap, K = certify(h, act, T1)
        print(f"{spec:20s} T1={T1}: lambda_min={cert.lambda_min:.3e} certified={cert.certified}")
    if cert.certified:
        print(phase2(K, h, fmap, act, target=1e-3).report())

# at small T1 the first-layer map is close to its Taylor polynomial in t
print(continuous_oracle_check(from_string("z1 + z1z2 + z1z2z3"), act, 3).line())

# linear methods need many features for permuted staircases
print(polyk_bound(4, 2, 1, 1.0).line())
print(staircase_bound(10, 4, 1.0).line())
c = 1 / np.sqrt(3)
G = gram_permuted_class(FourierFunction.from_sets(3, [((1,), c), ((1, 2), c), ((1, 2, 3), c)]), 5)
print("M", G.M, "row average", G.row_average(), "closed form", staircase_row_average(5, 3, 1))
print("op norm", G.opnorm(), "bound at eps=0", G.M / G.opnorm())
print(np.round(G.G[:4, :4], 3))
