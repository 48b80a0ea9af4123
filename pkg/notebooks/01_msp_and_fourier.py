"""
Merged staircases and Walsh coefficients
========================================

Classify a few latent targets, look at the greedy ordering, and round-trip a
target through its hypercube table.
"""

from msplab.fourier import evaluate, from_string, is_msp, walsh_transform
from msplab.numerics import hypercube

# a target is a sum of monomials in the latent coordinates
targets = ["z1 + z1z2 + z1z2z3", "z1 + z1z2 + z2z3 + z3z4", "z1z2z3", "z1 + z1z2z3 + z1z2z3z4"]
for spec in targets:
    h = from_string(spec)
    print(f"{spec:28s} {is_msp(h.structure(), h).describe()}")

# the table on {-1,+1}^P and back
h = from_string("z1 - 0.5z1z2 + 0.25z2z3")
table = evaluate(h, hypercube(h.P))
print(table)
print(walsh_transform(table))

# non-MSP targets have coordinates no staircase reaches; the risk cannot drop below
# the mass sitting on them
h = from_string("z1 + z1z2z3 + z1z2z3z4")
res = is_msp(h.structure(), h)
print("blocked mask", bin(res.blocked_coords), "stuck risk", res.stuck_risk_lower_bound)
