"""
Softmax-free attention in two orders
====================================

Without a softmax, (Q K^T) V and Q (K^T V) are the same tensor. The second
order never builds the N x N token matrix.
"""

import numpy as np

from spiketrack.attention import EsdsaSpec, esdsa_forward
from spiketrack.spiketensor import random_spikes

rng = np.random.default_rng(0)
spec = EsdsaSpec.random(rng, channels=16, gamma=2)

# %%
print(f"{'N':>5} {'quadratic ops':>14} {'linear ops':>11} {'max diff':>9}")
for n in (8, 16, 32, 64, 128):
    u = random_spikes(rng, (1, n, 16), 4, density=0.3)
    a, ops_lin = esdsa_forward(u, spec, "linear", return_ops=True)
    b, ops_quad = esdsa_forward(u, spec, "quadratic", return_ops=True)
    print(f"{n:5d} {ops_quad:14d} {ops_lin:11d} {np.max(np.abs(a - b)):9.1e}")

# %%
# Doubling N doubles the linear-order cost and quadruples the quadratic one.
