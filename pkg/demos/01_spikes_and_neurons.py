"""
Integer spikes and the leaky neuron
===================================

A neuron charges with its input, emits an integer between 0 and D, and keeps
the remainder as membrane potential for the next timestep.
"""

import numpy as np

from spiketrack.neuron import NiLifParams, nilif_sequence
from spiketrack.nnops import LinearSpec, linear
from spiketrack.spiketensor import SpikeTensor, sfr_measure, unit_spike_expand

# %%
# Feed a constant 0.6 for six steps. With decay 0.5 the leftover charge
# slowly builds up until it crosses the rounding threshold again.
p = NiLifParams(np.zeros(6), d_cap=4)
out = nilif_sequence([np.array([0.6])] * 6, p)
print("counts per step:", [int(s.counts[0]) for s in out])

# %%
# Larger inputs saturate at D; the surplus stays in the membrane.
out = nilif_sequence([np.array([9.0]), np.array([0.0])], p)
print("saturating input:", [int(s.counts[0]) for s in out])

# %%
# An integer spike is the sum of D binary planes, so any linear operator can
# be run plane by plane with only additions.
s = SpikeTensor(np.array([[0, 3, 4, 1]]), 4)
spec = LinearSpec(np.array([[1.0, -2.0, 0.5, 3.0]]))
planes = unit_spike_expand(s)
print("planes:", [p.tolist() for p in planes])
print("integer pass:", linear(s, spec), " plane sum:", sum(linear(SpikeTensor(p, 4), spec) for p in planes))

# %%
# Two activity readings are kept per tensor.
st = sfr_measure(s)
print(f"nonzero fraction {st.nonzero_fraction:.2f}, mean integer {st.mean_integer:.2f}")
