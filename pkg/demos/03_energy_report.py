"""
Energy bookkeeping
==================

Run the tracker for a few frames with a tracing context, then print the
per-layer report. Spike-driven layers cost one accumulate per unit spike;
the stem sees dense pixels and is charged a multiply-accumulate.
"""

from importlib import resources

import numpy as np

from spiketrack.backbone import BackboneConfig
from spiketrack.energy import EnergyTrace, energy_report, load_sfr_table, stage_energies
from spiketrack.model import SpikeTrack, calibrate, init_model
from spiketrack.synthetic import moving_square
from spiketrack.tracker import Tracker, TrackerConfig, crop

cfg = BackboneConfig(template_timesteps=2)
model = SpikeTrack(cfg, init_model(cfg, np.random.default_rng(0)))
frames, boxes = moving_square(6)
z, _ = crop(frames[0], boxes[0], 4, 64)
x, _ = crop(frames[1], boxes[0], 4, 64)
calibrate(model, np.stack([z, z])[:, None], x[None, None])

# %%
trace = EnergyTrace()
Tracker(model, TrackerConfig(), trace=trace).run(frames, boxes[0])
rep = energy_report(trace, interval=25)
print("\n".join(rep.to_text().splitlines()[:8]), "\n   ...")
print("\n".join(rep.to_text().splitlines()[-3:]))

# %%
# A published per-layer firing-rate table can be replayed directly. FLOPs are
# not part of such tables, so every layer counts as one FLOP here.
table = resources.files("spiketrack") / "data" / "sfr_b256_t3_template.csv"
for stage, e in stage_energies(load_sfr_table(table)).items():
    print(f"{stage}: {e:8.2f} pJ per FLOP-unit")
