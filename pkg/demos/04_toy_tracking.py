"""
Overfitting a toy tracker
=========================

Train the small model on crops of one synthetic sequence (a bright square
moving over black), then track the square through all of its frames.
Takes a few minutes on one core.
"""

import time

import numpy as np

from spiketrack.tracker import Tracker, iou_xywh
from spiketrack.train import TOY_CONFIG, TrainConfig, evaluate, toy_setup, toy_train

tcfg = TrainConfig()
model, data, frames, boxes = toy_setup(TOY_CONFIG, seed=tcfg.seed, batch=tcfg.batch)

# %%
t0 = time.time()
hist = toy_train(model, data, tcfg, callback=lambda i, loss, parts: i % 25 or print(f"step {i:3d} loss {loss:.3f}"))
print(f"trained {tcfg.steps} steps in {time.time() - t0:.0f} s; loss {hist[0]:.3f} -> {evaluate(model, data):.3f}")

# %%
res = Tracker(model).run(frames, boxes[0])
ious = np.array([iou_xywh(r.box, b) for r, b in zip(res, boxes)])
print(f"mean IoU {ious.mean():.3f}, worst {ious.min():.3f}")
for r, b, i in list(zip(res, boxes, ious))[::10]:
    print(f"frame {r.index:2d} predicted {np.round(r.box, 1)} truth {np.round(b, 1)} IoU {i:.2f}")

# %%
# On the training crops themselves: the right cell is found, but compare the
# centre error with how far the crops were jittered around the target.
from spiketrack.head import decode_box

ctx = model.context()
score, offset, size = model.maps(data.searches, model.template(data.templates, ctx), ctx)
pred = np.array([decode_box(score[b], offset[b], size[b]).as_array() for b in range(len(data.boxes))])
err = np.abs(pred[:, :2] - data.boxes[:, :2]).mean()
spread = np.abs(data.boxes[:, :2] - data.boxes[:, :2].mean(0)).mean()
print(f"centre error {err:.4f} of the crop; jitter spread {spread:.4f}")
