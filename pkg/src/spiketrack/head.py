"""Center-based prediction head and box decoding.

Three towers read the final search feature: a 1-channel score map, a
2-channel sub-cell offset map and a 2-channel normalised size map. Each
tower is ``SN -> conv3x3 -> SN -> conv3x3 -> SN -> conv1x1``; the last conv
has no neuron after it and its output goes through a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .layers import Ctx, init_conv, init_sn
from .nnops import hanning_2d

TOWERS = {"cls": 1, "offset": 2, "size": 2}

# sigmoid outputs at init: a sparse score map, cell-centred offsets, and the
# size a target has inside a crop expanded 4x around it
OUTPUT_PRIORS = {"cls": 0.1, "offset": 0.5, "size": 0.25}


@dataclass(frozen=True)
class BoxPrediction:
    cx: float
    cy: float
    w: float
    h: float
    score: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h])

    def clamped(self) -> "BoxPrediction":
        w, h = float(np.clip(self.w, 0, 1)), float(np.clip(self.h, 0, 1))
        cx = float(np.clip(self.cx, w / 2, 1 - w / 2))
        cy = float(np.clip(self.cy, h / 2, 1 - h / 2))
        return BoxPrediction(cx, cy, w, h, self.score)


def init_head(store: dict, in_channels: int, width: int, timesteps: int, rng, gain: float = 1.0):
    for tower, out in TOWERS.items():
        p = f"head.{tower}"
        init_sn(store, p + ".sn1", timesteps)
        init_conv(store, p + ".conv1", in_channels, width, 3, rng, gain=gain)
        init_sn(store, p + ".sn2", timesteps)
        init_conv(store, p + ".conv2", width, width, 3, rng, gain=gain)
        init_sn(store, p + ".sn3", timesteps)
        init_conv(store, p + ".conv3", width, out, 1, rng, gain=gain)
    set_output_priors(store)


def set_output_priors(store: dict, priors: dict = OUTPUT_PRIORS):
    """Point each tower's final bias at the logit of its prior output."""
    for tower, prior in priors.items():
        k = f"head.{tower}.conv3.bias"
        store[k] = np.full_like(store[k], np.log(prior / (1 - prior)))


def head_logits(ctx: Ctx, f: Var) -> dict[str, Var]:
    """Pre-sigmoid maps per tower, averaged over timesteps: ``[..., k, n, n]``."""
    out = {}
    for tower in TOWERS:
        p = f"head.{tower}"
        y = ctx.conv(ctx.sn(f, p + ".sn1"), p + ".conv1")
        y = ctx.conv(ctx.sn(y, p + ".sn2"), p + ".conv2")
        y = ctx.conv(ctx.sn(y, p + ".sn3"), p + ".conv3", "pointwise")
        out[tower] = ad.mean(y, axis=0)
    return out


def head_forward(ctx: Ctx, f: Var):
    """``(score, offset, size)`` maps after the sigmoid."""
    lg = head_logits(ctx, f)
    return tuple(ad.sigmoid(lg[t]).value for t in TOWERS)


def decode_box(score, offset, size, penalty=None, composition: str = "multiply", window_weight: float = 0.49) -> BoxPrediction:
    """Box at the best cell of ``score`` (``[n, n]`` or ``[1, n, n]``).

    The penalty only steers the selection; the reported score is the raw
    value at the selected cell. Ties go to the smallest flat index.
    """
    score = np.asarray(score, dtype=np.float64).reshape(np.shape(score)[-2:])
    offset = np.asarray(offset, dtype=np.float64)
    size = np.asarray(size, dtype=np.float64)
    n_y, n_x = score.shape
    if offset.shape[-2:] != score.shape or size.shape[-2:] != score.shape:
        raise ValueError("score, offset and size maps must share extents")
    sel = score
    if penalty is not None:
        penalty = np.asarray(penalty, dtype=np.float64)
        if composition == "multiply":
            sel = score * penalty
        elif composition == "weighted_sum":
            sel = (1 - window_weight) * score + window_weight * penalty
        else:
            raise ValueError(f"unknown penalty composition {composition!r}")
    idx = int(np.argmax(sel))  # first maximum in flat order
    iy, ix = divmod(idx, n_x)
    cx = (ix + offset[0, iy, ix]) / n_x
    cy = (iy + offset[1, iy, ix]) / n_y
    return BoxPrediction(float(cx), float(cy), float(size[0, iy, ix]), float(size[1, iy, ix]), float(score[iy, ix]))


def encode_targets(box, n: int):
    """Target cell ``(iy, ix)``, in-cell offset ``(ox, oy)`` and size ``(w, h)``."""
    cx, cy, w, h = (float(v) for v in (box.as_array() if isinstance(box, BoxPrediction) else box))
    if w <= 0 or h <= 0:
        raise ValueError("degenerate box (zero width or height)")
    if not (0 <= cx <= 1 and 0 <= cy <= 1):
        raise ValueError("box center outside the unit square")
    ix = min(int(np.floor(cx * n)), n - 1)
    iy = min(int(np.floor(cy * n)), n - 1)
    return (iy, ix), (cx * n - ix, cy * n - iy), (w, h)


def target_maps(box, n: int):
    """Dense offset/size targets at the center cell (for decode round trips)."""
    (iy, ix), (ox, oy), (w, h) = encode_targets(box, n)
    off = np.zeros((2, n, n))
    sz = np.zeros((2, n, n))
    off[:, iy, ix] = ox, oy
    sz[:, iy, ix] = w, h
    score = np.zeros((n, n))
    score[iy, ix] = 1.0
    return score, off, sz


def hanning_penalty(n: int) -> np.ndarray:
    return hanning_2d(n)
