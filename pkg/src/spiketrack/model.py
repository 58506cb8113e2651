"""Backbone + retrieval + head, bound to one parameter store."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import BackboneConfig, build_bank, init_backbone, search_forward, template_forward
from .energy import EnergyTrace
from .head import TOWERS, head_logits, init_head, set_output_priors
from . import autodiff as ad
from .layers import Ctx


def default_head_width(cfg: BackboneConfig) -> int:
    return max(8, cfg.channels[-1] // 2)


def init_model(cfg: BackboneConfig, rng, head_width: int | None = None, gain: float = 1.0) -> dict:
    store = init_backbone(cfg, rng, gain)
    init_head(store, cfg.channels[-1], head_width or default_head_width(cfg), cfg.timesteps, rng, gain)
    return store


@dataclass
class SpikeTrack:
    """Weight-shared template and search branches over ``params``."""

    cfg: BackboneConfig
    params: dict

    def context(self, *, tape=None, trace: EnergyTrace | None = None, path: str = "mac", relaxed: bool = False) -> Ctx:
        return Ctx(self.params, self.cfg.d_cap, tape=tape, trace=trace, path=path, relaxed=relaxed, fixed_beta=self.cfg.fixed_beta)

    def template(self, z, ctx: Ctx | None = None):
        """Memory bank from templates ``[T_z, ..., 3, H, W]``."""
        ctx = ctx or self.context()
        return build_bank(ctx, template_forward(ctx, z, self.cfg), self.cfg)

    def logits(self, x, bank, ctx: Ctx | None = None):
        ctx = ctx or self.context()
        return head_logits(ctx, search_forward(ctx, x, self.cfg, bank))

    def maps(self, x, bank, ctx: Ctx | None = None):
        """``(score, offset, size)`` sigmoid maps for search images ``[1, ..., 3, H, W]``."""
        lg = self.logits(x, bank, ctx)
        return tuple(ad.sigmoid(lg[t]).value for t in TOWERS)

    def score_grid(self, hw) -> int:
        return hw[0] // self.cfg.stride


def calibrate(model: SpikeTrack, z, x, target: float = 1.0) -> dict:
    """Data-driven init: one pass per branch rescaling every conv/linear so
    its output on the sample batch has standard deviation ``target``
    (in units of the neuron's integer step). Stands in for batch norm."""
    ctx = model.context()
    ctx.calibrate = target
    bank = model.template(z, ctx)
    model.logits(x, bank, ctx)
    set_output_priors(model.params)  # the rescale above scaled the head biases too
    return model.params


def zero_head_confidence(params: dict, confidence: float) -> dict:
    """Copy of ``params`` whose score map is the constant ``confidence`` everywhere."""
    out = dict(params)
    out["head.cls.conv3.weight"] = np.zeros_like(params["head.cls.conv3.weight"])
    out["head.cls.conv3.bias"] = np.full_like(params["head.cls.conv3.bias"], np.log(confidence / (1 - confidence)))
    return out
