"""Run context shared by every model component.

Model code is written once against :class:`Ctx`. The context decides where
parameters come from (plain arrays, or tape-tracked variables for training),
which evaluation path linear operators take, and whether energy records and
FLOP counters are collected.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from . import autodiff as ad
from . import nnops
from .autodiff import Var
from .energy import EnergyTrace, LayerEnergyRecord
from .spiketensor import FiringStats, SpikeTensor, sfr_measure


class Ctx:
    def __init__(
        self,
        params: dict,
        d_cap: int = 4,
        *,
        tape: ad.Tape | None = None,
        trace: EnergyTrace | None = None,
        path: str = "mac",
        relaxed: bool = False,
        fixed_beta: float | None = None,
        branch: str = "search",
    ):
        self.params = params
        self.d_cap = d_cap
        self.tape = tape
        self.trace = trace
        self.path = path
        self.relaxed = relaxed
        self.fixed_beta = fixed_beta
        self.branch = branch
        self.flops: dict[str, int] = defaultdict(int)
        self.product_ops = 0  # MACs spent in activation-activation products
        self.calibrate: float | None = None  # target output std for data-driven init

    def _calibrated(self, y: Var, name: str) -> Var:
        # rescale the layer's weights so this batch's output has the target std
        if self.calibrate is None or self.tape is not None:
            return y
        sd = float(y.value.std())
        if sd < 1e-12:
            return y
        k = self.calibrate / sd
        self.params[name + ".weight"] = self.params[name + ".weight"] * k
        if name + ".bias" in self.params:
            self.params[name + ".bias"] = self.params[name + ".bias"] * k
        return Var(y.value * k)

    def p(self, name: str) -> Var:
        if self.tape is not None:
            return self.tape.param(name, self.params[name])
        return Var(self.params[name], name=name)

    def has(self, name: str) -> bool:
        return name in self.params

    # -- instrumentation

    def _stats(self, x: Var) -> FiringStats:
        if x.counts is None or self.relaxed:
            return FiringStats.dense(x.value.size, x.shape[0])
        return sfr_measure(SpikeTensor(x.counts, x.d_cap))

    def _record(self, name, op_class, flops, x: Var, ann_flops=None, stats=None):
        T = x.shape[0]
        self.flops[self.branch] += int(flops) * T
        if self.trace is not None:
            self.trace.add(
                LayerEnergyRecord(
                    name=name,
                    op_class=op_class,
                    flops=float(flops),
                    timesteps=T,
                    d_cap=self.d_cap,
                    firing=stats if stats is not None else self._stats(x),
                    branch=self.branch,
                    ann_flops=ann_flops,
                )
            )

    # -- operators

    def sn(self, y: Var, name: str) -> Var:
        theta = None if self.fixed_beta is not None else self.p(name + ".theta")
        return ad.nilif(y, theta, self.d_cap, self.fixed_beta, self.relaxed)

    def _spikes(self, x: Var) -> SpikeTensor | None:
        if self.path != "ac" or self.tape is not None or self.relaxed or x.counts is None:
            return None
        return SpikeTensor(x.counts.astype(np.int64), x.d_cap)

    def conv(self, x: Var, name: str, kind: str = "full", stride: int = 1, op_class: str = "conv_ac") -> Var:
        w = self.p(name + ".weight")
        b = self.p(name + ".bias") if self.has(name + ".bias") else None
        spec = nnops.ConvSpec(kind, w.value, None if b is None else b.value, stride)
        h, wd = x.shape[-2:]
        per_sample = int(np.prod(x.shape[1:-3], dtype=np.int64))
        self._record(name, op_class, spec.macs(h, wd) * per_sample, x)
        s = self._spikes(x)
        if s is not None:
            return self._calibrated(Var(nnops.conv2d(s, spec, "ac")), name)
        return self._calibrated(ad.conv2d(x, w, b, stride, spec.pad, spec.groups), name)

    def linear(self, x: Var, name: str, op_class: str = "linear_ac") -> Var:
        w = self.p(name + ".weight")
        b = self.p(name + ".bias") if self.has(name + ".bias") else None
        tokens = int(np.prod(x.shape[1:-1], dtype=np.int64))
        self._record(name, op_class, w.shape[0] * w.shape[1] * tokens, x)
        s = self._spikes(x)
        if s is not None:
            return self._calibrated(Var(nnops.linear(s, nnops.LinearSpec(w.value, None if b is None else b.value), "ac")), name)
        return self._calibrated(ad.linear(x, w, b), name)

    def matmul(self, a: Var, b: Var, name: str | None = None, op_class: str = "attention_product",
               stats_of: Var | None = None, ann_flops=None) -> Var:
        """Counted product of two activation tensors (attention / memory)."""
        m, k = a.shape[-2:]
        n = b.shape[-1]
        lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        per_t = int(np.prod(lead[1:], dtype=np.int64)) * m * k * n if len(lead) else m * k * n
        ref = stats_of if stats_of is not None else a
        self.product_ops += per_t * (lead[0] if len(lead) else 1)
        if name is not None:
            self._record(name, op_class, per_t, ref, ann_flops=ann_flops)
        else:
            self.flops[self.branch] += per_t * (lead[0] if len(lead) else 1)
        return ad.matmul(a, b)

    def note(self, name: str, op_class: str, x: Var, ann_flops: float):
        """Record an operation the spike-driven path does not execute (scale, softmax)."""
        if self.trace is not None:
            self.trace.add(
                LayerEnergyRecord(name, op_class, 0.0, x.shape[0], self.d_cap, FiringStats.dense(), self.branch, ann_flops)
            )


# ---------------------------------------------------------------- tensor helpers


def to_tokens(u: Var) -> Var:
    """``[..., C, H, W]`` -> ``[..., H*W, C]``."""
    c, h, w = u.shape[-3:]
    return ad.swapaxes(ad.reshape(u, u.shape[:-3] + (c, h * w)), -1, -2)


def to_map(x: Var, hw) -> Var:
    """``[..., N, C]`` -> ``[..., C, H, W]``."""
    c = x.shape[-1]
    return ad.reshape(ad.swapaxes(x, -1, -2), x.shape[:-2] + (c,) + tuple(hw))


# ---------------------------------------------------------------- initialisation


def init_conv(store: dict, name: str, c_in: int, c_out: int, k: int, rng, kind: str = "full", gain: float = 1.0, bias: bool = True):
    fan_in = k * k * (1 if kind == "depthwise" else c_in)
    shape = (c_out, 1 if kind == "depthwise" else c_in, k, k)
    store[name + ".weight"] = rng.normal(0.0, gain * np.sqrt(2.0 / fan_in), size=shape)
    if bias:
        store[name + ".bias"] = np.zeros(c_out)


def init_linear(store: dict, name: str, c_in: int, c_out: int, rng, gain: float = 1.0, bias: bool = True):
    store[name + ".weight"] = rng.normal(0.0, gain * np.sqrt(2.0 / c_in), size=(c_out, c_in))
    if bias:
        store[name + ".bias"] = np.zeros(c_out)


def init_sn(store: dict, name: str, timesteps: int):
    store[name + ".theta"] = np.zeros(max(1, timesteps))
