"""CNN and Transformer spiking blocks.

Both blocks keep a membrane-domain residual stream ``u``; each sub-operator
starts with a spiking neuron, so ``u + op(u)`` adds dense tensors and the
spikes only ever travel into convolutions and linears.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import esdsa, init_esdsa
from .autodiff import Var
from .layers import Ctx, init_conv, init_linear, init_sn, to_map, to_tokens


def init_ssconv(store, prefix, c_in, c_out, timesteps, rng, *, c_mid=None, spiking_input=False, gain=1.0):
    c_mid = c_out if c_mid is None else c_mid
    init_conv(store, prefix + ".pw1", c_in, c_mid, 1, rng, gain=gain)
    init_conv(store, prefix + ".dw", c_mid, c_mid, 3, rng, kind="depthwise", gain=gain)
    init_conv(store, prefix + ".pw2", c_mid, c_out, 1, rng, gain=gain)
    names = ("sn2", "sn3") if spiking_input else ("sn1", "sn2", "sn3")
    for n in names:
        init_sn(store, f"{prefix}.{n}", timesteps)


def ssconv(ctx: Ctx, u: Var, prefix: str, spiking_input: bool = False) -> Var:
    """Separable conv: pw -> dw -> pw, a neuron in front of each.

    With ``spiking_input`` the input is already a spike tensor and the
    leading neuron is skipped (re-firing spikes would round them away).
    """
    s = u if spiking_input else ctx.sn(u, prefix + ".sn1")
    y = ctx.conv(s, prefix + ".pw1", "pointwise")
    y = ctx.conv(ctx.sn(y, prefix + ".sn2"), prefix + ".dw", "depthwise")
    return ctx.conv(ctx.sn(y, prefix + ".sn3"), prefix + ".pw2", "pointwise")


def init_cnn_block(store, prefix, channels, timesteps, rng, ratio=2, gain=1.0):
    init_ssconv(store, prefix + ".ssconv", channels, channels, timesteps, rng, gain=gain)
    init_conv(store, prefix + ".cconv.conv1", channels, ratio * channels, 1, rng, gain=gain)
    init_conv(store, prefix + ".cconv.conv2", ratio * channels, channels, 1, rng, gain=gain)
    init_sn(store, prefix + ".cconv.sn1", timesteps)
    init_sn(store, prefix + ".cconv.sn2", timesteps)


def cnn_block_fn(ctx: Ctx, u: Var, prefix: str) -> Var:
    u = u + ssconv(ctx, u, prefix + ".ssconv")
    y = ctx.conv(ctx.sn(u, prefix + ".cconv.sn1"), prefix + ".cconv.conv1", "pointwise")
    y = ctx.conv(ctx.sn(y, prefix + ".cconv.sn2"), prefix + ".cconv.conv2", "pointwise")
    return u + y


def init_transformer_block(store, prefix, channels, timesteps, rng, gamma=2, ratio=2, gain=1.0):
    init_ssconv(store, prefix + ".ssconv", channels, channels, timesteps, rng, gain=gain)
    init_sn(store, prefix + ".attn.sn_in", timesteps)
    init_esdsa(store, prefix + ".attn", channels, gamma, timesteps, rng, gain)
    init_sn(store, prefix + ".mlp.sn1", timesteps)
    init_linear(store, prefix + ".mlp.fc1", channels, ratio * channels, rng, gain)
    init_sn(store, prefix + ".mlp.sn2", timesteps)
    init_linear(store, prefix + ".mlp.fc2", ratio * channels, channels, rng, gain)


def transformer_block_fn(ctx: Ctx, u: Var, prefix: str, *, heads=1, scale=None, order="linear") -> Var:
    hw = u.shape[-2:]
    u = u + ssconv(ctx, u, prefix + ".ssconv")
    x = to_tokens(u)
    x = x + esdsa(ctx, ctx.sn(x, prefix + ".attn.sn_in"), prefix + ".attn", heads=heads, scale=scale, order=order)
    y = ctx.linear(ctx.sn(x, prefix + ".mlp.sn1"), prefix + ".mlp.fc1")
    y = ctx.linear(ctx.sn(y, prefix + ".mlp.sn2"), prefix + ".mlp.fc2")
    return to_map(x + y, hw)


@dataclass
class CnnBlockSpec:
    params: dict
    prefix: str = "block"
    d_cap: int = 4
    fixed_beta: float | None = None

    @classmethod
    def random(cls, rng, channels, timesteps=1, ratio=2, **kw):
        store = {}
        init_cnn_block(store, "block", channels, timesteps, rng, ratio)
        return cls(store, "block", **kw)

    def channels(self) -> int:
        return self.params[self.prefix + ".ssconv.pw1.weight"].shape[1]


@dataclass
class TransformerBlockSpec:
    params: dict
    prefix: str = "block"
    d_cap: int = 4
    fixed_beta: float | None = None
    heads: int = 1
    scale: float | None = None

    @classmethod
    def random(cls, rng, channels, timesteps=1, gamma=2, ratio=2, **kw):
        store = {}
        init_transformer_block(store, "block", channels, timesteps, rng, gamma, ratio)
        return cls(store, "block", **kw)

    def channels(self) -> int:
        return self.params[self.prefix + ".ssconv.pw1.weight"].shape[1]


def _check(u, spec):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim < 4 or u.shape[-3] != spec.channels():
        raise ValueError(f"block expects [T, ..., {spec.channels()}, H, W], got {u.shape}")
    return u


def cnn_block(u: np.ndarray, spec: CnnBlockSpec) -> np.ndarray:
    u = _check(u, spec)
    ctx = Ctx(spec.params, spec.d_cap, fixed_beta=spec.fixed_beta)
    return cnn_block_fn(ctx, Var(u), spec.prefix).value


def transformer_block(u: np.ndarray, spec: TransformerBlockSpec, order: str = "linear") -> np.ndarray:
    u = _check(u, spec)
    ctx = Ctx(spec.params, spec.d_cap, fixed_beta=spec.fixed_beta)
    return transformer_block_fn(ctx, Var(u), spec.prefix, heads=spec.heads, scale=spec.scale, order=order).value


def zero_weights(params: dict) -> dict:
    """Copy of ``params`` with every weight and bias zeroed (neuron decays kept)."""
    return {k: (np.zeros_like(v) if not k.endswith(".theta") else v.copy()) for k, v in params.items()}
