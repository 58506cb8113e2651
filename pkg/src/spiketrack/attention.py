"""Softmax-free spike-driven self-attention (E-SDSA).

With no softmax between them, ``(Q K^T) V`` and ``Q (K^T V)`` are the same
tensor; the second costs ``O(N C^2)`` instead of ``O(N^2 C)`` and is the
default. ``K^T V`` is also what the memory-retrieval module caches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .layers import Ctx, init_linear, init_sn
from .neuron import NiLifParams
from .nnops import LinearSpec
from .spiketensor import SpikeTensor

ORDERS = ("linear", "quadratic")


def default_scale(channels: int) -> float:
    return 1.0 / np.sqrt(channels)


def _split_heads(x: Var, heads: int) -> Var:
    if heads == 1:
        return x
    n, c = x.shape[-2:]
    x = ad.reshape(x, x.shape[:-1] + (heads, c // heads))
    return ad.swapaxes(x, -2, -3)


def _merge_heads(x: Var, heads: int) -> Var:
    if heads == 1:
        return x
    x = ad.swapaxes(x, -2, -3)
    return ad.reshape(x, x.shape[:-2] + (x.shape[-2] * x.shape[-1],))


def esdsa(ctx: Ctx, s: Var, prefix: str, *, heads: int = 1, scale: float | None = None, order: str = "linear") -> Var:
    """Attention over spike tokens ``s`` shaped ``[T, ..., N, C]``.

    Returns the membrane-domain output of the ``1/gamma`` projection.
    """
    if order not in ORDERS:
        raise ValueError(f"unknown attention order {order!r}")
    q = ctx.sn(ctx.linear(s, prefix + ".q", "attention_qkv"), prefix + ".sn_q")
    k = ctx.sn(ctx.linear(s, prefix + ".k", "attention_qkv"), prefix + ".sn_k")
    v = ctx.sn(ctx.linear(s, prefix + ".v", "attention_qkv"), prefix + ".sn_v")
    n, c = q.shape[-2:]
    cv = v.shape[-1]
    if scale is None:
        scale = default_scale(c)
    qh, kh, vh = (_split_heads(t, heads) for t in (q, k, v))
    kt = ad.swapaxes(kh, -1, -2)
    if order == "linear":
        kv = ctx.matmul(kt, vh, prefix + ".kv", stats_of=k, ann_flops=n * n * c)
        a = ctx.matmul(qh, kv, prefix + ".qkv", stats_of=q, ann_flops=n * n * cv)
    else:
        qk = ctx.matmul(qh, kt, prefix + ".qk", stats_of=q, ann_flops=n * n * c)
        a = ctx.matmul(qk, vh, prefix + ".qkv", stats_of=v, ann_flops=n * n * cv)
    ctx.note(prefix + ".scale", "scale_absent", s, ann_flops=n * n)
    ctx.note(prefix + ".softmax", "softmax_absent", s, ann_flops=2 * n * n)
    a = _merge_heads(a * scale, heads)
    return ctx.linear(ctx.sn(a, prefix + ".sn_attn"), prefix + ".proj")


def init_esdsa(store: dict, prefix: str, channels: int, gamma: int, timesteps: int, rng, gain: float = 1.0):
    init_linear(store, prefix + ".q", channels, channels, rng, gain)
    init_linear(store, prefix + ".k", channels, channels, rng, gain)
    init_linear(store, prefix + ".v", channels, gamma * channels, rng, gain)
    init_linear(store, prefix + ".proj", gamma * channels, channels, rng, gain)
    for n in ("sn_q", "sn_k", "sn_v", "sn_attn"):
        init_sn(store, f"{prefix}.{n}", timesteps)


@dataclass
class EsdsaSpec:
    """Stand-alone attention parameters (query/key/value/output projections)."""

    q: LinearSpec
    k: LinearSpec
    v: LinearSpec
    proj: LinearSpec
    neurons: dict[str, NiLifParams] = field(default_factory=dict)
    scale: float | None = None
    heads: int = 1
    d_cap: int = 4

    def __post_init__(self):
        c = self.q.out_features
        if self.k.out_features != c:
            raise ValueError("query and key widths differ")
        if self.v.out_features % c:
            raise ValueError("value width must be an integer multiple (gamma) of the attention width")
        if self.proj.in_features != self.v.out_features or self.proj.out_features != self.q.in_features:
            raise ValueError("output projection must map gamma*C back to the input width")
        if self.scale is not None and self.scale <= 0:
            raise ValueError("scale must be positive")
        if c % self.heads:
            raise ValueError("attention width not divisible by head count")

    @property
    def channels(self) -> int:
        return self.q.out_features

    @property
    def gamma(self) -> int:
        return self.v.out_features // self.q.out_features

    @classmethod
    def random(cls, rng, channels: int, gamma: int = 2, timesteps: int = 1, d_cap: int = 4, bias: bool = True, **kw):
        store: dict = {}
        init_esdsa(store, "a", channels, gamma, timesteps, rng)
        mk = lambda n: LinearSpec(store[f"a.{n}.weight"], store[f"a.{n}.bias"] if bias else None)  # noqa: E731
        return cls(mk("q"), mk("k"), mk("v"), mk("proj"), d_cap=d_cap, **kw)

    def params(self, prefix: str = "attn") -> dict:
        out = {}
        for n in ("q", "k", "v", "proj"):
            spec = getattr(self, n)
            out[f"{prefix}.{n}.weight"] = spec.weights
            if spec.bias is not None:
                out[f"{prefix}.{n}.bias"] = spec.bias
        for n in ("sn_q", "sn_k", "sn_v", "sn_attn"):
            p = self.neurons.get(n[3:], NiLifParams(d_cap=self.d_cap))
            out[f"{prefix}.{n}.theta"] = p.theta
        return out


def esdsa_forward(u: SpikeTensor, spec: EsdsaSpec, order: str = "linear", *, return_ops: bool = False):
    """E-SDSA on spike tokens ``u`` shaped ``[T, N, C]``.

    With ``return_ops`` also returns the number of multiply-accumulates spent
    in the two activation-activation products (the part whose cost depends
    on the order).
    """
    if u.shape[-1] != spec.q.in_features:
        raise ValueError(f"tokens have {u.shape[-1]} channels, attention expects {spec.q.in_features}")
    if u.d_cap != spec.d_cap:
        raise ValueError("spike d_cap differs from the attention's d_cap")
    ctx = Ctx(spec.params("attn"), spec.d_cap)
    x = Var(u.counts / u.d_cap)
    x.counts, x.d_cap = u.counts.astype(np.float64), u.d_cap
    out = esdsa(ctx, x, "attn", heads=spec.heads, scale=spec.scale, order=order)
    if return_ops:
        return out.value, ctx.product_ops
    return out.value


def kv_memory(k: SpikeTensor, v: SpikeTensor) -> np.ndarray:
    """``K^T V`` over densified spikes; tokens on axis -2, any leading axes summed."""
    if k.shape[:-1] != v.shape[:-1]:
        raise ValueError(f"key tokens {k.shape} and value tokens {v.shape} do not match")
    kc = k.counts.reshape(-1, k.shape[-1])
    vc = v.counts.reshape(-1, v.shape[-1])
    return (kc.T @ vc) / float(k.d_cap * v.d_cap)
