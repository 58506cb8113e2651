"""Memory retrieval: template memory ``M = K^T V`` and the search-side loop.

Per tap, the template branch pools its feature to the final-stage grid,
projects keys and values and sums ``K_t^T V_t`` over template timesteps.
The search branch queries ``M`` in a short recurrent loop (retrieve, one
separable conv per template timestep, feedback projection), fuses the
timestep planes with sigmoid channel gates and adds the upsampled result
back into its own stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .blocks import init_ssconv, ssconv
from .layers import Ctx, init_linear, init_sn, to_map, to_tokens

MODES = ("mrm", "cross_attention")


@dataclass(frozen=True)
class MrmConfig:
    loops: int = 1
    gamma: int = 2
    scale: float | None = None  # None -> 1/sqrt(C)
    layerscale_init: float = 1e-2
    mode: str = "mrm"

    def __post_init__(self):
        if self.loops < 0:
            raise ValueError("loop count must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"unknown retrieval mode {self.mode!r}")


@dataclass
class MemoryEntry:
    memory: np.ndarray  # [..., C, gamma*C]; for the cross-attention stub, unused
    tap_hw: tuple
    grid_hw: tuple
    channels: int
    timesteps: int
    keys: np.ndarray | None = None  # cross-attention stub only
    values: np.ndarray | None = None
    var: Var | None = field(default=None, repr=False)  # tape-tracked memory during training


def init_mrm(store: dict, prefix: str, channels: int, timesteps: int, cfg: MrmConfig, rng, gain: float = 1.0):
    c, cv = channels, cfg.gamma * channels
    for n in ("sn_kv", "sn_k", "sn_v", "sn_qin", "sn_q", "sn_ret", "sn_fb", "sn_qloop", "sn_out", "sn_w1", "sn_w2", "sn_fuse"):
        init_sn(store, f"{prefix}.{n}", timesteps)
    init_linear(store, prefix + ".k", c, c, rng, gain)
    init_linear(store, prefix + ".v", c, cv, rng, gain)
    init_linear(store, prefix + ".q", c, c, rng, gain)
    for t in range(timesteps):
        init_ssconv(store, f"{prefix}.ssconv{t}", cv, cv, 1, rng, spiking_input=True, gain=gain)
    init_linear(store, prefix + ".project", cv, c, rng, gain)
    store[prefix + ".layerscale"] = np.full(c, cfg.layerscale_init)
    init_linear(store, prefix + ".fuse1", c, c, rng, gain)
    init_linear(store, prefix + ".fuse2", c, c, rng, gain)
    init_linear(store, prefix + ".out", c, c, rng, gain)


def _pool(ctx: Ctx, f: Var, grid_hw) -> Var:
    return f if tuple(f.shape[-2:]) == tuple(grid_hw) else ad.avg_pool(f, grid_hw)


def build_memory(ctx: Ctx, f_z: Var, prefix: str, grid_hw, cfg: MrmConfig = MrmConfig()) -> MemoryEntry:
    """Memory for one tap from template features ``[T_z, ..., C, H, W]``."""
    if f_z.ndim < 4:
        raise ValueError(f"template tap must be [T, ..., C, H, W], got {f_z.shape}")
    tokens = to_tokens(_pool(ctx, f_z, grid_hw))
    s = ctx.sn(tokens, prefix + ".sn_kv")
    k = ctx.sn(ctx.linear(s, prefix + ".k"), prefix + ".sn_k")
    v = ctx.sn(ctx.linear(s, prefix + ".v"), prefix + ".sn_v")
    T = f_z.shape[0]
    entry = MemoryEntry(None, tuple(f_z.shape[-2:]), tuple(grid_hw), f_z.shape[-3], T)
    if cfg.mode == "cross_attention":
        entry.keys, entry.values = k.value, v.value
        entry.memory = np.zeros(0)
        entry.var = (k, v)
        return entry
    n = k.shape[-2]
    kv = ctx.matmul(ad.swapaxes(k, -1, -2), v, prefix + ".kv", stats_of=k, ann_flops=n * n * k.shape[-1])
    m = ad.sum(kv, axis=0)
    entry.memory, entry.var = m.value, m
    return entry


def _spike_plane(q: Var, t: int, hw) -> Var:
    """Timestep ``t`` of spike tokens ``q`` as a one-step map, keeping counts."""
    out = to_map(ad.index(q, slice(t, t + 1)), hw)
    c = q.counts[t : t + 1]
    out.counts = np.swapaxes(c, -1, -2).reshape(out.shape)
    out.d_cap = q.d_cap
    return out


def _memory_var(entry: MemoryEntry):
    if entry.var is not None:
        return entry.var
    if entry.keys is not None:
        return Var(entry.keys), Var(entry.values)
    return Var(entry.memory)


def _cross_attention(ctx: Ctx, q: Var, entry: MemoryEntry, prefix: str, scale: float) -> Var:
    # dense softmax cross-attention over all template tokens, comparison stub only
    k, v = _memory_var(entry)
    kt = np.concatenate(list(k.value), axis=-2)
    vt = np.concatenate(list(v.value), axis=-2)
    logits = q.value @ np.swapaxes(kt, -1, -2) * scale
    logits -= logits.max(axis=-1, keepdims=True)
    a = np.exp(logits)
    a /= a.sum(axis=-1, keepdims=True)
    return Var(a @ vt)


def retrieve(ctx: Ctx, f_x: Var, entry: MemoryEntry, prefix: str, cfg: MrmConfig = MrmConfig()) -> Var:
    """Retrieval output at the tap resolution, shaped like ``f_x``.

    The caller adds it to the search stream.
    """
    if tuple(f_x.shape[-2:]) != entry.tap_hw or f_x.shape[-3] != entry.channels:
        raise ValueError(
            f"search tap {f_x.shape} does not match memory built for "
            f"{entry.channels} channels at {entry.tap_hw}"
        )
    T = entry.timesteps
    c = entry.channels
    scale = cfg.scale if cfg.scale is not None else 1.0 / np.sqrt(c)
    tokens = to_tokens(_pool(ctx, f_x, entry.grid_hw))
    q0 = ctx.sn(ctx.linear(ctx.sn(tokens, prefix + ".sn_qin"), prefix + ".q"), prefix + ".sn_q")
    if q0.shape[0] not in (1, T):
        raise ValueError(f"search has {q0.shape[0]} timesteps, memory has {T}")
    # temporal expansion: replicate the search query to one plane per template timestep
    qs = q0 if q0.shape[0] == T else ad.broadcast_to(q0, (T,) + q0.shape[1:])
    if q0.counts is not None and qs is not q0:
        qs.counts, qs.d_cap = np.broadcast_to(q0.counts, qs.shape), q0.d_cap
    n = qs.shape[-2]

    if cfg.mode == "cross_attention":
        fused = ctx.linear(_cross_attention(ctx, qs, entry, prefix, scale), prefix + ".project")
        out = ctx.linear(ctx.sn(ad.mean(fused, axis=0, keepdims=True), prefix + ".sn_fuse"), prefix + ".out")
        return _inject(out, f_x, entry)

    m = _memory_var(entry)
    q = None
    for i in range(cfg.loops):
        if i > 0:
            qs = ctx.sn(q, prefix + ".sn_qloop")
        # global retrieval from the template memory
        r = ctx.matmul(qs, m, prefix + f".retrieve{i}", stats_of=qs, ann_flops=n * c * m.shape[-1]) * scale
        r = ctx.sn(r, prefix + ".sn_ret")
        # detail construction, one operator per template timestep
        planes = [ssconv(ctx, _spike_plane(r, t, entry.grid_hw), f"{prefix}.ssconv{t}", spiking_input=True) for t in range(T)]
        detail = to_tokens(ad.concat(planes, axis=0))
        # feedback projection
        fb = ctx.linear(ctx.sn(r + detail, prefix + ".sn_fb"), prefix + ".project")
        q = fb if q is None else q + ctx.p(prefix + ".layerscale") * fb
    qn = qs if q is None else ctx.sn(q, prefix + ".sn_out")

    # temporal fusion with channel gates
    g = ad.mean(qn, axis=-2, keepdims=True)
    g = ctx.linear(ctx.sn(g, prefix + ".sn_w1"), prefix + ".fuse1")
    w = ad.sigmoid(ctx.linear(ctx.sn(g, prefix + ".sn_w2"), prefix + ".fuse2"))
    # gate the integer counts (qn * D) so single spikes survive the fusion neuron
    fused = ad.sum(w * qn * float(ctx.d_cap), axis=0, keepdims=True)
    out = ctx.linear(ctx.sn(fused, prefix + ".sn_fuse"), prefix + ".out")
    return _inject(out, f_x, entry)


def _inject(out: Var, f_x: Var, entry: MemoryEntry) -> Var:
    y = to_map(out, entry.grid_hw)
    if entry.grid_hw != entry.tap_hw:
        y = ad.upsample(y, entry.tap_hw)
    return y if y.shape == f_x.shape else ad.broadcast_to(y, f_x.shape)
