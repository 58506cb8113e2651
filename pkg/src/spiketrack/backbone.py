"""Asymmetric siamese backbone.

Topology (default): 7x7 stride-2 stem, stage 1 (CNN blocks), 3x3 stride-2
downsampler, stage 2 (CNN), downsampler, stage 3 (Transformer), downsampler,
stage 4 (Transformer). Feature extents: H/2, H/4, H/8, H/16. An optional
fifth downsampler plus one Transformer block takes the output to H/32.

The template branch runs over ``T_z`` timesteps (one template per step) and
exposes tap features for the memory builder; the search branch runs a
single timestep, retrieving from memory at every tap.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .blocks import cnn_block_fn, init_cnn_block, init_transformer_block, transformer_block_fn
from .layers import Ctx, init_conv, init_sn
from .mrm import MemoryEntry, MrmConfig, build_memory, init_mrm, retrieve

TAPS = ("ds2", "ds3", "stage3.mid", "ds4", "stage4")


@dataclass(frozen=True)
class BackboneConfig:
    depths: tuple = (1, 1, 2, 2)
    channels: tuple = (16, 32, 64, 128)
    gamma: int = 2
    mlp_ratio: int = 2
    heads: int = 1
    d_cap: int = 4
    template_timesteps: int = 1
    search_timesteps: int = 1
    in_channels: int = 3
    fifth_stage: bool = False
    attn_order: str = "linear"
    attn_scale: float | None = None
    fixed_beta: float | None = None
    mrm: MrmConfig = field(default_factory=MrmConfig)

    def __post_init__(self):
        if len(self.depths) != 4 or len(self.channels) != 4:
            raise ValueError("backbone needs exactly four stage depths and widths")
        if min(self.depths) < 1:
            raise ValueError("every stage needs at least one block")
        if self.template_timesteps < 1 or self.search_timesteps < 1:
            raise ValueError("timesteps must be >= 1")
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if isinstance(self.mrm, dict):
            object.__setattr__(self, "mrm", MrmConfig(**self.mrm))

    @property
    def stride(self) -> int:
        return 32 if self.fifth_stage else 16

    @property
    def timesteps(self) -> int:
        return max(self.template_timesteps, self.search_timesteps)

    @property
    def mid_block(self) -> int:
        """Number of stage-3 blocks before the midpoint tap."""
        return max(1, self.depths[2] // 2)

    def tap_channels(self) -> dict:
        c = self.channels
        return {"ds2": c[1], "ds3": c[2], "stage3.mid": c[2], "ds4": c[3], "stage4": c[3]}

    def tap_extents(self, hw) -> dict:
        h, w = hw
        return {"ds2": (h // 4, w // 4), "ds3": (h // 8, w // 8), "stage3.mid": (h // 8, w // 8),
                "ds4": (h // 16, w // 16), "stage4": (h // 16, w // 16)}

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TapFeature:
    layer_id: str
    tensor: Var  # dense membrane-domain feature [T, ..., C, H, W]

    @property
    def extents(self) -> tuple:
        return tuple(self.tensor.shape[-2:])

    @property
    def channels(self) -> int:
        return self.tensor.shape[-3]


def init_backbone(cfg: BackboneConfig, rng, gain: float = 1.0) -> dict:
    """Random parameter store for the backbone and the per-tap retrieval modules."""
    store: dict = {}
    c, T = cfg.channels, cfg.timesteps
    init_conv(store, "stem", cfg.in_channels, c[0], 7, rng, gain=gain)
    for k in (2, 3, 4):
        init_sn(store, f"ds{k}.sn", T)
        init_conv(store, f"ds{k}", c[k - 2], c[k - 1], 3, rng, gain=gain)
    for k in range(4):
        for j in range(cfg.depths[k]):
            name = f"stage{k + 1}.block{j}"
            if k < 2:
                init_cnn_block(store, name, c[k], T, rng, cfg.mlp_ratio, gain)
            else:
                init_transformer_block(store, name, c[k], T, rng, cfg.gamma, cfg.mlp_ratio, gain)
    if cfg.fifth_stage:
        init_sn(store, "ds5.sn", T)
        init_conv(store, "ds5", c[3], c[3], 3, rng, gain=gain)
        init_transformer_block(store, "stage5.block0", c[3], T, rng, cfg.gamma, cfg.mlp_ratio, gain)
    for tap, ch in cfg.tap_channels().items():
        init_mrm(store, f"mrm.{tap}", ch, cfg.template_timesteps, cfg.mrm, rng, gain)
    return store


def _check_image(x: Var, cfg: BackboneConfig):
    h, w = x.shape[-2:]
    if x.ndim < 4 or x.shape[-3] != cfg.in_channels:
        raise ValueError(f"images must be [T, ..., {cfg.in_channels}, H, W], got {x.shape}")
    if h % 32 or w % 32 or h == 0 or w == 0:
        raise ValueError(f"image extents {h}x{w} must be positive multiples of 32")


def _run(ctx: Ctx, x: Var, cfg: BackboneConfig, on_tap):
    """Backbone pass; ``on_tap(tap_id, u)`` may return a tensor to add to the stream."""

    def tap(name, u):
        extra = on_tap(name, u)
        return u if extra is None else u + extra

    u = ctx.conv(x, "stem", "full", stride=2, op_class="first_conv_mac")
    for k in range(4):
        if k > 0:
            u = ctx.conv(ctx.sn(u, f"ds{k + 1}.sn"), f"ds{k + 1}", "full", stride=2)
            u = tap(f"ds{k + 1}", u)
        for j in range(cfg.depths[k]):
            name = f"stage{k + 1}.block{j}"
            if k < 2:
                u = cnn_block_fn(ctx, u, name)
            else:
                u = transformer_block_fn(ctx, u, name, heads=cfg.heads, scale=cfg.attn_scale, order=cfg.attn_order)
            if k == 2 and j + 1 == cfg.mid_block:
                u = tap("stage3.mid", u)
    u = tap("stage4", u)
    if cfg.fifth_stage:
        u = ctx.conv(ctx.sn(u, "ds5.sn"), "ds5", "full", stride=2)
        u = transformer_block_fn(ctx, u, "stage5.block0", heads=cfg.heads, scale=cfg.attn_scale, order=cfg.attn_order)
    return u


def template_forward(ctx: Ctx, z, cfg: BackboneConfig) -> list[TapFeature]:
    """Tap features for templates ``z`` shaped ``[T_z, ..., 3, H, W]``."""
    z = z if isinstance(z, Var) else Var(z)
    _check_image(z, cfg)
    taps: list[TapFeature] = []

    def grab(name, u):
        taps.append(TapFeature(name, u))

    branch, ctx.branch = ctx.branch, "template"
    try:
        _run(ctx, z, cfg, grab)
    finally:
        ctx.branch = branch
    return taps


def build_bank(ctx: Ctx, taps: list[TapFeature], cfg: BackboneConfig) -> dict[str, MemoryEntry]:
    grid = taps[-1].extents  # final-stage resolution
    branch, ctx.branch = ctx.branch, "template"
    try:
        return {t.layer_id: build_memory(ctx, t.tensor, f"mrm.{t.layer_id}", grid, cfg.mrm) for t in taps}
    finally:
        ctx.branch = branch


def search_forward(ctx: Ctx, x, cfg: BackboneConfig, bank: dict[str, MemoryEntry] | None) -> Var:
    """Final search feature ``[T_x, ..., C, H/16, W/16]``, retrieving at every tap."""
    if not bank:
        raise ValueError("memory bank is not initialised; run the template branch first")
    x = x if isinstance(x, Var) else Var(x)
    _check_image(x, cfg)
    if x.shape[0] != cfg.search_timesteps:
        x = ad.broadcast_to(x, (cfg.search_timesteps,) + x.shape[1:]) if x.shape[0] == 1 else x

    def inject(name, u):
        return retrieve(ctx, u, bank[name], f"mrm.{name}", cfg.mrm)

    branch, ctx.branch = ctx.branch, "search"
    try:
        return _run(ctx, x, cfg, inject)
    finally:
        ctx.branch = branch


def plain_forward(ctx: Ctx, x, cfg: BackboneConfig) -> Var:
    """Backbone pass with no retrieval at all."""
    x = x if isinstance(x, Var) else Var(x)
    _check_image(x, cfg)
    return _run(ctx, x, cfg, lambda name, u: None)


def param_count(params: dict) -> int:
    return int(sum(np.size(v) for v in params.values()))
