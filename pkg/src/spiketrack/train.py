"""Toy-scale training through the differentiation tape.

The loss is computed on the head maps outside the tape (focal, GIoU and L1
have closed-form gradients); those gradients are fed back as seeds on the
head logits and propagated to every parameter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .backbone import BackboneConfig
from .blocks import cnn_block_fn, init_cnn_block, init_transformer_block, transformer_block_fn
from .head import encode_targets
from .layers import Ctx
from .losses import LossConfig, box_losses, gaussian_target
from .model import SpikeTrack, calibrate, init_model
from .neuron import sigmoid
from .synthetic import moving_square
from .tracker import TrackerConfig, crop, prior_shift

log = logging.getLogger(__name__)

TOY_CONFIG = BackboneConfig(depths=(1, 1, 1, 1), channels=(8, 16, 32, 32))


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    lr: float = 0.05
    optimizer: str = "sgd"  # or "adam"
    momentum: float = 0.9
    batch: int = 16
    jitter: float = 0.25  # max center shift as a fraction of the target side
    scale_jitter: float = 0.1
    seed: int = 0
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr < 0 or self.steps < 0:
            raise ValueError("lr and steps must be non-negative")


@dataclass
class Batch:
    templates: np.ndarray  # [T_z, B, 3, S, S]
    searches: np.ndarray  # [1, B, 3, S, S]
    boxes: np.ndarray  # [B, 4] normalised (cx, cy, w, h) in the search crop


def make_batch(frames, boxes, n: int, T_z: int, rng, tcfg: TrackerConfig = TrackerConfig(), jitter=0.25,
               scale_jitter=0.1, stride: int = 16) -> Batch:
    """Template from frame 0; searches from random frames around jittered boxes,
    cropped the way the tracker crops them."""
    shift = prior_shift(tcfg, stride)
    z, _ = crop(frames[0], boxes[0], tcfg.crop_expansion, tcfg.crop_size)
    xs, targets = [], []
    for _ in range(n):
        k = int(rng.integers(0, len(frames)))
        x, y, w, h = boxes[k]
        s = np.exp(rng.uniform(-scale_jitter, scale_jitter))
        dx, dy = rng.uniform(-jitter, jitter, 2) * np.array([w, h])
        jb = (x + dx + w / 2 - w * s / 2, y + dy + h / 2 - h * s / 2, w * s, h * s)
        img, m = crop(frames[k], jb, tcfg.crop_expansion, tcfg.crop_size, shift)
        xs.append(img)
        targets.append(m.to_crop(boxes[k]))
    zs = np.broadcast_to(z, (T_z, n) + z.shape).copy()
    return Batch(zs, np.stack(xs)[None], np.array(targets))


def _loss_and_seeds(lg: dict, boxes: np.ndarray, lcfg: LossConfig):
    cls = lg["cls"].value[:, 0]
    off = sigmoid(lg["offset"].value)
    size = sigmoid(lg["size"].value)
    B, n = cls.shape[0], cls.shape[-1]
    g_cls = np.zeros_like(lg["cls"].value)
    g_off = np.zeros_like(off)
    g_size = np.zeros_like(size)
    total, parts = 0.0, np.zeros(3)
    for b in range(B):
        score = sigmoid(cls[b])
        target = gaussian_target(boxes[b], n)
        (iy, ix), _, _ = encode_targets(boxes[b], n)
        pred = np.array([(ix + off[b, 0, iy, ix]) / n, (iy + off[b, 1, iy, ix]) / n, size[b, 0, iy, ix], size[b, 1, iy, ix]])
        t, comps, d_score, d_box = box_losses(pred, boxes[b], score, target, lcfg)
        total += t / B
        parts += np.array(comps) / B
        g_cls[b, 0] = d_score * score * (1 - score) / B
        g_off[b, 0, iy, ix] = d_box[0] / n / B
        g_off[b, 1, iy, ix] = d_box[1] / n / B
        g_size[b, 0, iy, ix] = d_box[2] / B
        g_size[b, 1, iy, ix] = d_box[3] / B
    g_off *= off * (1 - off)
    g_size *= size * (1 - size)
    seeds = [(lg["cls"], g_cls), (lg["offset"], g_off), (lg["size"], g_size)]
    return total, parts, seeds


def loss_and_grads(model: SpikeTrack, batch: Batch, lcfg: LossConfig = LossConfig(), relaxed: bool = False):
    tape = ad.Tape()
    ctx = model.context(tape=tape, relaxed=relaxed)
    lg = model.logits(batch.searches, model.template(batch.templates, ctx), ctx)
    total, parts, seeds = _loss_and_seeds(lg, batch.boxes, lcfg)
    return total, parts, tape.backward(seeds)


def evaluate(model: SpikeTrack, batch: Batch, lcfg: LossConfig = LossConfig()) -> float:
    ctx = model.context()
    lg = model.logits(batch.searches, model.template(batch.templates, ctx), ctx)
    return _loss_and_seeds(lg, batch.boxes, lcfg)[0]


class Optimizer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.state: dict = {}
        self.t = 0

    def step(self, params: dict, grads: dict):
        c = self.cfg
        self.t += 1
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        k = min(1.0, c.grad_clip / norm) if norm > 0 and c.grad_clip else 1.0
        for name, g in grads.items():
            g = g * k
            if c.optimizer == "sgd":
                v = self.state.get(name, 0.0) * c.momentum + g
                self.state[name] = v
                params[name] = params[name] - c.lr * v
            else:
                m, v = self.state.get(name, (0.0, 0.0))
                m = 0.9 * m + 0.1 * g
                v = 0.999 * v + 0.001 * g * g
                self.state[name] = (m, v)
                mh, vh = m / (1 - 0.9**self.t), v / (1 - 0.999**self.t)
                params[name] = params[name] - c.lr * mh / (np.sqrt(vh) + 1e-8)


def toy_train(model: SpikeTrack, batch: Batch, cfg: TrainConfig = TrainConfig(), lcfg: LossConfig = LossConfig(), callback=None) -> list[float]:
    """Full-batch descent on a fixed batch; returns the loss before each step."""
    opt = Optimizer(cfg)
    history = []
    for step in range(cfg.steps):
        total, parts, grads = loss_and_grads(model, batch, lcfg)
        if not np.isfinite(total) or any(not np.all(np.isfinite(g)) for g in grads.values()):
            bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
            raise FloatingPointError(f"training diverged at step {step}: loss={total}, non-finite grads in {bad[:5]}")
        history.append(total)
        if callback:
            callback(step, total, parts)
        opt.step(model.params, grads)
    return history


def toy_setup(cfg: BackboneConfig = TOY_CONFIG, frames: int = 50, seed: int = 0, batch: int = 16):
    """Sequence, calibrated model and fixed training batch for the overfit demo."""
    rng = np.random.default_rng(seed)
    imgs, boxes = moving_square(frames, seed=seed)
    model = SpikeTrack(cfg, init_model(cfg, rng))
    data = make_batch(imgs, boxes, batch, cfg.template_timesteps, rng, stride=cfg.stride)
    calibrate(model, data.templates, data.searches)
    return model, data, imgs, boxes


# ---------------------------------------------------------------- gradient check


def micro_model(rng, channels: int = 4, timesteps: int = 2) -> dict:
    store: dict = {}
    init_cnn_block(store, "b0", channels, timesteps, rng)
    init_transformer_block(store, "b1", channels, timesteps, rng)
    for k, v in store.items():
        if k.endswith(".bias"):
            store[k] = rng.normal(0, 0.1, v.shape)
        elif k.endswith(".theta"):
            store[k] = rng.normal(0, 1.0, v.shape)
        else:
            store[k] = v * 2.0
    return store


def micro_loss(params: dict, u: np.ndarray, proj: np.ndarray, tape=None):
    ctx = Ctx(params, 4, tape=tape, relaxed=True)
    x = ad.Var(u)
    y = transformer_block_fn(ctx, cnn_block_fn(ctx, x, "b0"), "b1")
    return ad.sum(y * proj), ctx


def micro_gradcheck(seed: int = 0, h: float = 1e-6, floor: float = 1e-6) -> dict:
    """Tape gradients vs central differences for every micro-model parameter.

    Spiking neurons run their relaxed forward (clip without rounding) so the
    loss is piecewise smooth and the straight-through gradient is exact.
    Returns ``{param: max relative error}``.
    """
    rng = np.random.default_rng(seed)
    params = micro_model(rng)
    u = rng.normal(0, 2.0, (2, 4, 4, 4))
    proj = rng.normal(size=u.shape)
    tape = ad.Tape()
    out, _ = micro_loss(params, u, proj, tape)
    grads = tape.backward([(out, 1.0)])
    errs = {}
    for name, val in params.items():
        g = grads.get(name, np.zeros_like(val))
        fd = np.zeros_like(val)
        for i in np.ndindex(val.shape):
            old = val[i]
            val[i] = old + h
            up = micro_loss(params, u, proj)[0].value
            val[i] = old - h
            dn = micro_loss(params, u, proj)[0].value
            val[i] = old
            fd[i] = (up - dn) / (2 * h)
        errs[name] = float(np.max(np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)))
    return errs
