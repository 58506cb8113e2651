"""Synthetic single-target sequences: a bright square gliding over black."""

from __future__ import annotations

import numpy as np


def _coverage(lo: float, hi: float, n: int) -> np.ndarray:
    # fraction of each unit pixel [i, i+1) covered by the interval [lo, hi)
    edges = np.arange(n)
    return np.clip(np.minimum(edges + 1, hi) - np.maximum(edges, lo), 0.0, 1.0)


def render_square(size: int, box, value: float = 1.0, channels: int = 3) -> np.ndarray:
    """``[size, size, channels]`` frame with an anti-aliased box ``(x, y, w, h)``."""
    x, y, w, h = box
    img = np.outer(_coverage(y, y + h, size), _coverage(x, x + w, size)) * value
    return np.repeat(img[:, :, None], channels, axis=2)


def moving_square(frames: int = 50, size: int = 64, side: float = 12.0, speed: float = 1.0, seed: int = 0):
    """Frames ``[F, size, size, 3]`` and boxes ``[F, 4]`` (x, y, w, h in pixels).

    The square starts near the center and drifts along a slow Lissajous path
    of amplitude ``speed * frames / 8`` pixels, staying inside the frame.
    """
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * np.pi, 2)
    t = np.arange(frames)
    amp = min(speed * frames / 8, (size - side) / 2 - 2)
    c0 = (size - side) / 2
    xs = c0 + amp * np.sin(2 * np.pi * t / max(frames, 1) + phase[0])
    ys = c0 + amp * np.sin(2 * np.pi * t / max(frames, 1) * 0.5 + phase[1])
    boxes = np.stack([xs, ys, np.full(frames, side), np.full(frames, side)], axis=1)
    imgs = np.stack([render_square(size, b) for b in boxes])
    return imgs, boxes
