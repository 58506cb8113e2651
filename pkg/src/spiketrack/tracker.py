"""Single-object tracking loop: crops, template queue, per-frame search."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .energy import EnergyTrace
from .head import BoxPrediction, decode_box, hanning_penalty
from .model import SpikeTrack

PRESETS = {
    "default": {"update_interval": 25, "update_threshold": 0.7},
    "lasot": {"update_interval": 40, "update_threshold": 0.8},
}


@dataclass(frozen=True)
class TrackerConfig:
    crop_expansion: float = 4.0
    update_interval: int = 25
    update_threshold: float = 0.7
    crop_size: int = 64  # template and search crops share size and expansion
    hanning: bool = True
    penalty_composition: str = "multiply"
    cell_aligned: bool = True  # put the previous center in the middle of a score cell

    def __post_init__(self):
        if self.update_interval < 1:
            raise ValueError("update interval must be >= 1")
        if not 0.0 <= self.update_threshold <= 1.0:
            raise ValueError("update threshold must lie in [0, 1]")
        if self.crop_size <= 0 or self.crop_expansion <= 0:
            raise ValueError("crop size and expansion must be positive")

    @classmethod
    def preset(cls, name: str, **kw) -> "TrackerConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **kw})


@dataclass(frozen=True)
class CropMap:
    x0: float
    y0: float
    side: float
    out_size: int

    def to_image(self, box: BoxPrediction) -> np.ndarray:
        """Normalised crop box -> image ``(x, y, w, h)`` in pixels."""
        cx = self.x0 + box.cx * self.side
        cy = self.y0 + box.cy * self.side
        w, h = box.w * self.side, box.h * self.side
        return np.array([cx - w / 2, cy - h / 2, w, h])

    def to_crop(self, box_xywh) -> np.ndarray:
        """Image ``(x, y, w, h)`` -> normalised crop ``(cx, cy, w, h)``."""
        x, y, w, h = box_xywh
        return np.array([(x + w / 2 - self.x0) / self.side, (y + h / 2 - self.y0) / self.side, w / self.side, h / self.side])


def crop_side(box_xywh, expansion: float) -> float:
    return float(expansion * np.sqrt(box_xywh[2] * box_xywh[3]))


def prior_shift(cfg: TrackerConfig, stride: int) -> float:
    """Offset (fraction of the crop side) that moves the box center from the
    crop center onto the center of a score cell.

    With an even score map the crop center is a corner shared by four cells,
    so which cell owns the target flips with sub-pixel motion. Shifting by
    half a cell keeps the expected position well inside one cell.
    """
    n = cfg.crop_size // stride
    return 0.5 / n if cfg.cell_aligned and n % 2 == 0 else 0.0


def crop(frame: np.ndarray, box_xywh, expansion: float, out_size: int, shift: float = 0.0):
    """Square crop around ``box`` resized to ``out_size``; returns ``([3, S, S], CropMap)``.

    The box center lands at ``0.5 + shift`` of the crop along both axes.
    Bilinear sampling with half-pixel centres; samples outside the frame read 0.
    """
    if out_size <= 0:
        raise ValueError("crop output size must be positive")
    x, y, w, h = (float(v) for v in box_xywh)
    if w <= 0 or h <= 0:
        raise ValueError("degenerate box")
    side = crop_side(box_xywh, expansion)
    m = CropMap(x + w / 2 - (0.5 + shift) * side, y + h / 2 - (0.5 + shift) * side, side, out_size)
    step = side / out_size
    grid = m.x0 + (np.arange(out_size) + 0.5) * step - 0.5
    gy = m.y0 + (np.arange(out_size) + 0.5) * step - 0.5
    yy, xx = np.meshgrid(gy, grid, indexing="ij")
    frame = np.asarray(frame, dtype=np.float64)
    chans = [ndimage.map_coordinates(frame[:, :, c], [yy, xx], order=1, mode="grid-constant", cval=0.0) for c in range(frame.shape[2])]
    return np.stack(chans), m


class TemplateQueue:
    """FIFO of template crops; slot 0 holds the initial template forever."""

    def __init__(self, first: np.ndarray, capacity: int):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        first = np.array(first, dtype=np.float64)
        first.setflags(write=False)
        self.slots = [first] * capacity

    @property
    def capacity(self) -> int:
        return len(self.slots)

    def push(self, crop_img: np.ndarray) -> bool:
        """Replace the oldest non-pinned slot; a one-slot queue never changes."""
        if self.capacity == 1:
            return False
        c = np.array(crop_img, dtype=np.float64)
        c.setflags(write=False)
        self.slots = [self.slots[0]] + self.slots[2:] + [c]
        return True

    def stack(self) -> np.ndarray:
        return np.stack(self.slots)


@dataclass
class FrameResult:
    index: int
    box: np.ndarray  # x, y, w, h in pixels
    score: float
    updated: bool = False


@dataclass
class Tracker:
    model: SpikeTrack
    cfg: TrackerConfig = field(default_factory=TrackerConfig)
    trace: EnergyTrace | None = None
    cache_memory: bool = True

    def __post_init__(self):
        self.template_runs = 0
        self.search_runs = 0
        self.queue: TemplateQueue | None = None
        self.bank = None
        self.box = None
        self.frame_idx = 0

    def _ctx(self):
        return self.model.context(trace=self.trace)

    def _build(self):
        self.bank = self.model.template(self.queue.stack(), self._ctx())
        self.template_runs += 1

    def init(self, frame, box_xywh):
        box = np.asarray(box_xywh, dtype=np.float64)
        if box[2] <= 0 or box[3] <= 0:
            raise ValueError("degenerate init box")
        z, _ = crop(frame, box, self.cfg.crop_expansion, self.cfg.crop_size)
        self.queue = TemplateQueue(z, self.model.cfg.template_timesteps)
        self._build()
        self.box = box
        self.frame_idx = 0
        return self

    def track(self, frame) -> FrameResult:
        if self.queue is None:
            raise RuntimeError("tracker not initialised")
        self.frame_idx += 1
        shift = prior_shift(self.cfg, self.model.cfg.stride)
        x, m = crop(frame, self.box, self.cfg.crop_expansion, self.cfg.crop_size, shift)
        if not self.cache_memory:
            # recompute keys, values and memory from the current queue every frame
            self.bank = self.model.template(self.queue.stack(), self.model.context())
        score, offset, size = self.model.maps(x[None], self.bank, self._ctx())
        self.search_runs += 1
        n = score.shape[-1]
        pen = hanning_penalty(n) if self.cfg.hanning else None
        pred = decode_box(score[0], offset, size, pen, self.cfg.penalty_composition).clamped()
        box = m.to_image(pred)
        h, w = np.shape(frame)[:2]
        box[2] = max(box[2], 1.0)
        box[3] = max(box[3], 1.0)
        box[0] = np.clip(box[0], -box[2] / 2, w - box[2] / 2)
        box[1] = np.clip(box[1], -box[3] / 2, h - box[3] / 2)
        updated = False
        if self.frame_idx % self.cfg.update_interval == 0 and pred.score > self.cfg.update_threshold:
            z, _ = crop(frame, box, self.cfg.crop_expansion, self.cfg.crop_size)
            self.queue.push(z)
            self._build()
            updated = True
        self.box = box
        return FrameResult(self.frame_idx, box, pred.score, updated)

    def run(self, frames, init_box) -> list[FrameResult]:
        """Init on ``frames[0]``; returns one result per frame (frame 0 echoes the init box)."""
        self.init(frames[0], init_box)
        out = [FrameResult(0, np.asarray(init_box, dtype=np.float64), 1.0)]
        for f in frames[1:]:
            out.append(self.track(f))
        return out


def iou_xywh(a, b) -> float:
    ax1, ay1 = a[0] + a[2], a[1] + a[3]
    bx1, by1 = b[0] + b[2], b[1] + b[3]
    iw = max(0.0, min(ax1, bx1) - max(a[0], b[0]))
    ih = max(0.0, min(ay1, by1) - max(a[1], b[1]))
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0
