"""Run configuration (YAML).

Schema, with defaults equal to the desk-scale model::

    model:
      depths: [1, 1, 2, 2]
      channels: [16, 32, 64, 128]
      gamma: 2
      d_cap: 4
      template_timesteps: 1
      search_timesteps: 1
      heads: 1
      fifth_stage: false
      attn_order: linear
      mrm: {loops: 1, layerscale_init: 0.01, mode: mrm}
    head_width: null        # null -> half the last stage width (min 8)
    tracker:
      preset: default       # default | lasot
      crop_expansion: 4.0
      crop_size: 64
      hanning: true
      cell_aligned: true    # shift search crops half a score cell on even maps
      update_interval: 25   # overrides the preset when given
      update_threshold: 0.7
    seed: 0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backbone import BackboneConfig
from .mrm import MrmConfig
from .tracker import PRESETS, TrackerConfig


@dataclass
class RunConfig:
    model: BackboneConfig = field(default_factory=BackboneConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    preset: str = "default"
    head_width: int | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        m = self.model.as_dict()
        m["depths"], m["channels"] = list(m["depths"]), list(m["channels"])
        t = {k: getattr(self.tracker, k) for k in ("crop_expansion", "crop_size", "hanning", "penalty_composition", "cell_aligned", "update_interval", "update_threshold")}
        t["preset"] = self.preset
        return {"model": m, "tracker": t, "head_width": self.head_width, "seed": self.seed}


def from_dict(doc: dict | None, preset: str | None = None, seed: int | None = None) -> RunConfig:
    doc = dict(doc or {})
    unknown = set(doc) - {"model", "tracker", "head_width", "seed"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    m = dict(doc.get("model") or {})
    if "mrm" in m:
        m["mrm"] = MrmConfig(**m["mrm"])
    for k in ("depths", "channels"):
        if k in m:
            m[k] = tuple(m[k])
    model = BackboneConfig(**m)
    t = dict(doc.get("tracker") or {})
    name = preset or t.pop("preset", "default")
    t.pop("preset", None)
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}")
    tracker = TrackerConfig.preset(name, **t)
    return RunConfig(model, tracker, name, doc.get("head_width"), int(seed if seed is not None else doc.get("seed", 0)))


def load_config(path=None, preset: str | None = None, seed: int | None = None) -> RunConfig:
    if path is None:
        return from_dict({}, preset, seed)
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file {p} not found")
    return from_dict(yaml.safe_load(p.read_text()), preset, seed)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
