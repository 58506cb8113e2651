"""Spike-driven single-object tracking: NI-LIF neurons, spike-driven linear
attention, template memory retrieval, an energy profiler and a toy trainer."""

from .backbone import BackboneConfig, build_bank, search_forward, template_forward
from .energy import EnergyModel, EnergyTrace, energy_report
from .head import BoxPrediction, decode_box, encode_targets
from .model import SpikeTrack, init_model
from .spiketensor import SpikeTensor, sfr_measure
from .tracker import Tracker, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "BackboneConfig",
    "BoxPrediction",
    "EnergyModel",
    "EnergyTrace",
    "SpikeTensor",
    "SpikeTrack",
    "Tracker",
    "TrackerConfig",
    "build_bank",
    "decode_box",
    "encode_targets",
    "energy_report",
    "init_model",
    "search_forward",
    "sfr_measure",
    "template_forward",
]
