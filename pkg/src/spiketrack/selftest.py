"""Fast invariant checks covering every module; used by ``spiketrack selftest``."""

from __future__ import annotations

import numpy as np

from . import nnops
from .attention import EsdsaSpec, esdsa_forward
from .backbone import BackboneConfig
from .blocks import CnnBlockSpec, TransformerBlockSpec, cnn_block, transformer_block, zero_weights
from .energy import EnergyModel, LayerEnergyRecord, ann_energy, amortize_template, layer_energy
from .head import decode_box, encode_targets, hanning_penalty, target_maps
from .losses import giou_loss
from .model import SpikeTrack, init_model
from .neuron import NeuronState, NiLifParams, nilif_step
from .spiketensor import FiringStats, SpikeTensor, random_spikes, sfr_measure, spike_to_dense, unit_spike_expand
from .synthetic import moving_square
from .tracker import Tracker, TrackerConfig


def _spikes():
    rng = np.random.default_rng(0)
    s = random_spikes(rng, (2, 3, 5, 5), 4)
    assert np.array_equal(spike_to_dense(s) * 4, s.counts)
    assert np.array_equal(sum(unit_spike_expand(s)), s.counts)
    st = sfr_measure(SpikeTensor(np.array([0, 1, 2, 4, 0, 0, 0, 1]), 4))
    assert (st.nonzero_fraction, st.mean_integer) == (0.5, 1.0)


def _neuron():
    rng = np.random.default_rng(1)
    p = NiLifParams(theta=np.array([0.3]), d_cap=4)
    st = NeuronState.zeros((50,))
    for _ in range(20):
        y = rng.normal(0, 3, 50)
        u = p.beta(st.t) * st.h + y
        s, st = nilif_step(y, st, p)
        assert np.allclose(u, s.counts + st.h, atol=1e-6)
        assert s.counts.min() >= 0 and s.counts.max() <= 4


def _nnops():
    rng = np.random.default_rng(2)
    x = random_spikes(rng, (2, 4, 6, 6), 4)
    for kind, k, cin in (("full", 3, 4), ("depthwise", 3, 1), ("pointwise", 1, 4)):
        spec = nnops.ConvSpec(kind, rng.normal(size=(4, cin, k, k)), rng.normal(size=4))
        assert np.max(np.abs(nnops.conv2d(x, spec, "mac") - nnops.conv2d(x, spec, "ac"))) <= 1e-9
    lin = nnops.LinearSpec(rng.normal(size=(5, 6)), rng.normal(size=5))
    xs = random_spikes(rng, (3, 6), 4)
    assert np.max(np.abs(nnops.linear(xs, lin, "mac") - nnops.linear(xs, lin, "ac"))) <= 1e-9


def _attention():
    rng = np.random.default_rng(3)
    spec = EsdsaSpec.random(rng, 4, 2)
    u = random_spikes(rng, (2, 6, 4), 4)
    assert np.max(np.abs(esdsa_forward(u, spec, "linear") - esdsa_forward(u, spec, "quadratic"))) <= 1e-9


def _blocks():
    rng = np.random.default_rng(4)
    u = rng.normal(size=(2, 8, 4, 4))
    for spec, fn in ((CnnBlockSpec.random(rng, 8, 2), cnn_block), (TransformerBlockSpec.random(rng, 8, 2), transformer_block)):
        z = type(spec)(zero_weights(spec.params))
        assert np.array_equal(fn(u, z), u)
        assert fn(u, spec).shape == u.shape


def _head():
    rng = np.random.default_rng(5)
    for _ in range(100):
        b = np.r_[rng.uniform(0.05, 0.95, 2), rng.uniform(0.05, 0.5, 2)]
        s, o, z = target_maps(b, 8)
        assert np.allclose(decode_box(s, o, z).as_array(), b, atol=1e-9)
    p = decode_box(np.full((5, 5), 0.3), np.zeros((2, 5, 5)), np.zeros((2, 5, 5)), hanning_penalty(5))
    assert (p.cx, p.cy) == (0.4, 0.4)
    assert encode_targets((0.5, 0.5, 0.2, 0.2), 4)[1] == (0.0, 0.0)


def _losses():
    assert giou_loss([0.5, 0.5, 0.2, 0.2], [0.5, 0.5, 0.2, 0.2])[0] == 0.0


def _energy():
    m = EnergyModel()
    assert ann_energy(1, m) == 4.6
    rec = LayerEnergyRecord("l", "conv_ac", 1.0, 1, 4, FiringStats(0.25, 1.0, 1, 1))
    assert abs(layer_energy(rec, m) - 0.9) < 1e-12
    assert amortize_template(25.0, 25) == 1.0


def _tracker():
    cfg = BackboneConfig(depths=(1, 1, 1, 1), channels=(4, 8, 8, 8), template_timesteps=2)
    model = SpikeTrack(cfg, init_model(cfg, np.random.default_rng(6)))
    frames, boxes = moving_square(4)
    a = Tracker(model, TrackerConfig(update_interval=2, update_threshold=0.0)).run(frames, boxes[0])
    b = Tracker(model, TrackerConfig(update_interval=2, update_threshold=0.0), cache_memory=False).run(frames, boxes[0])
    assert all(np.array_equal(x.box, y.box) and x.score == y.score for x, y in zip(a, b))


CHECKS = [
    ("spiketensor", _spikes),
    ("neuron", _neuron),
    ("nnops", _nnops),
    ("attention", _attention),
    ("blocks", _blocks),
    ("head", _head),
    ("loss", _losses),
    ("energy", _energy),
    ("tracker/mrm", _tracker),
]


def run_all(verbose: bool = True) -> int:
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as e:  # noqa: BLE001
            print(f"FAIL {name}: {type(e).__name__}: {e}")
            return 1
        if verbose:
            print(f"ok   {name}")
    return 0
