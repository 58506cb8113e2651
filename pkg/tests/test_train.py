import numpy as np
import pytest

from spiketrack.backbone import BackboneConfig
from spiketrack.losses import LossConfig
from spiketrack.model import SpikeTrack, calibrate, init_model
from spiketrack.synthetic import moving_square, render_square
from spiketrack.train import Batch, TrainConfig, evaluate, loss_and_grads, make_batch, micro_gradcheck, toy_train

CFG = BackboneConfig(depths=(1, 1, 1, 1), channels=(4, 4, 8, 8))


@pytest.fixture(scope="module")
def setup():
    rng = np.random.default_rng(0)
    frames, boxes = moving_square(8)
    model = SpikeTrack(CFG, init_model(CFG, rng))
    data = make_batch(frames, boxes, 3, 1, rng)
    calibrate(model, data.templates, data.searches)
    return model, data


def test_batch_targets_inside_crop(setup):
    _, data = setup
    assert data.templates.shape == (1, 3, 3, 64, 64) and data.searches.shape == (1, 3, 3, 64, 64)
    assert np.all((data.boxes[:, :2] > 0) & (data.boxes[:, :2] < 1))
    assert np.allclose(data.boxes[:, 2:], 0.25, rtol=0.15)


def test_lr_zero_keeps_loss_constant(setup):
    model, data = setup
    m = SpikeTrack(model.cfg, dict(model.params))
    hist = toy_train(m, data, TrainConfig(steps=3, lr=0.0))
    assert hist[0] == hist[1] == hist[2]


def test_training_reduces_loss(setup):
    model, data = setup
    m = SpikeTrack(model.cfg, dict(model.params))
    hist = toy_train(m, data, TrainConfig(steps=15, optimizer="adam", lr=3e-3))
    assert evaluate(m, data) < hist[0]


def test_permutation_invariance(setup):
    model, data = setup
    perm = [2, 0, 1]
    shuffled = Batch(data.templates[:, perm], data.searches[:, perm], data.boxes[perm])
    assert evaluate(model, data) == pytest.approx(evaluate(model, shuffled), rel=1e-12)


def test_lambda_ablation_leaves_classification(setup):
    model, data = setup
    total, parts, _ = loss_and_grads(model, data, LossConfig(0.0, 0.0))
    assert total == pytest.approx(parts[0], rel=1e-12)


def test_divergence_aborts(setup):
    model, data = setup
    m = SpikeTrack(model.cfg, dict(model.params))
    m.params["stem.weight"] = m.params["stem.weight"] * np.nan
    with pytest.raises(FloatingPointError):
        toy_train(m, data, TrainConfig(steps=2))


def test_micro_gradcheck():
    errs = micro_gradcheck(seed=1)
    assert len(errs) > 20 and max(errs.values()) <= 1e-3


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)


def test_render_square_coverage():
    img = render_square(8, (1.5, 2.0, 2.0, 1.0))
    assert img.shape == (8, 8, 3)
    assert img[:, :, 0].sum() == pytest.approx(2.0)
    assert img[2, 1, 0] == 0.5 and img[2, 2, 0] == 1.0


def test_moving_square_stays_in_frame():
    frames, boxes = moving_square(50)
    assert frames.shape == (50, 64, 64, 3)
    assert np.all(boxes[:, :2] >= 0) and np.all(boxes[:, :2] + boxes[:, 2:] <= 64)
    assert np.max(np.abs(np.diff(boxes[:, :2], axis=0))) <= 1.0
