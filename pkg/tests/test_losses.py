import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiketrack.losses import (
    LossConfig,
    gaussian_radius,
    gaussian_target,
    giou,
    giou_loss,
    l1_loss,
    total_loss,
    weighted_focal_loss,
)


def central(f, x, h=1e-7):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_giou_identical_and_disjoint():
    b = np.array([0.5, 0.5, 0.2, 0.3])
    assert giou(b, b) == pytest.approx(1.0)
    assert giou_loss(b, b)[0] == pytest.approx(0.0)
    # two unit squares side by side with a unit gap: iou 0, enclosure 3, union 2
    a, c = np.array([0.5, 0.5, 1, 1]), np.array([2.5, 0.5, 1, 1])
    assert giou(a, c) == pytest.approx(0 - (3 - 2) / 3)


def test_giou_hand_value():
    # [0,2]x[0,2] vs [1,3]x[1,3]: inter 1, union 7, enclosure 9
    v, _ = giou_loss([1, 1, 2, 2], [2, 2, 2, 2])
    assert v == pytest.approx(1 - (1 / 7 - 2 / 9))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_giou_gradient(seed):
    rng = np.random.default_rng(seed)
    gt = np.concatenate([rng.uniform(0.3, 0.7, 2), rng.uniform(0.1, 0.4, 2)])
    pred = np.concatenate([rng.uniform(0.3, 0.7, 2), rng.uniform(0.1, 0.4, 2)])
    f = lambda p: giou_loss(p, gt)[0]  # noqa: E731
    # skip evaluation points within a step of an edge tie
    edges = np.array([pred[0] - pred[2] / 2 - gt[0] + gt[2] / 2, pred[0] + pred[2] / 2 - gt[0] - gt[2] / 2,
                      pred[1] - pred[3] / 2 - gt[1] + gt[3] / 2, pred[1] + pred[3] / 2 - gt[1] - gt[3] / 2])
    if np.min(np.abs(edges)) < 1e-5:
        return
    num = central(f, pred)
    ana = giou_loss(pred, gt)[1]
    err = np.max(np.abs(num - ana)) / max(np.max(np.abs(num)), 1e-6)
    assert err <= 1e-4


def test_l1():
    v, g = l1_loss([0.5, 0.5, 0.2, 0.2], [0.4, 0.6, 0.2, 0.3])
    assert v == pytest.approx((0.1 + 0.1 + 0 + 0.1) / 4)
    assert g.tolist() == [0.25, -0.25, 0.0, -0.25]


def test_focal_two_by_two_hand_value():
    score = np.array([[0.8, 0.3], [0.1, 0.5]])
    target = np.array([[1.0, 0.5], [0.0, 0.2]])
    pos = -(0.2**2) * math.log(0.8)
    neg = (-(0.5**4) * 0.3**2 * math.log(0.7)
           - 1.0 * 0.1**2 * math.log(0.9)
           - (0.8**4) * 0.5**2 * math.log(0.5))
    v, _ = weighted_focal_loss(score, target)
    assert v == pytest.approx(pos + neg, rel=1e-12)


def test_focal_gradient():
    rng = np.random.default_rng(5)
    score = rng.uniform(0.05, 0.95, (4, 4))
    target = gaussian_target([0.4, 0.6, 0.5, 0.5], 4)
    num = central(lambda s: weighted_focal_loss(s, target)[0], score)
    ana = weighted_focal_loss(score, target)[1]
    assert np.max(np.abs(num - ana)) / np.max(np.abs(num)) <= 1e-3


def test_focal_perfect_prediction_near_zero():
    target = np.zeros((3, 3))
    target[1, 1] = 1
    v, _ = weighted_focal_loss(np.where(target == 1, 1.0, 0.0), target)
    assert v < 1e-6


def test_gaussian_target():
    t = gaussian_target([0.55, 0.55, 0.6, 0.6], 8)
    assert t[4, 4] == 1.0 and t.max() == 1.0
    assert np.sum(t == 1.0) == 1
    assert np.allclose(t, t.T)
    with pytest.raises(ValueError):
        gaussian_target([1.5, 0.5, 0.1, 0.1], 4)


def test_gaussian_radius_grows_with_size():
    assert gaussian_radius(4, 4) < gaussian_radius(8, 8)
    assert gaussian_radius(0, 0) == 0.0


def test_total_loss():
    assert total_loss((0, 0, 0)) == 0
    assert total_loss((1, 1, 1)) == 8
    assert total_loss((1.5, 2.0, 3.0), LossConfig(0, 0)) == 1.5
    with pytest.raises(ValueError):
        LossConfig(-1.0)
