import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiketrack.head import BoxPrediction, decode_box, encode_targets, hanning_penalty, target_maps


def test_decode_example():
    n = 8
    score = np.zeros((n, n))
    score[2, 3] = 1.0
    off = np.full((2, n, n), 0.5)
    size = np.full((2, n, n), 0.25)
    b = decode_box(score, off, size)
    assert (b.cx, b.cy, b.w, b.h, b.score) == (0.4375, 0.3125, 0.25, 0.25, 1.0)


def test_ties_pick_first_index():
    b = decode_box(np.ones((4, 4)), np.zeros((2, 4, 4)), np.ones((2, 4, 4)))
    assert (b.cx, b.cy) == (0.0, 0.0)


def test_encode_clamps_right_edge():
    (iy, ix), (ox, oy), _ = encode_targets([1.0, 1.0, 0.1, 0.1], 4)
    assert (iy, ix) == (3, 3) and (ox, oy) == (1.0, 1.0)


def test_encode_errors():
    with pytest.raises(ValueError):
        encode_targets([0.5, 0.5, 0.0, 0.1], 4)
    with pytest.raises(ValueError):
        encode_targets([1.2, 0.5, 0.1, 0.1], 4)


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-3, 1), st.floats(1e-3, 1), st.integers(1, 20))
def test_round_trip(cx, cy, w, h, n):
    s, off, sz = target_maps([cx, cy, w, h], n)
    b = decode_box(s, off, sz)
    assert np.allclose(b.as_array(), [cx, cy, w, h], atol=1e-9)


def test_hanning_picks_centre_on_uniform_map():
    for n in (3, 5, 7, 9):
        b = decode_box(np.full((n, n), 0.3), np.zeros((2, n, n)), np.zeros((2, n, n)), hanning_penalty(n))
        assert (b.cx, b.cy) == ((n // 2) / n, (n // 2) / n)


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
def test_positive_scaling_keeps_cell(seed, k):
    rng = np.random.default_rng(seed)
    s = rng.uniform(size=(6, 6))
    off = rng.uniform(size=(2, 6, 6))
    pen = hanning_penalty(6)
    a = decode_box(s, off, off, pen)
    b = decode_box(s * k, off, off, pen)
    assert (a.cx, a.cy) == (b.cx, b.cy)


def test_penalty_does_not_change_reported_score():
    s = np.zeros((5, 5))
    s[0, 0], s[2, 2] = 0.9, 0.5
    b = decode_box(s, np.zeros((2, 5, 5)), np.zeros((2, 5, 5)), hanning_penalty(5))
    assert b.score == 0.5


def test_weighted_sum_composition():
    s = np.zeros((5, 5))
    s[0, 0] = 0.9
    # corner: 0.51 * 0.9 = 0.459; centre: 0.49 * 1 = 0.49
    b = decode_box(s, np.zeros((2, 5, 5)), np.zeros((2, 5, 5)), hanning_penalty(5), "weighted_sum")
    assert (b.cx, b.cy) == (0.4, 0.4)
    with pytest.raises(ValueError):
        decode_box(s, np.zeros((2, 5, 5)), np.zeros((2, 5, 5)), hanning_penalty(5), "max")


def test_clamped_box_stays_in_unit_square():
    b = BoxPrediction(0.95, 0.02, 0.3, 0.2).clamped()
    assert b.cx + b.w / 2 <= 1 and b.cy - b.h / 2 >= 0



def test_output_priors_survive_calibration():
    from conftest import TINY
    from spiketrack.model import SpikeTrack, calibrate, init_model
    from spiketrack.synthetic import moving_square
    from spiketrack.tracker import crop

    model = SpikeTrack(TINY, init_model(TINY, np.random.default_rng(1)))
    imgs, boxes = moving_square(2)
    z, _ = crop(imgs[0], boxes[0], 4.0, 64)
    x, _ = crop(imgs[1], boxes[0], 4.0, 64)
    calibrate(model, np.repeat(z[None, None], TINY.template_timesteps, axis=0), x[None])
    for tower, prior in (("cls", 0.1), ("offset", 0.5), ("size", 0.25)):
        b = model.params[f"head.{tower}.conv3.bias"]
        assert np.allclose(1 / (1 + np.exp(-b)), prior)
