import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiketrack.neuron import (
    FIXED_DECAY_BETA,
    NeuronState,
    NiLifParams,
    nilif_sequence,
    nilif_step,
    round_half_away,
    sigmoid,
    straight_through_grad,
)


def scalar_neuron(ys, beta, d):
    # plain-python oracle, independent of the vectorised code
    h, out = 0.0, []
    for y in ys:
        u = beta * h + y
        r = int(abs(u) + 0.5) * (1 if u >= 0 else -1)
        c = min(max(r, 0), d)
        out.append(c)
        h = u - c
    return out, h


def test_zero_input():
    s, st_ = nilif_step(np.zeros(3), NeuronState.zeros(3), NiLifParams())
    assert s.counts.tolist() == [0, 0, 0]
    assert st_.h.tolist() == [0, 0, 0]


def test_charge_fire_reset_example():
    # theta = 0 -> beta = 0.5; U = 0.5 * 1.0 + 1.3 = 1.8 -> 2 counts, h = -0.2
    s, st_ = nilif_step(np.array([1.3]), NeuronState(np.array([1.0]), 1), NiLifParams(np.zeros(1), 4))
    assert s.counts.tolist() == [2]
    assert s.counts[0] / s.d_cap == 0.5
    assert st_.h[0] == pytest.approx(-0.2)
    assert st_.t == 2


def test_clip_branch():
    s, st_ = nilif_step(np.array([100.0]), NeuronState.zeros(1), NiLifParams())
    assert s.counts.tolist() == [4]
    assert st_.h[0] == 96.0


def test_sequence_fold_oracle():
    out = nilif_sequence([np.array([0.6]), np.array([0.6])], NiLifParams(np.zeros(1), 4))
    assert [int(s.counts[0]) for s in out] == scalar_neuron([0.6, 0.6], 0.5, 4)[0] == [1, 0]


def test_sequence_single_step_is_step():
    y = np.array([0.3, 2.7, -1.0])
    a = nilif_sequence([y], NiLifParams())[0]
    b = nilif_step(y, NeuronState.zeros(3), NiLifParams())[0]
    assert np.array_equal(a.counts, b.counts)


def test_near_zero_decay_is_stateless():
    rng = np.random.default_rng(0)
    ys = [rng.normal(0, 3, 20) for _ in range(5)]
    seq = nilif_sequence(ys, NiLifParams(np.full(1, -20.0)))
    for y, s in zip(ys, seq):
        assert np.array_equal(s.counts, nilif_step(y, NeuronState.zeros(20), NiLifParams())[0].counts)


def test_errors():
    with pytest.raises(ValueError, match=r"\(3,\).*\(2,\)"):
        nilif_step(np.zeros(3), NeuronState.zeros(2), NiLifParams())
    with pytest.raises(ValueError):
        nilif_sequence([], NiLifParams())


def test_round_half_away_ties():
    assert round_half_away(np.array([0.5, 1.5, 2.5, -0.5, -1.5])).tolist() == [1, 2, 3, -1, -2]


def test_straight_through_values():
    assert straight_through_grad(np.array([1.2]), 4)[0] == 0.25
    assert straight_through_grad(np.array([10.0]), 4)[0] == 0.0
    assert straight_through_grad(np.array([-0.4]), 4)[0] == 0.25
    assert straight_through_grad(np.array([-0.6]), 4)[0] == 0.0


def test_fixed_decay_ablation():
    p = NiLifParams(np.array([3.0]), fixed_beta=FIXED_DECAY_BETA)
    assert p.beta(0) == 0.25 and p.beta(5) == 0.25


@settings(max_examples=40)
@given(st.lists(st.floats(-50, 50), min_size=2), st.lists(st.floats(-50, 50), min_size=2))
def test_beta_monotone(a, b):
    th = np.array(sorted([a[0], b[0]]))
    assert sigmoid(th[0]) <= sigmoid(th[1])
    assert 0 <= sigmoid(th[0]) <= 1


@settings(max_examples=60)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.floats(-4, 4))
def test_matches_scalar_oracle(seed, d, theta):
    rng = np.random.default_rng(seed)
    ys = rng.normal(0, 3, (6, 1))
    out = nilif_sequence(list(ys), NiLifParams(np.array([theta]), d))
    ref, _ = scalar_neuron(ys[:, 0], float(sigmoid(theta)), d)
    assert [int(s.counts[0]) for s in out] == ref


def test_per_timestep_theta():
    p = NiLifParams(np.array([0.0, 2.0, -2.0]))
    assert p.beta(1) == pytest.approx(sigmoid(2.0))
    assert p.beta(2) == pytest.approx(sigmoid(-2.0))
