import numpy as np
import pytest

from spiketrack.blocks import CnnBlockSpec, TransformerBlockSpec, cnn_block, transformer_block, zero_weights


def test_zero_weight_blocks_are_identity():
    rng = np.random.default_rng(0)
    u = rng.normal(0, 2, (2, 1, 4, 8, 8))
    c = CnnBlockSpec.random(rng, 4, timesteps=2)
    t = TransformerBlockSpec.random(rng, 4, timesteps=2)
    assert np.array_equal(cnn_block(u, CnnBlockSpec(zero_weights(c.params))), u)
    assert np.array_equal(transformer_block(u, TransformerBlockSpec(zero_weights(t.params))), u)


def test_shapes_preserved():
    rng = np.random.default_rng(1)
    u = rng.normal(0, 2, (1, 2, 8, 4, 4))
    assert cnn_block(u, CnnBlockSpec.random(rng, 8)).shape == u.shape
    assert transformer_block(u, TransformerBlockSpec.random(rng, 8, heads=2)).shape == u.shape


def test_attention_order_does_not_change_block():
    rng = np.random.default_rng(2)
    u = rng.normal(0, 2, (2, 1, 8, 4, 4))
    spec = TransformerBlockSpec.random(rng, 8, timesteps=2)
    a = transformer_block(u, spec, "linear")
    b = transformer_block(u, spec, "quadratic")
    assert np.max(np.abs(a - b)) <= 1e-9


def test_channel_mismatch():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        cnn_block(np.zeros((1, 1, 5, 4, 4)), CnnBlockSpec.random(rng, 4))


def test_time_is_causal():
    # the output at t=0 must not depend on the input at t=1
    rng = np.random.default_rng(4)
    spec = CnnBlockSpec.random(rng, 4, timesteps=2)
    u = rng.normal(0, 2, (2, 1, 4, 6, 6))
    v = u.copy()
    v[1] += 5.0
    assert np.array_equal(cnn_block(u, spec)[0], cnn_block(v, spec)[0])
    assert not np.array_equal(cnn_block(u, spec)[1], cnn_block(v, spec)[1])
