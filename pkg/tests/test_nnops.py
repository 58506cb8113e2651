import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiketrack.nnops import (
    BnFold,
    ConvSpec,
    LinearSpec,
    avg_pool_to,
    conv2d,
    conv2d_dense,
    fold_bn,
    hanning_1d,
    hanning_2d,
    linear,
    upsample_from,
)
from spiketrack.spiketensor import SpikeTensor, random_spikes


def naive_conv(x, w, b, stride, pad, groups):
    # direct seven-loop convolution, zero padding
    n, cin, h, wd = x.shape
    cout, cg, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    per_group = cout // groups
    for bi in range(n):
        for o in range(cout):
            g = o // per_group
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if b is None else b[o]
                    for c in range(cg):
                        for u in range(kh):
                            for v in range(kw):
                                yy, xx = i * stride + u - pad, j * stride + v - pad
                                if 0 <= yy < h and 0 <= xx < wd:
                                    acc += x[bi, g * cg + c, yy, xx] * w[o, c, u, v]
                    out[bi, o, i, j] = acc
    return out


@pytest.mark.parametrize("kind,k,stride", [("full", 3, 1), ("full", 3, 2), ("pointwise", 1, 1), ("depthwise", 3, 1), ("depthwise", 3, 2), ("full", 7, 2)])
def test_dense_conv_matches_loops(kind, k, stride):
    rng = np.random.default_rng(1)
    cin = 3
    cout = cin if kind == "depthwise" else 4
    w = rng.normal(size=(cout, 1 if kind == "depthwise" else cin, k, k))
    b = rng.normal(size=cout)
    x = rng.normal(size=(2, cin, 9, 8))
    spec = ConvSpec(kind, w, b, stride)
    got = conv2d_dense(x, w, b, stride, spec.pad, spec.groups)
    assert np.allclose(got, naive_conv(x, w, b, stride, spec.pad, spec.groups), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["full", "pointwise", "depthwise"]), st.sampled_from([1, 2]))
def test_conv_paths_agree(seed, kind, stride):
    rng = np.random.default_rng(seed)
    cin = int(rng.integers(1, 5))
    cout = cin if kind == "depthwise" else int(rng.integers(1, 5))
    k = 1 if kind == "pointwise" else 3
    w = rng.normal(size=(cout, 1 if kind == "depthwise" else cin, k, k))
    spec = ConvSpec(kind, w, rng.normal(size=cout), stride)
    x = random_spikes(rng, (2, cin, 6, 5), 4)
    assert np.max(np.abs(conv2d(x, spec, "mac") - conv2d(x, spec, "ac"))) <= 1e-9


def test_linear_paths_and_oracle():
    rng = np.random.default_rng(3)
    spec = LinearSpec(rng.normal(size=(5, 7)), rng.normal(size=5))
    x = random_spikes(rng, (3, 4, 7), 4)
    ref = np.einsum("...i,oi->...o", x.counts / 4.0, spec.weights) + spec.bias
    assert np.allclose(linear(x, spec, "mac"), ref, atol=1e-12)
    assert np.allclose(linear(x, spec, "ac"), ref, atol=1e-12)


def test_all_zero_spikes_give_bias():
    spec = ConvSpec("full", np.ones((2, 1, 3, 3)), np.array([0.5, -1.0]))
    out = conv2d(SpikeTensor(np.zeros((1, 1, 4, 4), dtype=int), 4), spec, "ac")
    assert np.all(out[:, 0] == 0.5) and np.all(out[:, 1] == -1.0)


def test_single_spike_reads_weight():
    w = np.arange(9.0).reshape(1, 1, 3, 3)
    c = np.zeros((1, 1, 5, 5), dtype=int)
    c[0, 0, 2, 2] = 4
    out = conv2d(SpikeTensor(c, 4), ConvSpec("full", w), "ac")
    # a unit spike at the centre deposits the flipped kernel around it
    assert np.array_equal(out[0, 0, 1:4, 1:4], w[0, 0, ::-1, ::-1])


def test_shape_errors():
    spec = ConvSpec("full", np.ones((2, 3, 3, 3)))
    with pytest.raises(ValueError):
        conv2d(SpikeTensor(np.zeros((1, 2, 4, 4), dtype=int), 4), spec)
    with pytest.raises(ValueError):
        conv2d(SpikeTensor(np.zeros((1, 3, 4, 4), dtype=int), 4), spec, "bogus")
    with pytest.raises(ValueError):
        ConvSpec("pointwise", np.ones((2, 3, 3, 3)))
    with pytest.raises(ValueError):
        linear(SpikeTensor(np.zeros((2, 3), dtype=int), 4), LinearSpec(np.ones((1, 4))))


def test_bn_fold_matches_affine():
    rng = np.random.default_rng(4)
    spec = ConvSpec("full", rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3))
    bn = BnFold.from_stats(rng.uniform(0.5, 2, 3), rng.normal(size=3), rng.normal(size=3), rng.uniform(0.5, 2, 3))
    x = random_spikes(rng, (1, 2, 5, 5), 4)
    assert np.allclose(conv2d(x, fold_bn(spec, bn)), bn.apply(conv2d(x, spec)), atol=1e-12)
    with pytest.raises(ValueError):
        BnFold(np.array([1.0, -1.0]), np.zeros(2))


def test_macs():
    spec = ConvSpec("full", np.ones((8, 4, 3, 3)), stride=2)
    assert spec.output_hw(16, 16) == (8, 8)
    assert spec.macs(16, 16) == 9 * 4 * 8 * 64
    dw = ConvSpec("depthwise", np.ones((4, 1, 3, 3)))
    assert dw.macs(4, 4) == 9 * 4 * 16


def test_pool_and_upsample():
    x = np.arange(16.0).reshape(1, 4, 4)
    assert avg_pool_to(x, (2, 2)).tolist() == [[[2.5, 4.5], [10.5, 12.5]]]
    up = upsample_from(np.array([[[1.0, 2.0]]]), (2, 4))
    assert up.tolist() == [[[1, 1, 2, 2], [1, 1, 2, 2]]]
    with pytest.raises(ValueError):
        avg_pool_to(x, (3, 3))


def test_hanning():
    assert np.allclose(hanning_1d(5), np.hanning(5))
    h = hanning_2d(5)
    assert np.unravel_index(np.argmax(h), h.shape) == (2, 2)
    assert hanning_1d(1).tolist() == [1.0]
