import numpy as np
import pytest

from spiketrack.backbone import TAPS, BackboneConfig, build_bank, init_backbone, search_forward, template_forward
from spiketrack.layers import Ctx

CFG = BackboneConfig(depths=(1, 1, 2, 1), channels=(4, 8, 8, 16), template_timesteps=2)


@pytest.fixture(scope="module")
def params():
    return init_backbone(CFG, np.random.default_rng(0))


def test_tap_extents_and_channels(params):
    z = np.random.default_rng(1).uniform(size=(2, 1, 3, 64, 64))
    taps = template_forward(Ctx(params), z, CFG)
    assert [t.layer_id for t in taps] == list(TAPS)
    assert [t.extents for t in taps] == [(16, 16), (8, 8), (8, 8), (4, 4), (4, 4)]
    assert [t.channels for t in taps] == [8, 8, 8, 16, 16]
    assert CFG.tap_extents((64, 64)) == {t.layer_id: t.extents for t in taps}


def test_search_shape_and_empty_bank(params):
    x = np.random.default_rng(2).uniform(size=(1, 2, 3, 64, 64))
    with pytest.raises(ValueError):
        search_forward(Ctx(params), x, CFG, {})
    ctx = Ctx(params)
    bank = build_bank(ctx, template_forward(ctx, x[[0, 0]], CFG), CFG)
    assert set(bank) == set(TAPS)
    f = search_forward(ctx, x, CFG, bank)
    assert f.shape == (1, 2, 16, 4, 4)


def test_image_size_check(params):
    with pytest.raises(ValueError):
        template_forward(Ctx(params), np.zeros((2, 1, 3, 48, 64)), CFG)
    with pytest.raises(ValueError):
        template_forward(Ctx(params), np.zeros((2, 1, 1, 64, 64)), CFG)


def test_branches_share_weights(params):
    # one parameter store serves both branches; perturbing a backbone weight changes both
    rng = np.random.default_rng(3)
    z = rng.uniform(size=(2, 1, 3, 64, 64))
    base = template_forward(Ctx(params), z, CFG)[0].tensor.value
    p2 = dict(params)
    p2["stem.weight"] = params["stem.weight"] * 1.5
    moved = template_forward(Ctx(p2), z, CFG)[0].tensor.value
    assert not np.array_equal(base, moved)
    assert not any(k.startswith(("template.", "search.")) for k in params)


def test_branch_flop_isolation(params):
    rng = np.random.default_rng(4)
    ctx = Ctx(params)
    build_bank(ctx, template_forward(ctx, rng.uniform(size=(2, 1, 3, 64, 64)), CFG), CFG)
    assert ctx.flops.get("template", 0) > 0 and ctx.flops.get("search", 0) == 0


def test_fifth_stage_stride():
    cfg = BackboneConfig(depths=(1, 1, 1, 1), channels=(4, 4, 8, 8), fifth_stage=True)
    p = init_backbone(cfg, np.random.default_rng(5))
    ctx = Ctx(p)
    x = np.random.default_rng(6).uniform(size=(1, 1, 3, 64, 64))
    bank = build_bank(ctx, template_forward(ctx, x, cfg), cfg)
    assert search_forward(ctx, x, cfg, bank).shape[-2:] == (2, 2)


def test_config_validation():
    with pytest.raises(ValueError):
        BackboneConfig(depths=(1, 1, 1))
    with pytest.raises(ValueError):
        BackboneConfig(depths=(1, 0, 1, 1))


def test_zero_image_zero_bias_gives_silent_taps():
    cfg = BackboneConfig(depths=(1, 1, 1, 1), channels=(4, 4, 8, 8))
    p = {k: (np.zeros_like(v) if k.endswith(".bias") else v) for k, v in init_backbone(cfg, np.random.default_rng(7)).items()}
    taps = template_forward(Ctx(p), np.zeros((1, 1, 3, 64, 64)), cfg)
    assert all(np.all(t.tensor.value == 0) for t in taps)


def test_decay_zero_timesteps_are_independent():
    from dataclasses import replace

    cfg3 = BackboneConfig(depths=(1, 1, 1, 1), channels=(4, 4, 8, 8), template_timesteps=3, fixed_beta=0.0)
    cfg1 = replace(cfg3, template_timesteps=1)
    p = init_backbone(cfg3, np.random.default_rng(8))
    z = np.random.default_rng(9).uniform(size=(1, 1, 3, 64, 64))
    t3 = template_forward(Ctx(p, fixed_beta=0.0), np.repeat(z, 3, axis=0), cfg3)
    t1 = template_forward(Ctx(p, fixed_beta=0.0), z, cfg1)
    for a, b in zip(t3, t1):
        for t in range(3):
            assert np.allclose(a.tensor.value[t], b.tensor.value[0], rtol=0, atol=1e-12)


def test_silent_retrieval_equals_plain_pass(params):
    from spiketrack.backbone import plain_forward

    p = dict(params)
    for k in p:
        if k.startswith("mrm.") and (k.endswith(".out.weight") or k.endswith(".out.bias")):
            p[k] = np.zeros_like(p[k])
    rng = np.random.default_rng(10)
    ctx = Ctx(p)
    bank = build_bank(ctx, template_forward(ctx, rng.uniform(size=(2, 1, 3, 64, 64)), CFG), CFG)
    x = rng.uniform(size=(1, 1, 3, 64, 64))
    assert np.array_equal(search_forward(Ctx(p), x, CFG, bank).value, plain_forward(Ctx(p), x, CFG).value)


def test_template_cost_independent_of_search_count(params):
    rng = np.random.default_rng(11)
    counts = []
    for frames in (1, 3):
        ctx = Ctx(params)
        bank = build_bank(ctx, template_forward(ctx, rng.uniform(size=(2, 1, 3, 64, 64)), CFG), CFG)
        for _ in range(frames):
            search_forward(ctx, rng.uniform(size=(1, 1, 3, 64, 64)), CFG, bank)
        counts.append((ctx.flops["template"], ctx.flops["search"]))
    assert counts[0][0] == counts[1][0] and counts[1][1] == 3 * counts[0][1]
