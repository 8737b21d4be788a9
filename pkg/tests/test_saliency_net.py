"""Backbone, cross-scale fusion, global grid head, trimaps, full assembly."""

import itertools

import numpy as np
import pytest

import specsal.tensor as T
from specsal.exceptions import ConfigError, ShapeError
from specsal.model import (
    ModelConfig,
    SaliencyModel,
    default_model_config,
    group_bands,
    tiny_model_config,
)
from specsal.saliency_net import (
    BackboneConfig,
    CrossScaleFusion,
    DecoderConfig,
    GlobalSaliencyHead,
    HighResBackbone,
    TrimapHead,
    block_ground_truth,
    resize_to,
)
from specsal.tensor import Tape, Tensor


def test_resize_to_cases():
    x = Tensor(np.arange(8.0).reshape(2, 2, 2))
    up = resize_to(x, 4, 4)
    assert up.shape == (2, 4, 4)
    np.testing.assert_array_equal(up.data[:, ::2, ::2], x.data)
    down = resize_to(Tensor(np.ones((1, 4, 4))), 2, 2)
    np.testing.assert_array_equal(down.data, np.ones((1, 2, 2)))
    assert resize_to(x, 2, 2) is x
    with pytest.raises(ShapeError):
        resize_to(x, 3, 3)
    with pytest.raises(ShapeError):
        resize_to(x, 4, 2)  # mixed factors


def test_backbone_shape_contract():
    backbone = HighResBackbone(np.random.default_rng(0), 8, BackboneConfig())
    feats = backbone(Tensor(np.random.default_rng(1).uniform(0, 1, (8, 64, 64))))
    shapes = [f.shape for f in feats]
    assert shapes == [(8, 32, 32), (16, 16, 16), (32, 8, 8), (64, 4, 4)]
    for f in feats:
        assert np.isfinite(f.data).all()


def test_backbone_divisibility_error():
    backbone = HighResBackbone(np.random.default_rng(0), 4, BackboneConfig(stem_stride=1))
    with pytest.raises(ShapeError, match="divisible"):
        backbone(Tensor(np.ones((4, 12, 12))))


def test_backbone_config_validation():
    with pytest.raises(ConfigError):
        BackboneConfig(widths=(8, 16, 32))
    with pytest.raises(ConfigError):
        BackboneConfig(widths=(8, 8, 32, 64))
    with pytest.raises(ConfigError):
        BackboneConfig(widths=(7, 16, 32, 64))  # odd width cannot split


def test_cross_resolution_fusion_is_live():
    """A fusion-free twin from the same seed shares all other weights, so any
    output difference is attributable to the fusion stage alone."""
    with_fusion = HighResBackbone(
        np.random.default_rng(5), 4, BackboneConfig(stem_stride=1, fusion_stages=1)
    )
    without = HighResBackbone(
        np.random.default_rng(5), 4, BackboneConfig(stem_stride=1, fusion_stages=0)
    )
    np.testing.assert_array_equal(
        with_fusion.stem.conv.weight.value.data, without.stem.conv.weight.value.data
    )
    np.testing.assert_array_equal(
        with_fusion.stages[3].first.conv.weight.value.data,
        without.stages[3].first.conv.weight.value.data,
    )
    x = Tensor(np.random.default_rng(6).uniform(0, 1, (4, 16, 16)))
    fused = with_fusion(x)
    plain = without(x)
    for a, b in zip(fused, plain):
        assert np.abs(a.data - b.data).max() > 0


def test_cross_scale_fusion_shapes():
    rng = np.random.default_rng(7)
    level = CrossScaleFusion(rng, 8, 16)
    x = Tensor(np.random.default_rng(8).uniform(0, 1, (8, 16, 16)))
    deeper = Tensor(np.random.default_rng(9).uniform(0, 1, (16, 8, 8)))
    out = level(x, deeper)
    assert out.shape == (8, 16, 16)

    deepest = CrossScaleFusion(rng, 16, None)
    out = deepest(Tensor(np.random.default_rng(10).uniform(0, 1, (16, 4, 4))))
    assert out.shape == (16, 4, 4)


def test_cross_scale_fusion_deeper_mismatch():
    level = CrossScaleFusion(np.random.default_rng(11), 8, 16)
    with pytest.raises(ShapeError):
        level(Tensor(np.ones((8, 8, 8))))


def test_cross_scale_fusion_degenerate_spatial():
    # 1x1 level: the pool/upsample sandwich must quietly fall back
    deepest = CrossScaleFusion(np.random.default_rng(12), 8, None)
    out = deepest(Tensor(np.random.default_rng(13).uniform(0, 1, (8, 1, 1))))
    assert out.shape == (8, 1, 1) and np.isfinite(out.data).all()


def test_cross_scale_fusion_no_dead_parameters():
    level = CrossScaleFusion(np.random.default_rng(14), 8, 16)
    level.assign_parameter_names("level")
    x = Tensor(np.random.default_rng(15).uniform(0.1, 1.0, (8, 8, 8)))
    deeper = Tensor(np.random.default_rng(16).uniform(0.1, 1.0, (16, 4, 4)))
    with Tape() as tape:
        out = level(x, deeper)
        loss = T.sum_over(T.mul(out, out))
    tape.backward(loss)
    for name, p in level.named_parameters("level"):
        assert np.abs(p.grad.data).max() > 0, f"dead parameter {name}"


# ---------------------------------------------------------------------------
# coarse global grid


def brute_block_gt(mask, grid):
    h, w = mask.shape
    rh, rw = h // grid, w // grid
    out = np.zeros((grid, grid), dtype=np.uint8)
    for i in range(grid):
        for j in range(grid):
            block = mask[i * rh : (i + 1) * rh, j * rw : (j + 1) * rw]
            out[i, j] = 1 if (block == 1).any() else 0
    return out


@pytest.mark.parametrize("grid", [2, 4])
def test_block_ground_truth_all_single_pixel_masks(grid):
    for r in range(8):
        for c in range(8):
            mask = np.zeros((8, 8), dtype=np.uint8)
            mask[r, c] = 1
            got = block_ground_truth(mask, grid)
            np.testing.assert_array_equal(got, brute_block_gt(mask, grid))
            assert got.sum() == 1  # exactly the block containing the pixel


@pytest.mark.parametrize("grid", [2, 4])
def test_block_ground_truth_random_masks(grid):
    rng = np.random.default_rng(17)
    for _ in range(1000):
        mask = (rng.random((8, 8)) < rng.uniform(0.02, 0.9)).astype(np.uint8)
        np.testing.assert_array_equal(
            block_ground_truth(mask, grid), brute_block_gt(mask, grid)
        )


def test_block_ground_truth_extremes_and_errors():
    ones = np.ones((8, 8), dtype=np.uint8)
    np.testing.assert_array_equal(block_ground_truth(ones, 4), np.ones((4, 4)))
    zeros = np.zeros((8, 8), dtype=np.uint8)
    np.testing.assert_array_equal(block_ground_truth(zeros, 4), np.zeros((4, 4)))
    with pytest.raises(ShapeError):
        block_ground_truth(ones, 3)


def _tiny_head(seed=18):
    return GlobalSaliencyHead(
        np.random.default_rng(seed),
        widths=(8, 16, 32, 64),
        level_sizes=(8, 4, 2, 1),
        grid=2,
        attention_width=16,
    )


def _tiny_pyramid(seed=19):
    rng = np.random.default_rng(seed)
    sizes = [(8, 8, 8), (16, 4, 4), (32, 2, 2), (64, 1, 1)]
    return [Tensor(rng.uniform(0, 1, s)) for s in sizes]


def test_global_head_output_open_interval():
    out = _tiny_head()(_tiny_pyramid())
    assert out.shape == (1, 2, 2)
    assert (out.data > 0).all() and (out.data < 1).all()


def test_global_head_attention_rows_sum_to_one():
    head = _tiny_head()
    tokens = Tensor(np.random.default_rng(20).standard_normal((4, 16)))
    weights = head.attention_weights(tokens).data
    np.testing.assert_allclose(weights.sum(axis=1), np.ones(4), atol=1e-12)
    assert (weights >= 0).all()


def test_global_head_attention_is_token_permutation_equivariant():
    head = _tiny_head()
    tokens = np.random.default_rng(21).standard_normal((4, 16))
    base = head.attend(Tensor(tokens)).data
    for perm in itertools.permutations(range(4)):
        idx = np.array(perm)
        permuted = head.attend(Tensor(tokens[idx])).data
        np.testing.assert_allclose(permuted, base[idx], atol=1e-12)


def test_global_head_rejects_incompatible_grid():
    with pytest.raises(ConfigError):
        GlobalSaliencyHead(
            np.random.default_rng(22),
            widths=(8, 16, 32, 64),
            level_sizes=(12, 6, 3, 1),
            grid=8,
            attention_width=16,
        )


# ---------------------------------------------------------------------------
# trimap head and full model


def test_trimap_head_distributions():
    head = TrimapHead(np.random.default_rng(23), 8)
    d = Tensor(np.random.default_rng(24).standard_normal((8, 6, 6)))
    p, t = head(d)
    assert p.shape == (1, 6, 6) and t.shape == (3, 6, 6)
    assert (p.data > 0).all() and (p.data < 1).all()
    assert (t.data >= 0).all()
    np.testing.assert_allclose(t.data.sum(axis=0), np.ones((6, 6)), atol=1e-12)
    assert set(np.unique(t.data.argmax(axis=0))) <= {0, 1, 2}


def test_group_bands():
    values = np.arange(24.0).reshape(4, 3, 2)
    out = group_bands(values, 2)
    np.testing.assert_array_equal(out, (values[::2] + values[1::2]) / 2.0)
    with pytest.raises(ShapeError):
        group_bands(values, 3)


def test_model_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(input_size=20)  # not a multiple of 16 with stem 2
    with pytest.raises(ConfigError):
        ModelConfig(decoder=DecoderConfig(grid=6), input_size=64)
    assert tiny_model_config().level_sizes() == [8, 4, 2, 1]
    assert default_model_config().level_sizes() == [32, 16, 8, 4]


def test_model_forward_contract_and_determinism():
    config = tiny_model_config()
    cube = np.random.default_rng(25).uniform(0, 1, (8, 8, 8))
    a = SaliencyModel(np.random.default_rng(26), config)(cube)
    b = SaliencyModel(np.random.default_rng(26), config)(cube)
    assert a.saliency.shape == (1, 8, 8)
    assert a.restored.shape == (8, 8, 8)
    assert a.block_saliency.shape == (1, 2, 2)
    assert [p.shape for p in a.level_predictions] == [
        (1, 8, 8), (1, 4, 4), (1, 2, 2), (1, 1, 1)
    ]
    assert [t.shape for t in a.trimaps] == [
        (3, 8, 8), (3, 4, 4), (3, 2, 2), (3, 1, 1)
    ]
    assert (a.saliency.data > 0).all() and (a.saliency.data < 1).all()
    np.testing.assert_array_equal(a.saliency.data, b.saliency.data)
    np.testing.assert_array_equal(a.restored.data, b.restored.data)
    assert a.saliency_map().shape == (8, 8)


def test_model_rejects_wrong_cube_shape():
    model = SaliencyModel(np.random.default_rng(27), tiny_model_config())
    with pytest.raises(ShapeError):
        model(np.ones((8, 16, 16)))
    with pytest.raises(ShapeError):
        model(np.ones((4, 8, 8)))


def test_model_stem_upsampling_matches_finest_level():
    config = default_model_config(bands=8, input_size=32)
    model = SaliencyModel(np.random.default_rng(28), config)
    out = model(np.random.default_rng(29).uniform(0, 1, (8, 32, 32)))
    assert out.saliency.shape == (1, 32, 32)
    # nearest upsampling by the stem stride replicates each finest-level pixel
    np.testing.assert_array_equal(
        out.saliency.data[0, ::2, ::2], out.level_predictions[0].data[0]
    )


def test_deepest_decoder_level_has_no_deeper_hookup():
    model = SaliencyModel(np.random.default_rng(30), tiny_model_config())
    assert model.decoder.merge[3].deeper_channels is None
    assert all(model.decoder.merge[i].deeper_channels for i in range(3))


def test_parameter_names_unique_across_model():
    model = SaliencyModel(np.random.default_rng(31), tiny_model_config())
    names = [name for name, _ in model.named_parameters()]
    assert len(names) == len(set(names))
    assert any(n.startswith("encoder.") for n in names)
    assert any(n.startswith("backbone.") for n in names)
    assert any(n.startswith("decoder.global_head") for n in names)
