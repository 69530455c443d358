"""Compositing, blend masks, and the separable blur against a dense oracle."""
from __future__ import annotations

import numpy as np
import pytest

from worldsmith import compositor

import oracles


def test_composite_background_fill():
    canvas = compositor.composite_tiles((8, 6), [])
    assert canvas.shape == (6, 8, 3)
    assert (canvas == 128).all()


def test_composite_later_layer_wins_overlap():
    red = np.zeros((2, 2, 3), dtype=np.uint8)
    red[:, :] = (200, 0, 0)
    blue = np.zeros((2, 2, 3), dtype=np.uint8)
    blue[:, :] = (0, 0, 200)
    canvas = compositor.composite_tiles(
        (16, 16),
        [((0, 0, 8, 8), red), ((4, 4, 8, 8), blue)],
        resample="nearest",
    )
    assert tuple(canvas[1, 1]) == (200, 0, 0)
    assert tuple(canvas[6, 6]) == (0, 0, 200)
    assert tuple(canvas[14, 14]) == (128, 128, 128)


def test_composite_nearest_scales_blocks():
    tile = np.array(
        [[[10, 10, 10], [20, 20, 20]], [[30, 30, 30], [40, 40, 40]]], dtype=np.uint8
    )
    canvas = compositor.composite_tiles(
        (8, 8), [((0, 0, 8, 8), tile)], resample="nearest"
    )
    assert (canvas[0:4, 0:4] == 10).all()
    assert (canvas[0:4, 4:8] == 20).all()
    assert (canvas[4:8, 0:4] == 30).all()
    assert (canvas[4:8, 4:8] == 40).all()


def test_composite_clips_out_of_canvas():
    tile = np.full((4, 4, 3), 77, dtype=np.uint8)
    canvas = compositor.composite_tiles((8, 8), [((6, 6, 4, 4), tile)])
    assert (canvas[6:8, 6:8] == 77).all()
    assert tuple(canvas[5, 5]) == (128, 128, 128)


def test_blend_mask_counts_empty_space():
    mask = compositor.build_blend_mask((16, 16), [(0, 0, 8, 8), (8, 8, 8, 8)])
    assert set(np.unique(mask)) == {0.0, 1.0}
    assert mask.sum() == 16 * 16 - 2 * 64


def test_blend_mask_zero_gap_has_no_empty_space():
    rects = [(0, 0, 8, 8), (8, 0, 8, 8), (0, 8, 8, 8), (8, 8, 8, 8)]
    mask = compositor.build_blend_mask((16, 16), rects)
    assert mask.sum() == 0


def test_blur_sigma_zero_is_identity():
    rng = np.random.default_rng(0)
    plane = rng.random((16, 16))
    out = compositor.gaussian_blur(plane, 0.0)
    assert out is not plane
    assert np.array_equal(out, plane)


def test_blur_rejects_negative_sigma():
    with pytest.raises(ValueError):
        compositor.gaussian_blur(np.zeros((4, 4)), -1.0)


def test_blur_preserves_constant_plane():
    plane = np.full((32, 32), 0.37)
    out = compositor.gaussian_blur(plane, 4.0)
    assert np.abs(out - 0.37).max() < 1e-12


def test_blur_matches_dense_oracle():
    rng = np.random.default_rng(1)
    for sigma in (0.6, 1.0, 2.5):
        plane = rng.random((24, 24))
        ours = compositor.gaussian_blur(plane, sigma)
        ref = oracles.dense_gaussian_blur(plane, sigma)
        assert np.abs(ours - ref).max() < 1e-6


def test_blur_impulse_matches_dense_oracle_at_edges():
    plane = np.zeros((16, 16))
    plane[0, 0] = 1.0
    plane[8, 8] = 1.0
    ours = compositor.gaussian_blur(plane, 1.5)
    ref = oracles.dense_gaussian_blur(plane, 1.5)
    assert np.abs(ours - ref).max() < 1e-6


def test_default_blur_sigma_clamps():
    assert compositor.default_blur_sigma(0) == 1.0
    assert compositor.default_blur_sigma(64) == 16.0
    assert compositor.default_blur_sigma(1000) == 32.0


def _flat_tile(value):
    return np.full((8, 8, 3), value, dtype=np.uint8)


def test_blend_plan_same_size_counts():
    rects = [(0, 0, 8, 8), (10, 10, 6, 6)]
    layers = [(rects[0], _flat_tile(10)), (rects[1], np.full((6, 6, 3), 90, np.uint8))]
    plan = compositor.make_blend_plan(
        (16, 16), layers, "blend it", grid_gap=8, generation_size=(16, 16)
    )
    assert plan.width == 16 and plan.height == 16
    assert plan.blend_mask.min() >= 0.0 and plan.blend_mask.max() <= 1.0
    assert plan.blur_sigma == 2.0
    pre = compositor.build_blend_mask((16, 16), rects)
    assert pre.sum() == 16 * 16 - 64 - 36


def test_blend_plan_letterboxes_wide_canvas():
    layers = [((0, 0, 8, 8), _flat_tile(10)), ((24, 0, 8, 8), _flat_tile(200))]
    plan = compositor.make_blend_plan(
        (32, 8), layers, "", grid_gap=16, generation_size=(16, 16)
    )
    assert plan.width == 16 and plan.height == 16
    # content occupies a 16x4 band in the middle; margins are empty space
    assert (plan.base_image[0:6] == 128).all()
    assert (plan.base_image[10:16] == 128).all()
    assert plan.blend_mask[0, 0] > 0.9
    sharp = compositor.make_blend_plan(
        (32, 8), layers, "", grid_gap=16, generation_size=(16, 16), blur_sigma=0.0
    )
    assert (sharp.blend_mask[0:6] == 1.0).all()
    assert (sharp.blend_mask[10:16] == 1.0).all()
    assert (sharp.blend_mask[6:10, 0:4] == 0.0).all()


def test_blend_plan_mask_binary_before_blur():
    layers = [((0, 0, 8, 8), _flat_tile(10))]
    plan = compositor.make_blend_plan(
        (16, 16), layers, "", grid_gap=0, generation_size=(16, 16), blur_sigma=0.0
    )
    assert set(np.unique(plan.blend_mask)) <= {0.0, 1.0}
    assert plan.blend_mask.sum() == 16 * 16 - 64
