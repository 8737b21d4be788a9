"""Binary mask IO, centroid and scale statistics."""

import numpy as np
import pytest

from specsal.exceptions import MaskFormatError
from specsal.imageio import write_pgm
from specsal.masks import (
    EmptyMaskError,
    centroid,
    foreground_scale,
    is_small_object,
    read_mask,
    write_mask,
)


def test_mask_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    mask = (rng.random((9, 13)) < 0.3).astype(np.uint8)
    path = tmp_path / "m.pgm"
    write_mask(mask, path)
    back = read_mask(path)
    np.testing.assert_array_equal(back, mask)


def test_read_mask_rejects_gray_values(tmp_path):
    path = tmp_path / "gray.pgm"
    write_pgm(np.full((4, 4), 128, dtype=np.uint8), path)
    with pytest.raises(MaskFormatError):
        read_mask(path)


def test_write_mask_rejects_bad_arrays(tmp_path):
    with pytest.raises(MaskFormatError):
        write_mask(np.zeros((2, 2, 1), dtype=np.uint8), tmp_path / "x.pgm")
    with pytest.raises(MaskFormatError):
        write_mask(np.full((2, 2), 2, dtype=np.uint8), tmp_path / "x.pgm")


def test_foreground_scale():
    mask = np.zeros((10, 10), dtype=np.uint8)
    mask[:2, :5] = 1
    assert foreground_scale(mask) == 0.1


def test_is_small_object_cases():
    big = np.zeros((10, 10), dtype=np.uint8)
    big[:5, :5] = 1
    assert not is_small_object(big)
    tiny = np.zeros((20, 20), dtype=np.uint8)
    tiny[0, 0] = 1  # 1/400 = 0.0025 < 0.01
    assert is_small_object(tiny)
    exact = np.zeros((10, 10), dtype=np.uint8)
    exact[0, 0] = 1  # 0.01 is not strictly below the cutoff
    assert not is_small_object(exact)


def test_centroid_single_pixel_uses_pixel_centers():
    mask = np.zeros((10, 10), dtype=np.uint8)
    mask[0, 0] = 1
    assert centroid(mask) == (0.05, 0.05)


def test_centroid_center_block():
    mask = np.zeros((8, 8), dtype=np.uint8)
    mask[3:5, 3:5] = 1  # symmetric around the center
    assert centroid(mask) == (0.5, 0.5)


def test_centroid_is_xy_ordered():
    mask = np.zeros((10, 20), dtype=np.uint8)
    mask[9, 0] = 1  # bottom-left corner: x small, y large
    x, y = centroid(mask)
    assert x == 0.5 / 20
    assert y == 9.5 / 10


def test_centroid_empty_mask():
    with pytest.raises(EmptyMaskError):
        centroid(np.zeros((4, 4), dtype=np.uint8))
