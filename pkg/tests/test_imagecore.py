import math

import numpy as np
import pytest

from src.imaging.imagecore import (
    BinaryMap,
    ForegroundMask,
    GrayImage,
    build_integral,
    check_same_shape,
    fill_holes,
    foreground_ratio,
    largest_component,
    morph_open,
    window_stats,
    window_stats_map,
)
from src.utils.errors import DimensionError, ParameterError


def test_gray_image_rejects_out_of_range_values():
    with pytest.raises(ParameterError):
        GrayImage(np.array([[0.0, 256.0]]))
    with pytest.raises(ParameterError):
        GrayImage(np.array([[-1.0, 3.0]]))


def test_gray_image_rejects_empty_raster():
    with pytest.raises(DimensionError):
        GrayImage(np.zeros((0, 4)))


def test_gray_image_copies_and_freezes_its_data():
    source = np.full((2, 3), 10.0)
    img = GrayImage(source)
    source[0, 0] = 99.0
    assert img.data[0, 0] == 10.0
    assert (img.width, img.height, img.ppi) == (3, 2, 500)
    with pytest.raises(ValueError):
        img.data[0, 0] = 1.0


def test_binary_map_only_accepts_0_and_255():
    with pytest.raises(ParameterError):
        BinaryMap(np.array([[0, 128]]))
    bm = BinaryMap.from_foreground(np.array([[True, False]]))
    assert bm.data.tolist() == [[0, 255]]
    assert bm.foreground.tolist() == [[True, False]]


def test_window_stats_constant_image():
    ip = build_integral(GrayImage.filled(20, 10, 42.0))
    mean, std = window_stats(ip, 5, 5, 11)
    assert mean == 42.0
    assert std == 0.0


def test_window_stats_clips_at_the_border():
    ip = build_integral(GrayImage(np.arange(9, dtype=float).reshape(3, 3)))
    mean, std = window_stats(ip, 0, 0, 3)
    # fenêtre réduite à {0, 1, 3, 4}
    assert mean == pytest.approx(2.0)
    assert std == pytest.approx(math.sqrt(2.5))


def test_window_stats_rejects_even_window_and_outside_pixel():
    ip = build_integral(GrayImage.filled(8, 8, 1.0))
    with pytest.raises(ParameterError):
        window_stats(ip, 1, 1, 4)
    with pytest.raises(ParameterError):
        window_stats(ip, 8, 0, 3)


def test_window_stats_map_matches_per_pixel_statistics():
    img = GrayImage(np.random.default_rng(3).uniform(0, 255, (17, 23)))
    ip = build_integral(img)
    means, stds = window_stats_map(ip, 5)
    for x, y in [(0, 0), (22, 16), (11, 8), (3, 15), (20, 1)]:
        mean, std = window_stats(ip, x, y, 5)
        assert means[y, x] == pytest.approx(mean, abs=1e-9)
        assert stds[y, x] == pytest.approx(std, abs=1e-6)


def test_morph_open_removes_isolated_pixels_and_keeps_blocks():
    fg = np.zeros((8, 8), dtype=bool)
    fg[1, 1] = True
    fg[4:6, 4:6] = True
    opened = morph_open(BinaryMap.from_foreground(fg), 2, 2)
    assert not opened.foreground[1, 1]
    assert opened.foreground[4:6, 4:6].all()
    assert opened.foreground.sum() == 4


def test_morph_open_is_idempotent_and_anti_extensive():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        bm = BinaryMap.from_foreground(rng.random((16, 16)) < 0.55)
        width, height = rng.integers(1, 4, size=2)
        once = morph_open(bm, int(width), int(height))
        twice = morph_open(once, int(width), int(height))
        assert np.array_equal(once.data, twice.data)
        assert not np.any(once.foreground & ~bm.foreground)


def test_morph_open_rejects_empty_structuring_element():
    with pytest.raises(ParameterError):
        morph_open(BinaryMap.from_foreground(np.ones((3, 3), dtype=bool)), 0, 2)


def test_largest_component_keeps_the_biggest_blob():
    data = np.zeros((10, 10), dtype=bool)
    data[0:2, 0:2] = True
    data[5:9, 5:9] = True
    kept = largest_component(ForegroundMask(data))
    assert kept.count == 16
    assert kept.data[6, 6] and not kept.data[0, 0]


def test_largest_component_of_empty_mask_is_empty():
    assert largest_component(ForegroundMask.full(5, 5, False)).count == 0


def test_fill_holes_closes_a_ring():
    data = np.zeros((7, 7), dtype=bool)
    data[1:6, 1:6] = True
    data[3, 3] = False
    assert fill_holes(ForegroundMask(data)).data[3, 3]


def test_foreground_ratio():
    data = np.zeros((4, 5), dtype=bool)
    data[:, :2] = True
    assert foreground_ratio(ForegroundMask(data)) == pytest.approx(0.4)


def test_check_same_shape():
    check_same_shape(np.zeros((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        check_same_shape(np.zeros((2, 3)), np.zeros((3, 2)))
