import numpy as np
import pytest

from vaeinfocgan import figures


def _rows(k, n=8, c=1, seed=0):
    rng = np.random.default_rng(seed)
    road = (rng.uniform(size=(k, n, n)) < 0.3).astype(np.uint8)
    truth = rng.poisson(2.0, size=(k, n, n, c))
    gen = rng.uniform(0, 3, size=(k, n, n, c))
    return road, truth, gen


def test_twenty_row_comparison_grid():
    road, truth, gen = _rows(20)
    img = figures.comparison_grid(road, truth, gen, scale=2)
    pad, side = figures.PAD, 8 * 2
    assert img.shape == (pad + 20 * (side + pad), pad + 3 * (side + pad))
    assert img.dtype == np.uint8


def test_grid_panels_in_column_order():
    road, truth, gen = _rows(1)
    img = figures.comparison_grid(road, truth, gen, scale=1)
    p = figures.PAD
    assert np.array_equal(img[p:p + 8, p:p + 8], road[0] * 255)
    assert img[p:p + 8, 2 * p + 8:2 * p + 16].max() == 255


def test_alpha_strip_panel_count():
    rasters = [np.full((8, 8, 1), float(i)) for i in range(21)]
    img = figures.alpha_strip(rasters, scale=1)
    assert img.shape[0] == figures.PAD + 21 * (8 + figures.PAD)


def test_hcrm_panels_sum_channels():
    road, truth, gen = _rows(2, c=12)
    assert figures.comparison_grid(road, truth, gen).ndim == 2


def test_mismatched_inputs():
    road, truth, gen = _rows(3)
    with pytest.raises(ValueError):
        figures.comparison_grid(road[:2], truth, gen)
    with pytest.raises(ValueError):
        figures.tile_panels([])


def test_png_deterministic(tmp_path):
    road, truth, gen = _rows(4)
    img = figures.comparison_grid(road, truth, gen)
    figures.save_png(tmp_path / "a.png", img)
    figures.save_png(tmp_path / "b.png", img)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
