"""PNG image grids: (road, truth, generated) rows and alpha strips.

Count rasters are tone-mapped per panel with ``ln(1+x)`` scaled to the panel
maximum; channels are summed first.  Road rasters render white on black.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import io
from .raster import tone_map

PAD = 2
PAD_VALUE = 64


def _road_panel(road: np.ndarray) -> np.ndarray:
    return (np.asarray(road) > 0).astype(np.uint8) * 255


def _count_panel(counts: np.ndarray) -> np.ndarray:
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim == 2:
        c = c[..., None]
    return tone_map(np.clip(c, 0, None))


def _upscale(img: np.ndarray, scale: int) -> np.ndarray:
    return img.repeat(scale, axis=0).repeat(scale, axis=1) if scale > 1 else img


def tile_panels(rows: Sequence[Sequence[np.ndarray]], scale: int = 1) -> np.ndarray:
    """Assemble equally sized uint8 panels into one image with a fixed gutter."""
    if not rows or not rows[0]:
        raise ValueError("no panels to draw")
    h, w = rows[0][0].shape
    ncol = max(len(r) for r in rows)
    hs, ws = h * scale, w * scale
    img = np.full((PAD + len(rows) * (hs + PAD), PAD + ncol * (ws + PAD)), PAD_VALUE, np.uint8)
    for i, row in enumerate(rows):
        for j, panel in enumerate(row):
            if panel.shape != (h, w):
                raise ValueError("panels differ in size")
            y0, x0 = PAD + i * (hs + PAD), PAD + j * (ws + PAD)
            img[y0:y0 + hs, x0:x0 + ws] = _upscale(panel, scale)
    return img


def comparison_grid(road: np.ndarray, truth: np.ndarray, generated: np.ndarray,
                    scale: int = 4) -> np.ndarray:
    """One row per example with columns (road, truth, generated)."""
    if not (len(road) == len(truth) == len(generated)):
        raise ValueError("road, truth and generated must have the same length")
    rows = [[_road_panel(r), _count_panel(t), _count_panel(g)]
            for r, t, g in zip(road, truth, generated)]
    return tile_panels(rows, scale)


def alpha_strip(rasters: Sequence[np.ndarray], road: np.ndarray | None = None,
                scale: int = 4) -> np.ndarray:
    """One panel per alpha, stacked top to bottom; optional road panel first."""
    rows = [[_road_panel(road)]] if road is not None else []
    rows += [[_count_panel(r)] for r in rasters]
    return tile_panels(rows, scale)


def save_png(path, img: np.ndarray) -> None:
    io.write_png(path, img)
