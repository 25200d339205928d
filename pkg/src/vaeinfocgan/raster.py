"""CRM / HCRM / binary-road rasters over a zoom-24 patch window."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .sim import ObservationInterval, RoadNetwork, Trajectory
from .tiles import DomainError, PatchWindow, lonlat_to_fractional, lonlat_to_tile_xy

N_HEADING_BUCKETS = 12
BUCKET_DEG = 360.0 / N_HEADING_BUCKETS
CHANNELS = {"CRM": 1, "HCRM": N_HEADING_BUCKETS}


@dataclass
class RasterPatch:
    window: PatchWindow
    interval: ObservationInterval | None
    kind: str
    values: np.ndarray  # (n, n, c) uint32

    def __post_init__(self):
        if self.kind not in CHANNELS:
            raise DomainError(f"unknown raster kind {self.kind!r}")
        if self.values.shape != (self.window.n, self.window.n, CHANNELS[self.kind]):
            raise DomainError(f"values shape {self.values.shape} does not match {self.kind} window")

    @property
    def channels(self) -> int:
        return CHANNELS[self.kind]


@dataclass
class BinaryRoadRaster:
    window: PatchWindow
    values: np.ndarray  # (n, n, 1) uint8 in {0, 1}


@dataclass
class NormalizedPatch:
    window: PatchWindow
    interval: ObservationInterval | None
    kind: str
    values: np.ndarray  # (n, n, c) float, ln(1 + counts)


def heading_bucket(heading) -> np.ndarray:
    return (np.floor(np.asarray(heading, dtype=np.float64) / BUCKET_DEG).astype(np.int64)
            % N_HEADING_BUCKETS)


def _gather(trajs: Sequence[Trajectory]):
    if not trajs:
        z = np.zeros(0)
        return z, z, z, z
    return tuple(np.concatenate([getattr(tr, k) for tr in trajs]).astype(np.float64)
                 for k in ("lat", "lon", "t", "heading"))


def _check_window(w: PatchWindow) -> None:
    if w.zoom != 24:
        raise DomainError("rasters are defined on zoom-24 windows")


def _rasterize(trajs, w, iv, kind) -> RasterPatch:
    _check_window(w)
    lat, lon, t, heading = _gather(trajs)
    tx, ty = lonlat_to_tile_xy(lat, lon, w.zoom)
    if kind == "HCRM":
        ch = heading_bucket(heading)
    else:
        ch = np.zeros(len(t), dtype=np.int64)
    values = kernels.bin_points(
        np.ascontiguousarray(tx), np.ascontiguousarray(ty), np.ascontiguousarray(t),
        np.ascontiguousarray(ch), w.origin.tx, w.origin.ty, w.n,
        float(iv.start), float(iv.end), CHANNELS[kind])
    return RasterPatch(w, iv, kind, values)


def rasterize_crm(trajs: Sequence[Trajectory], w: PatchWindow, iv: ObservationInterval) -> RasterPatch:
    """Per-tile count of fixes inside ``w`` with timestamp in ``[start, end)``."""
    return _rasterize(trajs, w, iv, "CRM")


def rasterize_hcrm(trajs: Sequence[Trajectory], w: PatchWindow, iv: ObservationInterval) -> RasterPatch:
    """Like :func:`rasterize_crm`, split into twelve 30-degree heading channels."""
    return _rasterize(trajs, w, iv, "HCRM")


def rasterize_road_network(net: RoadNetwork, w: PatchWindow) -> BinaryRoadRaster:
    _check_window(w)
    if net.n_edges == 0:
        return BinaryRoadRaster(w, np.zeros((w.n, w.n, 1), dtype=np.uint8))
    fx, fy = lonlat_to_fractional(net.lat, net.lon, w.zoom)
    fx = fx - w.origin.tx
    fy = fy - w.origin.ty
    u, v = net.edges[:, 0], net.edges[:, 1]
    grid = kernels.trace_segments(
        np.ascontiguousarray(fx[u]), np.ascontiguousarray(fy[u]),
        np.ascontiguousarray(fx[v]), np.ascontiguousarray(fy[v]), w.n)
    return BinaryRoadRaster(w, grid[:, :, None])


def log_normalize(p: RasterPatch) -> NormalizedPatch:
    v = np.asarray(p.values)
    if np.any(v < 0):
        raise DomainError("counts must be non-negative")
    return NormalizedPatch(p.window, p.interval, p.kind, np.log1p(v.astype(np.float64)))


def denormalize(p: NormalizedPatch) -> RasterPatch:
    return RasterPatch(p.window, p.interval, p.kind, counts_from_log(p.values))


def counts_from_log(v) -> np.ndarray:
    """round(exp(v) - 1) clamped at zero, as uint32 counts."""
    c = np.rint(np.expm1(np.asarray(v, dtype=np.float64)))
    return np.clip(c, 0, np.iinfo(np.uint32).max).astype(np.uint32)


def tone_map(values) -> np.ndarray:
    """8-bit preview: ln(1 + x) scaled to the patch maximum; channels are summed."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 3:
        v = v.sum(axis=2)
    v = np.log1p(np.clip(v, 0, None))
    m = v.max() if v.size else 0.0
    if m <= 0:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.rint(v / m * 255.0).astype(np.uint8)
