"""Web-Mercator slippy-tile arithmetic.

Tiles follow the usual slippy-map convention: ``tx`` grows eastward from the
antimeridian and ``ty`` grows southward from the northern Mercator limit.
All geodetic math is double precision; tile indices are exact integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ZOOM = 24
MAX_LAT = math.degrees(math.atan(math.sinh(math.pi)))  # 85.0511287798...


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-MAX_LAT - 1e-12 <= self.lat <= MAX_LAT + 1e-12) or math.isnan(self.lat):
            raise DomainError(f"latitude {self.lat} outside the Mercator band")
        if not (-180.0 <= self.lon <= 180.0):
            raise DomainError(f"longitude {self.lon} outside [-180, 180]")
        if self.lon == 180.0:
            object.__setattr__(self, "lon", -180.0)


@dataclass(frozen=True)
class TileIndex:
    tx: int
    ty: int
    zoom: int = ZOOM

    def __post_init__(self):
        if not 0 <= self.zoom <= ZOOM:
            raise DomainError(f"zoom {self.zoom} outside [0, {ZOOM}]")
        side = 1 << self.zoom
        if not (0 <= self.tx < side and 0 <= self.ty < side):
            raise DomainError(f"tile ({self.tx}, {self.ty}) outside zoom-{self.zoom} grid")


@dataclass(frozen=True)
class PatchWindow:
    """An ``n x n`` block of tiles whose northwest corner is ``origin``."""

    origin: TileIndex
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("window side must be >= 1")
        side = 1 << self.origin.zoom
        if self.origin.tx + self.n > side or self.origin.ty + self.n > side:
            raise DomainError("window extends past the tile grid")

    @property
    def zoom(self) -> int:
        return self.origin.zoom

    def bounds(self) -> tuple[float, float, float, float]:
        """(south, west, north, east) in degrees."""
        nw = tile_to_lonlat(self.origin)
        o = self.origin
        se_tx, se_ty = o.tx + self.n, o.ty + self.n
        side = 1 << o.zoom
        east = -180.0 + 360.0 * se_tx / side
        south = _tile_y_to_lat(se_ty, o.zoom)
        return south, nw.lon, nw.lat, east

    def to_dict(self) -> dict:
        return {"tx": self.origin.tx, "ty": self.origin.ty, "zoom": self.origin.zoom, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchWindow":
        return cls(TileIndex(int(d["tx"]), int(d["ty"]), int(d["zoom"])), int(d["n"]))


def _tile_y_to_lat(ty: float, zoom: int) -> float:
    return math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * ty / (1 << zoom)))))


def lonlat_to_tile(p: GeoPoint, zoom: int = ZOOM) -> TileIndex:
    if not 0 <= zoom <= ZOOM:
        raise DomainError(f"zoom {zoom} outside [0, {ZOOM}]")
    tx, ty = lonlat_to_tile_xy(np.array([p.lat]), np.array([p.lon]), zoom)
    return TileIndex(int(tx[0]), int(ty[0]), zoom)


def lonlat_to_tile_xy(lat, lon, zoom: int = ZOOM) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized forward mapping; returns int64 ``(tx, ty)`` arrays."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any(np.abs(lat) > MAX_LAT + 1e-12) or np.any(np.isnan(lat)):
        raise DomainError("latitude outside the Mercator band")
    fx, fy = lonlat_to_fractional(lat, lon, zoom)
    side = 1 << zoom
    tx = np.floor(fx).astype(np.int64)
    ty = np.floor(fy).astype(np.int64)
    return np.clip(tx, 0, side - 1), np.clip(ty, 0, side - 1)


def lonlat_to_fractional(lat, lon, zoom: int = ZOOM) -> tuple[np.ndarray, np.ndarray]:
    """Continuous tile coordinates (tile units) for a point; no flooring."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    lon = np.where(lon >= 180.0, lon - 360.0, lon)
    side = float(1 << zoom)
    phi = np.radians(lat)
    fx = (lon + 180.0) / 360.0 * side
    fy = (1.0 - np.arcsinh(np.tan(phi)) / math.pi) / 2.0 * side
    return fx, fy


def fractional_to_lonlat(fx, fy, zoom: int = ZOOM) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`lonlat_to_fractional`; returns ``(lat, lon)``."""
    side = float(1 << zoom)
    fx = np.asarray(fx, dtype=np.float64)
    fy = np.asarray(fy, dtype=np.float64)
    lon = fx / side * 360.0 - 180.0
    lat = np.degrees(np.arctan(np.sinh(math.pi * (1.0 - 2.0 * fy / side))))
    return lat, lon


def tile_to_lonlat(t: TileIndex) -> GeoPoint:
    """Northwest corner of tile ``t``."""
    side = 1 << t.zoom
    lon = -180.0 + 360.0 * t.tx / side
    return GeoPoint(_tile_y_to_lat(t.ty, t.zoom), lon)


def tile_to_pixel(t: TileIndex, w: PatchWindow) -> tuple[int, int] | None:
    """``(row, col)`` of tile ``t`` inside ``w``, or None if outside."""
    if t.zoom != w.origin.zoom:
        raise DomainError(f"zoom mismatch: tile {t.zoom} vs window {w.origin.zoom}")
    r = t.ty - w.origin.ty
    c = t.tx - w.origin.tx
    if 0 <= r < w.n and 0 <= c < w.n:
        return r, c
    return None


def meters_per_tile(lat: float, zoom: int = ZOOM) -> float:
    """Ground size of one tile edge at latitude ``lat`` (spherical earth)."""
    return 2 * math.pi * 6378137.0 * math.cos(math.radians(lat)) / (1 << zoom)
