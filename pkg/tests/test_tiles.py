import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vaeinfocgan.tiles import (MAX_LAT, DomainError, GeoPoint, PatchWindow, TileIndex,
                               fractional_to_lonlat, lonlat_to_tile, tile_to_lonlat,
                               tile_to_pixel)

# computed with mpmath at 50 digits from the closed-form slippy-map formula
SEATTLE_TILE = (2686717, 5858336)


def test_center_and_corner_anchors():
    assert lonlat_to_tile(GeoPoint(0.0, 0.0), 24) == TileIndex(8388608, 8388608)
    assert lonlat_to_tile(GeoPoint(85.0511287798, -180.0), 24) == TileIndex(0, 0)


def test_seattle_fixture():
    t = lonlat_to_tile(GeoPoint(47.6205, -122.3493), 24)
    assert (t.tx, t.ty) == SEATTLE_TILE


def test_inverse_anchors():
    nw = tile_to_lonlat(TileIndex(0, 0))
    assert nw.lon == -180.0
    assert nw.lat == pytest.approx(85.0511287798, abs=1e-9)
    c = tile_to_lonlat(TileIndex(2**23, 2**23))
    assert (c.lat, c.lon) == (0.0, 0.0)


def test_out_of_band_latitude():
    with pytest.raises(DomainError):
        GeoPoint(86.0, 0.0)
    with pytest.raises(DomainError):
        lonlat_to_tile(GeoPoint(0.0, 0.0), 25)


def test_lon_180_wraps():
    assert lonlat_to_tile(GeoPoint(0.0, 180.0)).tx == 0


def _center(t):
    lat, lon = fractional_to_lonlat(t.tx + 0.5, t.ty + 0.5, t.zoom)
    return GeoPoint(float(lat), float(lon))


def test_round_trip_random_tiles():
    rng = np.random.default_rng(0)
    for tx, ty in rng.integers(0, 2**24, size=(10_000, 2)).tolist():
        t = TileIndex(tx, ty)
        nw = tile_to_lonlat(t)
        assert lonlat_to_tile(_center(t), 24) == t
        # the northwest corner itself belongs to the tile (floor semantics)
        assert lonlat_to_tile(nw, 24).tx == tx


@settings(max_examples=300, deadline=None)
@given(st.floats(-MAX_LAT + 1e-9, MAX_LAT - 1e-9), st.floats(-180.0, 179.999999))
def test_point_inside_its_tile(lat, lon):
    t = lonlat_to_tile(GeoPoint(lat, lon))
    nw = tile_to_lonlat(t)
    se_lat, se_lon = fractional_to_lonlat(t.tx + 1, t.ty + 1, t.zoom)
    assert nw.lon <= lon + 1e-12 and lon < se_lon + 1e-12
    assert se_lat - 1e-12 <= lat <= nw.lat + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-80, 80), st.floats(-179, 179), st.floats(0, 1e-3), st.floats(0, 1e-3))
def test_monotone(lat, lon, dlat, dlon):
    a = lonlat_to_tile(GeoPoint(lat, lon))
    b = lonlat_to_tile(GeoPoint(lat + dlat, lon + dlon))
    assert b.tx >= a.tx
    assert b.ty <= a.ty


def test_tile_to_pixel():
    w = PatchWindow(TileIndex(100, 200), 8)
    assert tile_to_pixel(TileIndex(100, 200), w) == (0, 0)
    assert tile_to_pixel(TileIndex(101, 200), w) == (0, 1)
    assert tile_to_pixel(TileIndex(100, 201), w) == (1, 0)
    assert tile_to_pixel(TileIndex(108, 200), w) is None
    assert tile_to_pixel(TileIndex(99, 200), w) is None
    with pytest.raises(DomainError):
        tile_to_pixel(TileIndex(1, 1, 10), w)


def test_window_validation():
    with pytest.raises(DomainError):
        PatchWindow(TileIndex(2**24 - 4, 0), 8)
    with pytest.raises(DomainError):
        PatchWindow(TileIndex(0, 0), 0)


def test_deterministic():
    p = GeoPoint(12.345678, 98.765432)
    assert all(lonlat_to_tile(p) == lonlat_to_tile(p) for _ in range(5))
    assert math.isclose(MAX_LAT, 85.0511287798, abs_tol=1e-9)
