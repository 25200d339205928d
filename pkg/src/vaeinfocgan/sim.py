"""Synthetic road networks and probe-style GPS trajectories.

Agents are memoryless random walkers on the road graph: they move at the
edge's speed limit, never U-turn unless stuck at a dead end, and emit a GPS
fix every ``sample_period`` seconds.  Each agent draws from its own RNG stream
keyed on ``(seed, agent_id)``, so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .tiles import DomainError, GeoPoint, lonlat_to_fractional, ZOOM

EARTH_RADIUS = 6378137.0
STYLES = ("grid", "perturbed-grid", "radial")


@dataclass(frozen=True)
class Region:
    south: float
    west: float
    north: float
    east: float

    @property
    def center_lat(self) -> float:
        return 0.5 * (self.south + self.north)

    def contains(self, lat, lon, tol: float = 1e-12) -> np.ndarray:
        lat = np.asarray(lat)
        lon = np.asarray(lon)
        return ((lat >= self.south - tol) & (lat <= self.north + tol)
                & (lon >= self.west - tol) & (lon <= self.east + tol))


class LocalFrame:
    """Equirectangular meters east/north of a reference point.

    The map is affine in (lat, lon), so straight segments stay straight in
    both coordinate systems.
    """

    def __init__(self, lat0: float, lon0: float, lat_ref: float):
        self.lat0 = lat0
        self.lon0 = lon0
        self.kx = math.radians(1.0) * EARTH_RADIUS * math.cos(math.radians(lat_ref))
        self.ky = math.radians(1.0) * EARTH_RADIUS

    def to_xy(self, lat, lon):
        return (np.asarray(lon) - self.lon0) * self.kx, (np.asarray(lat) - self.lat0) * self.ky

    def to_latlon(self, x, y):
        return self.lat0 + np.asarray(y) / self.ky, self.lon0 + np.asarray(x) / self.kx


@dataclass
class RoadNetwork:
    lat: np.ndarray
    lon: np.ndarray
    edges: np.ndarray  # (E, 2) node indices
    speed: np.ndarray  # (E,) m/s
    region: Region
    lattice: np.ndarray | None = field(default=None, repr=False)  # unjittered node positions (lat, lon)

    @property
    def nodes(self) -> list[GeoPoint]:
        return [GeoPoint(float(a), float(b)) for a, b in zip(self.lat, self.lon)]

    @property
    def n_nodes(self) -> int:
        return len(self.lat)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def frame(self) -> LocalFrame:
        r = self.region
        return LocalFrame(r.south, r.west, r.center_lat)

    def is_connected(self) -> bool:
        if self.n_nodes == 0:
            return False
        adj = _adjacency(self.n_nodes, self.edges)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for _, v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n_nodes

    def to_dict(self) -> dict:
        r = self.region
        return {
            "region": [r.south, r.west, r.north, r.east],
            "lat": self.lat.tolist(),
            "lon": self.lon.tolist(),
            "edges": self.edges.tolist(),
            "speed": self.speed.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoadNetwork":
        return cls(
            lat=np.asarray(d["lat"], dtype=np.float64),
            lon=np.asarray(d["lon"], dtype=np.float64),
            edges=np.asarray(d["edges"], dtype=np.int64).reshape(-1, 2),
            speed=np.asarray(d["speed"], dtype=np.float64),
            region=Region(*d["region"]),
        )


@dataclass(frozen=True)
class TracePoint:
    position: GeoPoint
    timestamp: float
    heading: float


@dataclass
class Trajectory:
    """One agent's trace, stored column-wise."""

    agent_id: int
    lat: np.ndarray
    lon: np.ndarray
    t: np.ndarray
    heading: np.ndarray
    segment: np.ndarray | None = field(default=None, repr=False)  # path segment of each fix

    def __post_init__(self):
        if len(self.t) < 2:
            raise DomainError("a trajectory needs at least two points")
        if np.any(np.diff(self.t) <= 0):
            raise DomainError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def points(self) -> list[TracePoint]:
        return [TracePoint(GeoPoint(float(a), float(b)), float(t), float(h))
                for a, b, t, h in zip(self.lat, self.lon, self.t, self.heading)]

    def to_dict(self) -> dict:
        return {"agent_id": self.agent_id, "lat": self.lat.tolist(), "lon": self.lon.tolist(),
                "t": self.t.tolist(), "heading": self.heading.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(int(d["agent_id"]), *(np.asarray(d[k], dtype=np.float64)
                                         for k in ("lat", "lon", "t", "heading")))


@dataclass(frozen=True)
class ObservationInterval:
    start: float
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError("observation interval duration must be > 0")

    @property
    def end(self) -> float:
        return self.start + self.duration


def heading_of(a: GeoPoint, b: GeoPoint) -> float:
    """Initial bearing from ``a`` to ``b``, degrees clockwise from north."""
    if a.lat == b.lat and a.lon == b.lon:
        raise DomainError("heading undefined for coincident points")
    return float(_bearing(a.lat, a.lon, b.lat, b.lon))


def _bearing(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    yy = np.sin(dl) * np.cos(p2)
    xx = np.cos(p1) * np.sin(p2) - np.sin(p1) * np.cos(p2) * np.cos(dl)
    h = np.degrees(np.arctan2(yy, xx)) % 360.0
    # % can round a tiny negative angle up to exactly 360.0
    return np.where(h >= 360.0, 0.0, h)


def _adjacency(n_nodes: int, edges: np.ndarray) -> list[list[tuple[int, int]]]:
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n_nodes)]
    for e, (u, v) in enumerate(edges.tolist()):
        adj[u].append((e, v))
        adj[v].append((e, u))
    return adj


def _check_region(region: Region) -> None:
    if not (region.south < region.north and region.west < region.east):
        raise DomainError("degenerate region")
    fx0, fy0 = lonlat_to_fractional(region.north, region.west, ZOOM)
    fx1, fy1 = lonlat_to_fractional(region.south, region.east, ZOOM)
    if fx1 - fx0 < 2.0 or fy1 - fy0 < 2.0:
        raise DomainError("region must span at least 2x2 zoom-24 tiles")


def gen_road_network(region: Region, style: str = "grid", seed: int = 0, *,
                     blocks: int | tuple[int, int] = 3, jitter: float = 0.2,
                     speeds: Sequence[float] = (2.0, 3.0, 4.0),
                     spokes: int = 6) -> RoadNetwork:
    """Build a connected road graph inside ``region``.

    ``blocks`` is the number of blocks per side for the grid styles and the
    number of rings for ``radial``.  ``jitter`` is the perturbation radius as a
    fraction of the smaller lattice spacing (perturbed-grid only).
    """
    _check_region(region)
    if style not in STYLES:
        raise DomainError(f"unknown network style {style!r}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x2E7,)))
    frame = LocalFrame(region.south, region.west, region.center_lat)
    width, height = frame.to_xy(region.north, region.east)
    width, height = float(width), float(height)

    if style in ("grid", "perturbed-grid"):
        bx, by = (blocks, blocks) if isinstance(blocks, int) else blocks
        if bx < 1 or by < 1:
            raise DomainError("blocks must be >= 1")
        radius = jitter * min(width / bx, height / by) if style == "perturbed-grid" else 0.0
        # keep jittered nodes inside the region
        m = radius
        xs = np.linspace(m, width - m, bx + 1)
        ys = np.linspace(m, height - m, by + 1)
        gx, gy = np.meshgrid(xs, ys)  # row = y index
        lx, ly = gx.ravel(), gy.ravel()
        x, y = lx.copy(), ly.copy()
        if radius > 0:
            r = radius * np.sqrt(rng.uniform(0.0, 1.0, len(x)))
            th = rng.uniform(0.0, 2 * math.pi, len(x))
            x = x + r * np.cos(th)
            y = y + r * np.sin(th)
        idx = np.arange((bx + 1) * (by + 1)).reshape(by + 1, bx + 1)
        edges = np.concatenate([
            np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1),
            np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1),
        ])
    else:
        rings = blocks if isinstance(blocks, int) else blocks[0]
        if rings < 1 or spokes < 3:
            raise DomainError("radial networks need >= 1 ring and >= 3 spokes")
        cx, cy = width / 2, height / 2
        rmax = 0.5 * min(width, height)
        phase = rng.uniform(0.0, 2 * math.pi / spokes)
        x, y = [cx], [cy]
        edges_l = []
        for ring in range(1, rings + 1):
            rad = rmax * ring / rings
            for s in range(spokes):
                th = phase + 2 * math.pi * s / spokes
                x.append(cx + rad * math.cos(th))
                y.append(cy + rad * math.sin(th))
                me = 1 + (ring - 1) * spokes + s
                inner = 0 if ring == 1 else me - spokes
                edges_l.append((inner, me))
                nxt = 1 + (ring - 1) * spokes + (s + 1) % spokes
                edges_l.append((me, nxt))
        x, y = np.asarray(x), np.asarray(y)
        lx, ly = x, y
        edges = np.asarray(edges_l, dtype=np.int64)

    speed = rng.choice(np.asarray(speeds, dtype=np.float64), size=len(edges))
    lat, lon = frame.to_latlon(x, y)
    llat, llon = frame.to_latlon(lx, ly)
    net = RoadNetwork(np.asarray(lat, dtype=np.float64), np.asarray(lon, dtype=np.float64),
                      edges.astype(np.int64), speed, region,
                      lattice=np.stack([llat, llon], axis=1))
    seg_len = np.hypot(x[edges[:, 0]] - x[edges[:, 1]], y[edges[:, 0]] - y[edges[:, 1]])
    if np.any(seg_len <= 0):
        raise DomainError("generated a zero-length edge")
    return net


def _edge_geometry(net: RoadNetwork):
    frame = net.frame()
    x, y = frame.to_xy(net.lat, net.lon)
    u, v = net.edges[:, 0], net.edges[:, 1]
    length = np.hypot(x[v] - x[u], y[v] - y[u])
    return frame, length


def simulate_traffic(net: RoadNetwork, interval: ObservationInterval, agent_rate: float,
                     gps_noise_sigma: float, sample_period: float, seed: int, *,
                     trip_duration: float = 120.0) -> list[Trajectory]:
    """Random-walk agents arriving as a Poisson process.

    Agents arrive over ``[start - trip_duration, end)`` and each walks for
    ``trip_duration`` seconds, so the expected number of fixes inside the
    interval is ``agent_rate * duration * trip_duration / sample_period``.
    Only fixes inside ``[start, end)`` are kept; agents left with fewer than
    two fixes are dropped.
    """
    if not agent_rate > 0:
        raise DomainError("agent_rate must be > 0")
    if not sample_period > 0:
        raise DomainError("sample_period must be > 0")
    if gps_noise_sigma < 0:
        raise DomainError("gps_noise_sigma must be >= 0")
    if net.n_nodes == 0 or net.n_edges == 0:
        raise DomainError("empty road network")

    frame, length = _edge_geometry(net)
    adj = _adjacency(net.n_nodes, net.edges)
    root = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xA771,)))
    span = interval.duration + trip_duration
    n_agents = int(root.poisson(agent_rate * span))
    arrivals = np.sort(root.uniform(interval.start - trip_duration, interval.end, n_agents))

    out = []
    for agent_id, t0 in enumerate(arrivals.tolist()):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, agent_id)))
        traj = _walk(net, adj, length, frame, agent_id, t0, trip_duration, sample_period,
                     gps_noise_sigma, interval, rng)
        if traj is not None:
            out.append(traj)
    return out


def _walk(net, adj, length, frame, agent_id, t0, trip_duration, sample_period, sigma,
          interval, rng) -> Trajectory | None:
    n_samples = int(math.floor(trip_duration / sample_period)) + 1
    ts = t0 + sample_period * np.arange(n_samples)
    keep = (ts >= interval.start) & (ts < interval.end)
    if keep.sum() < 2:
        # still consume nothing else; each agent owns its stream
        return None

    e = int(rng.integers(net.n_edges))
    forward = bool(rng.integers(2))
    u, v = (net.edges[e] if forward else net.edges[e][::-1]).tolist()
    s0 = rng.uniform(0.0, length[e])
    # path vertices: node sequence with times at which they are reached
    t_end = t0 + trip_duration
    seq_nodes = [u, v]
    seq_edges = [e]
    times = [t0 - s0 / net.speed[e], t0 - s0 / net.speed[e] + length[e] / net.speed[e]]
    while times[-1] < t_end:
        here, came = seq_nodes[-1], seq_edges[-1]
        options = [(ee, w) for ee, w in adj[here] if ee != came]
        if not options:
            options = adj[here]
        ee, w = options[int(rng.integers(len(options)))]
        seq_nodes.append(w)
        seq_edges.append(ee)
        times.append(times[-1] + length[ee] / net.speed[ee])

    times = np.asarray(times)
    nodes = np.asarray(seq_nodes)
    ts = ts[keep]
    seg = np.searchsorted(times, ts, side="right") - 1
    seg = np.clip(seg, 0, len(seq_edges) - 1)
    frac = (ts - times[seg]) / (times[seg + 1] - times[seg])
    a, b = nodes[seg], nodes[seg + 1]
    lat = net.lat[a] + frac * (net.lat[b] - net.lat[a])
    lon = net.lon[a] + frac * (net.lon[b] - net.lon[a])
    heading = _bearing(net.lat[a], net.lon[a], net.lat[b], net.lon[b])
    if sigma > 0:
        noise = rng.normal(0.0, sigma, size=(len(ts), 2))
        lat = lat + np.degrees(noise[:, 1] / EARTH_RADIUS)
        lon = lon + np.degrees(noise[:, 0] / (EARTH_RADIUS * np.cos(np.radians(lat))))
    return Trajectory(agent_id, lat, lon, ts, heading, segment=np.asarray(seq_edges)[seg])


def count_points(trajs: Sequence[Trajectory]) -> int:
    return int(sum(len(t) for t in trajs))


def iter_points(trajs: Sequence[Trajectory]) -> Iterator[tuple[float, float, float, float]]:
    for tr in trajs:
        yield from zip(tr.lat.tolist(), tr.lon.tolist(), tr.t.tolist(), tr.heading.tolist())
