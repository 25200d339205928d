"""Synthetic dataset generation and the on-disk dataset directory.

Directory layout::

    manifest.json          format version, geometry, splits, sha256 of every file
    patches.json           per-patch window, network style, traffic rate
    networks.jsonl.gz      one road network per line
    road.btns              (N, n, n, 1) uint8 binary road rasters
    crm_dt.btns            (N, n, n, 1) uint32 counts over [t0, t0 + dt)
    crm_2dt.btns           (N, n, n, 1) uint32 counts over [t0, t0 + 2 dt)
    hcrm_dt.btns           (N, n, n, 12) uint32
    hcrm_2dt.btns          (N, n, n, 12) uint32
    features.btns          (N, 2) float32 feature-level condition at tau = dt
    trajectories/          optional, one jsonl.gz per patch
"""

from __future__ import annotations

import hashlib
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .raster import rasterize_crm, rasterize_hcrm, rasterize_road_network
from .sim import STYLES, ObservationInterval, Region, RoadNetwork, Trajectory, gen_road_network, \
    simulate_traffic
from .tiles import DomainError, GeoPoint, PatchWindow, TileIndex, lonlat_to_tile

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
T0 = 1_600_000_000.0
TENSOR_FILES = ("road", "crm_dt", "crm_2dt", "hcrm_dt", "hcrm_2dt", "features")


def derive_seed(root: int, label: str, *counters: int) -> int:
    """Stable 63-bit seed for a named stream under the root seed."""
    ss = np.random.SeedSequence(root, spawn_key=(zlib.crc32(label.encode()), *counters))
    return int(ss.generate_state(2, np.uint64)[0] >> np.uint64(1))


@dataclass
class SimConfig:
    patches: int = 2000
    n: int = 32
    dt: float = 120.0
    sample_period: float = 1.0
    trip_duration: float = 60.0
    base_rate: float = 0.5
    rate_multiplier: tuple[float, float] = (0.5, 4.0)
    gps_noise_sigma: float = 1.0
    styles: tuple[str, ...] = STYLES
    blocks: tuple[int, int] = (2, 4)
    pad: float = 0.1
    lat_range: tuple[float, float] = (-60.0, 60.0)
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    save_trajectories: bool = False

    def __post_init__(self):
        for name in ("patches", "n", "dt", "sample_period", "trip_duration", "base_rate"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.gps_noise_sigma < 0:
            raise DomainError("gps_noise_sigma must be >= 0")
        if any(s not in STYLES for s in self.styles):
            raise DomainError(f"styles must be drawn from {STYLES}")
        lo, hi = self.rate_multiplier
        if not 0 < lo <= hi:
            raise DomainError("rate_multiplier must satisfy 0 < lo <= hi")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise DomainError("split must be three non-negative fractions summing to 1")
        self.rate_multiplier = tuple(self.rate_multiplier)
        self.styles = tuple(self.styles)
        self.blocks = tuple(self.blocks)
        self.lat_range = tuple(self.lat_range)
        self.split = tuple(self.split)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        names = set(cls.__dataclass_fields__)
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k in names})


def intensity_feature(multiplier: float, cfg: SimConfig) -> float:
    lo, hi = cfg.rate_multiplier
    if hi == lo:
        return 0.5
    return (math.log(multiplier) - math.log(lo)) / (math.log(hi) - math.log(lo))


@dataclass
class PatchSample:
    window: PatchWindow
    style: str
    blocks: int
    multiplier: float
    network: RoadNetwork
    trajectories: list[Trajectory] = field(repr=False)


def simulate_patch(cfg: SimConfig, seed: int, index: int) -> PatchSample:
    rng = np.random.default_rng(derive_seed(seed, "patch", index))
    lat = rng.uniform(*cfg.lat_range)
    lon = rng.uniform(-179.0, 179.0)
    t = lonlat_to_tile(GeoPoint(lat, lon))
    w = PatchWindow(TileIndex(t.tx, t.ty), cfg.n)
    s, west, north, e = w.bounds()
    dl, dw = (north - s) * cfg.pad, (e - west) * cfg.pad
    region = Region(s - dl, west - dw, north + dl, e + dw)
    style = cfg.styles[int(rng.integers(len(cfg.styles)))]
    blocks = int(rng.integers(cfg.blocks[0], cfg.blocks[1] + 1))
    lo, hi = cfg.rate_multiplier
    mult = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
    net = gen_road_network(region, style, derive_seed(seed, "network", index), blocks=blocks)
    trajs = simulate_traffic(net, ObservationInterval(T0, 2 * cfg.dt), cfg.base_rate * mult,
                             cfg.gps_noise_sigma, cfg.sample_period,
                             derive_seed(seed, "traffic", index), trip_duration=cfg.trip_duration)
    return PatchSample(w, style, blocks, mult, net, trajs)


def rasterize_patch(sample: PatchSample, dt: float) -> dict[str, np.ndarray]:
    iv1 = ObservationInterval(T0, dt)
    iv2 = ObservationInterval(T0, 2 * dt)
    w, trajs = sample.window, sample.trajectories
    return {
        "road": rasterize_road_network(sample.network, w).values,
        "crm_dt": rasterize_crm(trajs, w, iv1).values,
        "crm_2dt": rasterize_crm(trajs, w, iv2).values,
        "hcrm_dt": rasterize_hcrm(trajs, w, iv1).values,
        "hcrm_2dt": rasterize_hcrm(trajs, w, iv2).values,
    }


def assign_splits(count: int, fractions, seed: int) -> dict[str, list[int]]:
    perm = np.random.default_rng(derive_seed(seed, "split")).permutation(count)
    n_train = int(round(fractions[0] * count))
    n_val = int(round(fractions[1] * count))
    return {"train": sorted(perm[:n_train].tolist()),
            "val": sorted(perm[n_train:n_train + n_val].tolist()),
            "test": sorted(perm[n_train + n_val:].tolist())}


def simgen(cfg: SimConfig, seed: int, out) -> Path:
    """Simulate, rasterize and write a complete dataset directory."""
    out = io.ensure_fresh_dir(out)
    n, N = cfg.n, cfg.patches
    arrays = {
        "road": np.zeros((N, n, n, 1), np.uint8),
        "crm_dt": np.zeros((N, n, n, 1), np.uint32),
        "crm_2dt": np.zeros((N, n, n, 1), np.uint32),
        "hcrm_dt": np.zeros((N, n, n, 12), np.uint32),
        "hcrm_2dt": np.zeros((N, n, n, 12), np.uint32),
        "features": np.zeros((N, 2), np.float32),
    }
    patches, networks = [], []
    if cfg.save_trajectories:
        (out / "trajectories").mkdir()
    for i in range(N):
        sample = simulate_patch(cfg, seed, i)
        for k, v in rasterize_patch(sample, cfg.dt).items():
            arrays[k][i] = v
        arrays["features"][i] = (intensity_feature(sample.multiplier, cfg), 0.5)
        patches.append({"index": i, "window": sample.window.to_dict(), "style": sample.style,
                        "blocks": sample.blocks, "rate_multiplier": sample.multiplier})
        networks.append(sample.network.to_dict())
        if cfg.save_trajectories:
            io.write_jsonl_gz(out / "trajectories" / f"{i:06d}.jsonl.gz",
                              (tr.to_dict() for tr in sample.trajectories))
        if (i + 1) % 500 == 0:
            log.info("simulated %d/%d patches", i + 1, N)

    for k, v in arrays.items():
        io.write_tensor(out / f"{k}.btns", v)
    io.write_json(out / "patches.json", patches)
    io.write_jsonl_gz(out / "networks.jsonl.gz", networks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "zoom": 24,
        "n": n,
        "tasks": {"CRM": 1, "HCRM": 12},
        "dt_seconds": cfg.dt,
        "tau_multiples": [1, 2],
        "t0": T0,
        "patch_count": N,
        "splits": assign_splits(N, cfg.split, seed),
        "seed": seed,
        "config": cfg.to_dict(),
        "feature_names": ["intensity", "tau"],
        "hashes": {},
    }
    manifest["hashes"] = {k: v for k, v in io.tree_hashes(out).items()}
    io.write_json(out / "manifest.json", manifest)
    return out


class Dataset:
    """Read-only view of a dataset directory, hash-verified on open."""

    def __init__(self, root, verify: bool = True):
        self.root = Path(root)
        mpath = self.root / "manifest.json"
        if not mpath.exists():
            raise FileNotFoundError(f"{mpath} missing")
        self.manifest = io.read_json(mpath)
        if self.manifest.get("format_version") != FORMAT_VERSION:
            raise io.FormatError("unsupported dataset format version")
        self.manifest_hash = io.file_sha256(mpath)
        if verify:
            self.verify()
        self._cache: dict[str, np.ndarray] = {}

    def verify(self) -> None:
        for rel, digest in self.manifest["hashes"].items():
            p = self.root / rel
            if not p.exists():
                raise io.FormatError(f"dataset file {rel} missing")
            if io.file_sha256(p) != digest:
                raise io.FormatError(f"dataset file {rel} fails its hash check")
        splits = self.manifest["splits"]
        ids = sorted(splits["train"] + splits["val"] + splits["test"])
        if ids != list(range(self.manifest["patch_count"])):
            raise io.FormatError("splits are not disjoint and exhaustive")

    @property
    def n(self) -> int:
        return self.manifest["n"]

    def __len__(self) -> int:
        return self.manifest["patch_count"]

    def tensor(self, name: str) -> np.ndarray:
        if name not in self._cache:
            self._cache[name] = io.read_tensor(self.root / f"{name}.btns")
        return self._cache[name]

    def split(self, name: str) -> np.ndarray:
        return np.asarray(self.manifest["splits"][name], dtype=np.int64)

    def counts(self, task: str = "CRM", tau: int = 1) -> np.ndarray:
        return self.tensor(f"{task.lower()}_{'dt' if tau == 1 else '2dt'}")

    def features(self, tau: int = 1) -> np.ndarray:
        f = self.tensor("features").copy()
        f[:, 1] = 0.5 * tau
        return f

    def networks(self) -> list[RoadNetwork]:
        return [RoadNetwork.from_dict(d) for d in io.read_jsonl_gz(self.root / "networks.jsonl.gz")]

    def patches(self) -> list[dict]:
        return io.read_json(self.root / "patches.json")

    def trajectories(self, index: int) -> list[Trajectory]:
        p = self.root / "trajectories" / f"{index:06d}.jsonl.gz"
        if not p.exists():
            raise FileNotFoundError(f"{p} missing (dataset generated without save_trajectories)")
        return [Trajectory.from_dict(d) for d in io.read_jsonl_gz(p)]


def to_model_inputs(counts: np.ndarray, road: np.ndarray):
    """(N, n, n, c) counts and (N, n, n, 1) roads -> float32 NCHW log-domain arrays."""
    x = np.log1p(counts.astype(np.float64)).astype(np.float32).transpose(0, 3, 1, 2)
    y = road.astype(np.float32).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(x), np.ascontiguousarray(y)


def dataset_identity(ds: Dataset) -> str:
    return ds.manifest_hash


def content_digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()
