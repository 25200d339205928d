"""Feature-code direction discovery and alpha traversal.

A direction is the unit normal of a max-margin linear separator between the
codes of rasters observed over ``dt`` and over ``2 dt``.  Moving a code along
it by ``alpha`` (clamped to the unit cube) drives generation toward intervals
that never appeared in training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from sklearn.svm import LinearSVC

from . import io
from .tiles import DomainError

DEFAULT_ALPHAS = np.round(np.linspace(-10.0, 10.0, 401), 10)
# Strong enough that the normal follows the bulk shift between classes rather
# than the few overlapping codes on the boundary.
DEFAULT_SVM_C = 0.01


class FitError(RuntimeError):
    pass


@dataclass
class LatentDirection:
    d: np.ndarray
    label: str = "tau"

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.float64)
        norm = np.linalg.norm(self.d)
        if not np.isfinite(norm) or norm == 0:
            raise DomainError("direction must be a finite non-zero vector")
        if abs(norm - 1.0) > 1e-9:
            self.d = self.d / norm

    def to_dict(self) -> dict:
        return {"d": self.d.tolist(), "label": self.label}

    @classmethod
    def from_dict(cls, doc: dict) -> "LatentDirection":
        return cls(np.asarray(doc["d"], dtype=np.float64), doc.get("label", "tau"))


@dataclass
class AlphaSweep:
    alphas: np.ndarray
    base_code: np.ndarray
    direction: LatentDirection
    rasters: list[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        if np.any(np.diff(self.alphas) <= 0):
            raise DomainError("alphas must be strictly increasing")

    def masses(self) -> np.ndarray:
        return np.array([float(r.sum()) for r in self.rasters])


def fit_direction(codes_low, codes_high, C: float = DEFAULT_SVM_C, min_codes: int = 20) -> LatentDirection:
    """Unit normal of a linear SVM separating the two code sets.

    Oriented so that ``codes_high`` project further along it than ``codes_low``.
    """
    lo = np.asarray(codes_low, dtype=np.float64)
    hi = np.asarray(codes_high, dtype=np.float64)
    if lo.ndim != 2 or hi.ndim != 2 or lo.shape[1] != hi.shape[1]:
        raise DomainError("code sets must be 2-D arrays with matching dimension")
    if len(lo) < min_codes or len(hi) < min_codes:
        raise DomainError(f"need at least {min_codes} codes per class")
    X = np.concatenate([lo, hi])
    if np.ptp(X, axis=0).max() == 0:
        raise FitError("all codes are identical; no separating direction")
    if np.allclose(lo.mean(axis=0), hi.mean(axis=0)) and np.allclose(np.sort(lo, axis=0), np.sort(hi, axis=0)):
        raise FitError("the two classes are indistinguishable")
    labels = np.r_[np.zeros(len(lo)), np.ones(len(hi))]
    svm = LinearSVC(C=C, loss="hinge", dual=True, max_iter=100_000, random_state=0)
    svm.fit(X, labels)
    w = svm.coef_.ravel()
    if np.linalg.norm(w) == 0:
        raise FitError("separator has a zero normal vector")
    d = w / np.linalg.norm(w)
    if (hi @ d).mean() < (lo @ d).mean():
        d = -d
    return LatentDirection(d)


def apply_alpha(a, direction: LatentDirection, alpha: float):
    """``clamp(a + alpha * d, 0, 1)``; returns the same array type as ``a``."""
    if isinstance(a, torch.Tensor):
        d = torch.as_tensor(direction.d, dtype=a.dtype)
        if a.shape[-1] != d.shape[0]:
            raise DomainError("code and direction dimensions differ")
        if alpha == 0:
            return a.clone()
        return torch.clamp(a + alpha * d, 0.0, 1.0)
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != direction.d.shape[0]:
        raise DomainError("code and direction dimensions differ")
    if alpha == 0:
        return a.copy()
    return np.clip(a + alpha * direction.d, 0.0, 1.0)


@torch.no_grad()
def encode_codes(model, counts: np.ndarray) -> torch.Tensor:
    """Feature codes for count rasters (N, n, n, c)."""
    x = np.log1p(np.asarray(counts, dtype=np.float64)).astype(np.float32).transpose(0, 3, 1, 2)
    model.eval()
    return model.encode_feature(torch.from_numpy(np.ascontiguousarray(x)))


def _condition_sample(model, y: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    b = y.shape[0]
    u = torch.rand(b, generator=gen, dtype=y.dtype)
    eps = torch.randn(b, model.cfg.d_z, generator=gen, dtype=y.dtype)
    _, z_c = model.sample_condition(y, u, eps)
    return z_c


@torch.no_grad()
def sweep(model, y: torch.Tensor, base_code: torch.Tensor, direction: LatentDirection,
          alphas: Sequence[float], gen: torch.Generator) -> list[np.ndarray]:
    """One count-domain raster (n, n, c) per alpha for a single road raster ``y`` (1, 1, n, n).

    The condition code is drawn once and reused, so alpha is the only thing
    that changes across the sweep.  Repeated alphas give identical rasters.
    """
    model.eval()
    base = base_code.reshape(1, -1).to(torch.float32)
    z_c = _condition_sample(model, y, gen)
    out = []
    # one alpha per forward pass: batch composition then cannot perturb the floats
    for al in alphas:
        x = model.decode(model.generate(apply_alpha(base, direction, float(al)), z_c))
        out.append(x[0].permute(1, 2, 0).double().numpy())
    return out


def save_sweep(out, result: AlphaSweep, checkpoint_id: str = "", extra: dict | None = None) -> None:
    """``sweep.btns`` (len(alphas), n, n, c float32) plus ``sweep.json`` metadata."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    digest = io.write_tensor(out / "sweep.btns", np.stack(result.rasters).astype(np.float32))
    io.write_json(out / "sweep.json", {
        "alphas": result.alphas.tolist(),
        "base_code": result.base_code.tolist(),
        "direction": result.direction.to_dict(),
        "checkpoint": checkpoint_id,
        "sha256": digest,
        **(extra or {}),
    })


def load_sweep(path) -> tuple[AlphaSweep, dict]:
    path = Path(path)
    meta = io.read_json(path / "sweep.json")
    if io.file_sha256(path / "sweep.btns") != meta["sha256"]:
        raise io.FormatError(f"{path}/sweep.btns does not match its recorded hash")
    stack = io.read_tensor(path / "sweep.btns").astype(np.float64)
    if len(stack) != len(meta["alphas"]):
        raise io.FormatError("sweep tensor and alpha grid lengths differ")
    res = AlphaSweep(np.asarray(meta["alphas"]), np.asarray(meta["base_code"]),
                     LatentDirection.from_dict(meta["direction"]), list(stack))
    return res, meta


@torch.no_grad()
def mass_curves(model, ys: torch.Tensor, base_codes: torch.Tensor, direction: LatentDirection,
                alphas: Sequence[float], gen: torch.Generator) -> np.ndarray:
    """Total generated mass, shape (len(ys), len(alphas)); one z_c per condition."""
    model.eval()
    alphas = np.asarray(alphas, dtype=np.float64)
    z_c = _condition_sample(model, ys, gen)
    curves = np.zeros((len(ys), len(alphas)))
    for j, al in enumerate(alphas):
        codes = apply_alpha(base_codes.to(torch.float32), direction, float(al))
        out = model.decode(model.generate(codes, z_c))
        curves[:, j] = out.double().sum(dim=(1, 2, 3)).numpy()
    return curves


@dataclass
class Calibration:
    alpha_star: float | None
    target_ratio: float
    alphas: np.ndarray
    ratios: np.ndarray

    @property
    def attained(self) -> bool:
        return self.alpha_star is not None

    def to_dict(self) -> dict:
        return {"alpha_star": self.alpha_star, "attained": self.attained,
                "target_ratio": self.target_ratio, "alphas": self.alphas.tolist(),
                "ratios": self.ratios.tolist()}


def calibrate_from_curve(mass: Callable[[float], float] | Sequence[float], alphas,
                         target_ratio: float) -> Calibration:
    """Smallest alpha in the grid with ``mass(alpha) >= target_ratio * mass(0)``."""
    if not target_ratio > 0:
        raise DomainError("target_ratio must be positive")
    alphas = np.asarray(alphas, dtype=np.float64)
    if not np.any(alphas == 0.0):
        raise DomainError("the alpha grid must contain 0")
    if callable(mass):
        m = np.array([float(mass(float(al))) for al in alphas])
    else:
        m = np.asarray(mass, dtype=np.float64)
    base = m[alphas == 0.0][0]
    if base <= 0:
        raise DomainError("mass at alpha = 0 must be positive")
    ratios = m / base
    hit = np.flatnonzero(ratios >= target_ratio)
    star = float(alphas[hit[0]]) if len(hit) else None
    return Calibration(star, float(target_ratio), alphas, ratios)


def calibrate_alpha(model, ys: torch.Tensor, base_codes: torch.Tensor, direction: LatentDirection,
                    target_ratio: float, gen: torch.Generator, alphas=DEFAULT_ALPHAS) -> Calibration:
    """Calibrate alpha against the mean generated mass over a set of conditions."""
    curves = mass_curves(model, ys, base_codes, direction, alphas, gen)
    return calibrate_from_curve(curves.mean(axis=0), alphas, target_ratio)
