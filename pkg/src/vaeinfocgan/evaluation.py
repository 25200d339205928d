"""APND metric and the five-model comparison.

APND is the mean over test rasters of ``100 * ||x - x_gen||_2 / ||x||_2``,
computed on count-domain tensors flattened over all channels.  Rasters whose
ground truth is all zero cannot be scored and are reported as skipped.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import torch

from . import io
from .baselines import ALL_BASELINES
from .dataset import Dataset, derive_seed, to_model_inputs
from .training import MAIN_KIND, load_checkpoint, resolve_checkpoint

MODEL_ORDER = (MAIN_KIND,) + tuple(s.name for s in ALL_BASELINES)
TASKS = ("CRM", "HCRM")
EVAL_BATCH = 64


class EvaluationError(RuntimeError):
    pass


@dataclass
class APNDResult:
    value: float
    evaluated: int
    skipped: int
    terms: list[float] = field(default_factory=list, repr=False)


def apnd_terms(pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> APNDResult:
    terms, skipped = [], 0
    for x, xg in pairs:
        x = np.asarray(x, dtype=np.float64).ravel()
        xg = np.asarray(xg, dtype=np.float64)
        if xg.size != x.size:
            raise EvaluationError(f"shape mismatch: {x.size} vs {xg.size} elements")
        denom = np.linalg.norm(x)
        if denom == 0:
            skipped += 1
            continue
        terms.append(float(np.linalg.norm(x - xg.ravel()) / denom))
    if not terms:
        raise EvaluationError("every pair has an all-zero ground truth; APND undefined")
    # fixed index order keeps the reduction deterministic
    return APNDResult(100.0 * float(np.mean(terms)), len(terms), skipped, terms)


def apnd(pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> float:
    return apnd_terms(pairs).value


# -- predictors map (counts, road, features, generator) -> count-domain rasters (B, n, n, c)

Predictor = Callable[[np.ndarray, np.ndarray, np.ndarray, torch.Generator], np.ndarray]


def _nchw_to_nhwc(t: torch.Tensor) -> np.ndarray:
    return t.permute(0, 2, 3, 1).double().numpy()


def model_predictor(kind: str, module) -> Predictor:
    module.eval()

    def predict(counts, road, feat, gen):
        x, y = to_model_inputs(counts, road)
        x, y = torch.from_numpy(x), torch.from_numpy(y)
        with torch.no_grad():
            if kind == MAIN_KIND:
                out = module.infer(y, module.encode_feature(x), gen)
            else:
                out = module.predict(y, torch.from_numpy(feat.astype(np.float32)), gen)
        return _nchw_to_nhwc(out)

    return predict


def copy_predictor(counts, road, feat, gen):
    return counts.astype(np.float64)


def zero_predictor(counts, road, feat, gen):
    return np.zeros(counts.shape)


def mean_predictor(train_counts: np.ndarray) -> Predictor:
    mean = train_counts.astype(np.float64).mean(axis=0)

    def predict(counts, road, feat, gen):
        return np.broadcast_to(mean, counts.shape)

    return predict


def evaluate_predictor(predict: Predictor, counts: np.ndarray, road: np.ndarray,
                       feat: np.ndarray, seed: int) -> APNDResult:
    """Score ``predict`` on aligned test arrays with a fixed per-batch RNG schedule."""
    pairs = []
    for b, start in enumerate(range(0, len(counts), EVAL_BATCH)):
        sl = slice(start, start + EVAL_BATCH)
        gen = torch.Generator().manual_seed(derive_seed(seed, "eval", b))
        out = predict(counts[sl], road[sl], feat[sl], gen)
        pairs.extend(zip(counts[sl], out))
    return apnd_terms(pairs)


def checkpoint_identity(ckpt: Path) -> str:
    return hashlib.sha256((ckpt / "meta.json").read_bytes()).hexdigest()[:16]


def compare_models(checkpoints: dict[str, dict[str, str | Path]], ds: Dataset, seed: int = 0,
                   references: bool = True, extra: dict[str, Predictor] | None = None) -> dict:
    """APND for every (model, task) with a checkpoint; missing cells are null.

    ``checkpoints`` maps task -> model name -> checkpoint or run directory.
    Reference rows (all-zero and train-mean predictors, plus any ``extra``
    stubs) are scored under the same protocol.
    """
    test = ds.split("test")
    train = ds.split("train")
    road = ds.tensor("road")[test]
    feat = ds.features(1)[test]
    report = {"dataset_id": ds.manifest_hash, "seed": seed, "test_size": int(len(test)),
              "results": {}, "references": {}, "checkpoints": {}}
    for task in TASKS:
        counts = ds.counts(task, 1)[test]
        task_ckpts = checkpoints.get(task, {})
        for name in MODEL_ORDER:
            cell = None
            if name in task_ckpts:
                ckpt = resolve_checkpoint(task_ckpts[name])
                learner, meta = load_checkpoint(ckpt)
                if meta["dataset_id"] != ds.manifest_hash:
                    raise EvaluationError(f"{name}/{task}: checkpoint trained on a different dataset split")
                if meta["kind"] != name:
                    raise EvaluationError(f"{ckpt} holds {meta['kind']}, expected {name}")
                if meta["channels"] != counts.shape[-1]:
                    raise EvaluationError(f"{name}/{task}: checkpoint has {meta['channels']} channels")
                res = evaluate_predictor(model_predictor(name, learner.module), counts, road, feat, seed)
                cell = {"apnd": res.value, "evaluated": res.evaluated, "skipped": res.skipped}
                report["checkpoints"][f"{name}/{task}"] = {"path": str(ckpt), "id": checkpoint_identity(ckpt),
                                                          "step": meta["step"]}
            report["results"].setdefault(name, {})[task] = cell
        refs = dict(extra or {})
        if references:
            refs.update({"all-zero": zero_predictor,
                         "train-mean": mean_predictor(ds.counts(task, 1)[train])})
        if refs:
            for rname, fn in refs.items():
                res = evaluate_predictor(fn, counts, road, feat, seed)
                report["references"].setdefault(rname, {})[task] = {
                    "apnd": res.value, "evaluated": res.evaluated, "skipped": res.skipped}
    return report


def render_table(report: dict) -> str:
    def fmt(cell):
        return "      n/a" if cell is None else f"{cell['apnd']:9.3f}"

    lines = [f"APND (%) on {report['test_size']} test rasters, lower is better",
             f"{'model':<16}{'CRM':>9}  {'HCRM':>9}",
             "-" * 36]
    for name in MODEL_ORDER:
        row = report["results"].get(name, {})
        lines.append(f"{name:<16}{fmt(row.get('CRM'))}  {fmt(row.get('HCRM'))}")
    if report.get("references"):
        lines.append("-" * 36)
        for name, row in report["references"].items():
            lines.append(f"{'(' + name + ')':<16}{fmt(row.get('CRM'))}  {fmt(row.get('HCRM'))}")
    skipped = {k: v["skipped"] for k, v in report["results"].get(MAIN_KIND, {}).items() if v}
    if skipped:
        lines.append(f"skipped all-zero rasters: {skipped}")
    return "\n".join(lines) + "\n"


def write_report(report: dict, out: Path) -> None:
    out = Path(out)
    io.write_json(out / "report.json", report)
    (out / "report.txt").write_text(render_table(report))
