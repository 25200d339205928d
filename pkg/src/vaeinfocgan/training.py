"""Training loop, checkpoints and telemetry shared by every model kind.

A run directory holds ``telemetry.jsonl`` (one row per step) and
``checkpoints/step_XXXXXXX/`` snapshots.  Each snapshot stores one BTNS file
per parameter and per optimizer-state tensor, plus ``meta.json``.  Batch order
and per-step noise derive from ``(seed, step)`` alone, so a run resumed from a
snapshot continues exactly as the uninterrupted run would.
"""

from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import io, losses
from .baselines import BaselineSpec, baseline_step, build_baseline, make_baseline_optimizers
from .dataset import Dataset, derive_seed, to_model_inputs
from .model import LOSS_KEYS, NonFiniteLossError, TrainConfig, VAEInfoCGAN, draw_noise, \
    make_optimizers, train_step

log = logging.getLogger(__name__)

MAIN_KIND = "VAE-Info-cGAN"


@dataclass
class TrainData:
    x_log: torch.Tensor  # (N, c, n, n)
    y: torch.Tensor      # (N, 1, n, n)
    feat: torch.Tensor   # (N, d_feat)

    def __len__(self) -> int:
        return self.x_log.shape[0]


def load_split(ds: Dataset, split: str, task: str = "CRM", tau: int = 1) -> TrainData:
    idx = ds.split(split)
    x, y = to_model_inputs(ds.counts(task, tau)[idx], ds.tensor("road")[idx])
    return TrainData(torch.from_numpy(x), torch.from_numpy(y),
                     torch.from_numpy(ds.features(tau)[idx].astype(np.float32)))


class Learner:
    """A model plus its optimizers and one-step update rule."""

    def __init__(self, kind: str, cfg: TrainConfig, width: int | None = None):
        self.kind, self.cfg = kind, cfg
        torch.manual_seed(derive_seed(cfg.seed, "init"))
        if kind == MAIN_KIND:
            self.module = VAEInfoCGAN(cfg)
            self.optimizers = make_optimizers(self.module, cfg)
            self.telemetry_keys = LOSS_KEYS
            scale, offset = losses.info_nll_constants(cfg.d_a, cfg.info_sigma)
            log.info("info loss: Gaussian NLL = %.6g * MSE + %.6g (sigma_Q=%g)",
                     scale, offset, cfg.info_sigma)
        else:
            self.module = build_baseline(BaselineSpec.parse(kind), cfg, width)
            self.optimizers = make_baseline_optimizers(self.module, cfg)
            self.telemetry_keys = self.module.telemetry_keys

    @property
    def width(self) -> int:
        return getattr(self.module, "width", self.cfg.width)

    def step(self, x, y, f, gen: torch.Generator) -> dict:
        # spectral norm only advances its power iteration in train mode
        self.module.train()
        if self.kind == MAIN_KIND:
            return train_step(self.module, self.optimizers, x, y, draw_noise(self.cfg, x.shape[0], gen))
        return baseline_step(self.module, self.optimizers, x, y, f, gen)


def batch_indices(seed: int, step: int, n_items: int, batch: int) -> np.ndarray:
    per_epoch = max(1, n_items // batch)
    epoch, pos = divmod(step, per_epoch)
    perm = np.random.default_rng(derive_seed(seed, "epoch", epoch)).permutation(n_items)
    return perm[pos * batch:(pos + 1) * batch]


def step_generator(seed: int, step: int) -> torch.Generator:
    return torch.Generator().manual_seed(derive_seed(seed, "noise", step))


class Trainer:
    def __init__(self, learner: Learner, data: TrainData, out, dataset_id: str = "",
                 task: str = "CRM"):
        self.learner = learner
        self.data = data
        self.out = Path(out)
        self.dataset_id = dataset_id
        self.task = task
        self.step = 0
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "checkpoints").mkdir(exist_ok=True)

    @property
    def telemetry_path(self) -> Path:
        return self.out / "telemetry.jsonl"

    def run(self, until: int | None = None) -> Path | None:
        cfg = self.learner.cfg
        until = cfg.steps if until is None else until
        bs = min(cfg.batch_size, len(self.data))
        last = None
        while self.step < until:
            idx = torch.from_numpy(batch_indices(cfg.seed, self.step, len(self.data), bs))
            x, y, f = self.data.x_log[idx], self.data.y[idx], self.data.feat[idx]
            try:
                row = self.learner.step(x, y, f, step_generator(cfg.seed, self.step))
            except NonFiniteLossError as err:
                dump = self._dump(err, idx)
                raise NonFiniteLossError(f"{err} at step {self.step}; state dumped to {dump}",
                                         err.telemetry) from None
            io.append_jsonl(self.telemetry_path, row)
            self.step += 1
            if self.step % cfg.checkpoint_every == 0 or self.step == until:
                last = self.save()
        return last

    def _dump(self, err: NonFiniteLossError, idx) -> Path:
        d = self.out / f"diagnostic_step_{self.step:07d}"
        if d.exists():
            shutil.rmtree(d)
        save_checkpoint(self.learner, d, self.step, self.dataset_id, self.task)
        io.write_json(d / "failure.json", {"step": self.step, "error": str(err),
                                           "telemetry": err.telemetry,
                                           "batch_indices": idx.tolist()})
        return d

    def save(self) -> Path:
        d = self.out / "checkpoints" / f"step_{self.step:07d}"
        if d.exists():
            shutil.rmtree(d)
        save_checkpoint(self.learner, d, self.step, self.dataset_id, self.task)
        (self.out / "checkpoints" / "LATEST").write_text(d.name + "\n")
        return d

    @classmethod
    def resume(cls, out, data: TrainData, dataset_id: str = "") -> "Trainer":
        out = Path(out)
        latest = out / "checkpoints" / (out / "checkpoints" / "LATEST").read_text().strip()
        learner, meta = load_checkpoint(latest, with_optimizers=True)
        if dataset_id and meta["dataset_id"] and meta["dataset_id"] != dataset_id:
            raise io.FormatError("checkpoint was trained on a different dataset")
        tr = cls(learner, data, out, meta["dataset_id"], meta["task"])
        tr.step = meta["step"]
        rows = io.read_jsonl(tr.telemetry_path) if tr.telemetry_path.exists() else []
        # drop rows written after the snapshot
        tr.telemetry_path.write_text("".join(io.dumps_row(r) for r in rows[:tr.step]))
        return tr


def save_checkpoint(learner: Learner, d: Path, step: int, dataset_id: str, task: str) -> None:
    d.mkdir(parents=True)
    (d / "params").mkdir()
    (d / "optim").mkdir()
    names = []
    for name, t in learner.module.state_dict().items():
        io.write_tensor(d / "params" / f"{name}.btns", t.detach().cpu().numpy().astype(np.float32))
        names.append(name)
    optim_meta = {}
    for oname, opt in learner.optimizers.items():
        sd = opt.state_dict()
        steps = {}
        for pid, st in sd["state"].items():
            for key, val in st.items():
                if key == "step":
                    steps[str(pid)] = float(val)
                else:
                    io.write_tensor(d / "optim" / f"{oname}.{pid}.{key}.btns",
                                    val.detach().cpu().numpy().astype(np.float32))
        optim_meta[oname] = {"param_groups": sd["param_groups"], "steps": steps}
    io.write_json(d / "meta.json", {
        "kind": learner.kind,
        "width": learner.width,
        "config": learner.cfg.to_dict(),
        "step": step,
        "seed": learner.cfg.seed,
        "dataset_id": dataset_id,
        "task": task,
        "channels": learner.cfg.c,
        "params": names,
        "optimizers": optim_meta,
        "telemetry_keys": list(learner.telemetry_keys),
    })


def load_checkpoint(d, with_optimizers: bool = False) -> tuple[Learner, dict]:
    d = Path(d)
    if not (d / "meta.json").exists():
        raise FileNotFoundError(f"no checkpoint at {d}")
    meta = io.read_json(d / "meta.json")
    cfg = TrainConfig.from_dict(meta["config"])
    learner = Learner(meta["kind"], cfg, meta["width"])
    state = {name: torch.from_numpy(io.read_tensor(d / "params" / f"{name}.btns"))
             for name in meta["params"]}
    learner.module.load_state_dict(state)
    learner.module.eval()
    if with_optimizers:
        for oname, opt in learner.optimizers.items():
            om = meta["optimizers"][oname]
            state = {}
            for pid, step in om["steps"].items():
                st = {"step": torch.tensor(step)}
                for key in ("exp_avg", "exp_avg_sq"):
                    st[key] = torch.from_numpy(io.read_tensor(d / "optim" / f"{oname}.{pid}.{key}.btns"))
                state[int(pid)] = st
            opt.load_state_dict({"state": state, "param_groups": om["param_groups"]})
    return learner, meta


def resolve_checkpoint(path) -> Path:
    """Accept either a checkpoint directory or a run directory (uses LATEST)."""
    p = Path(path)
    if (p / "meta.json").exists():
        return p
    latest = p / "checkpoints" / "LATEST"
    if latest.exists():
        return p / "checkpoints" / latest.read_text().strip()
    raise FileNotFoundError(f"no checkpoint found at {p}")


def train_model(kind: str, cfg: TrainConfig, ds: Dataset, out, task: str = "CRM",
                steps: int | None = None) -> Path:
    data = load_split(ds, "train", task)
    if data.x_log.shape[1] != cfg.c:
        raise io.FormatError(f"config c={cfg.c} does not match {task} data")
    tr = Trainer(Learner(kind, cfg), data, out, ds.manifest_hash, task)
    return tr.run(steps)
