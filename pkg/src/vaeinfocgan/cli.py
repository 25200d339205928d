"""Command-line entry point: ``vaeinfocgan <command> [--config C] [--seed S] [--out DIR]``.

Every command validates its inputs before touching the filesystem, writes into
a fresh output directory, and stamps it with ``outputs.json`` (sha256 of every
file).  On failure a JSON error document goes to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np
import torch

from . import figures, io, latent
from .baselines import ALL_BASELINES, BaselineSpec
from .dataset import Dataset, SimConfig, derive_seed, simgen, simulate_patch, to_model_inputs
from .evaluation import MODEL_ORDER, TASKS, checkpoint_identity, compare_models, model_predictor, \
    render_table, write_report
from .model import TrainConfig
from .raster import rasterize_crm, rasterize_hcrm, tone_map
from .sim import ObservationInterval
from .training import MAIN_KIND, Learner, Trainer, load_checkpoint, load_split, resolve_checkpoint

log = logging.getLogger("vaeinfocgan")

STAMP = "outputs.json"


class CLIError(RuntimeError):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    doc = io.read_json(path)
    if not isinstance(doc, dict):
        raise CLIError(f"config {path} must hold a JSON object")
    return doc


def _stamp(out: Path) -> None:
    hashes = {k: v for k, v in io.tree_hashes(out).items() if k != STAMP}
    io.write_json(out / STAMP, hashes)


def _verify_stamp(d: Path) -> None:
    stamp = d / STAMP
    if not stamp.exists():
        raise io.FormatError(f"{d} has no {STAMP}")
    for rel, digest in io.read_json(stamp).items():
        p = d / rel
        if not p.exists() or io.file_sha256(p) != digest:
            raise io.FormatError(f"{d}/{rel} is missing or fails its hash check")


def parse_alphas(text: str) -> np.ndarray:
    """``lo:hi:num`` (inclusive linspace) or a comma-separated list."""
    if ":" in text:
        lo, hi, num = text.split(":")
        return np.round(np.linspace(float(lo), float(hi), int(num)), 10)
    return np.array([float(v) for v in text.split(",")])


# -- commands


def cmd_simgen(args) -> dict:
    doc = _load_config(args.config)
    if args.patches is not None:
        doc["patches"] = args.patches
    if args.save_trajectories:
        doc["save_trajectories"] = True
    cfg = SimConfig.from_dict(doc)
    out = simgen(cfg, args.seed, args.out)
    _stamp(out)
    return {"dataset": str(out), "patches": cfg.patches}


def cmd_rasterize(args) -> dict:
    ds = Dataset(args.dataset)
    if not 0 <= args.index < len(ds):
        raise CLIError(f"patch index {args.index} out of range")
    if args.task not in TASKS or args.tau not in (1, 2):
        raise CLIError("task must be CRM or HCRM and tau 1 or 2")
    cfg = SimConfig.from_dict(ds.manifest["config"])
    sample = simulate_patch(cfg, ds.manifest["seed"], args.index)
    if (ds.root / "trajectories").exists():
        trajs = ds.trajectories(args.index)
    else:
        trajs = sample.trajectories
    iv = ObservationInterval(ds.manifest["t0"], args.tau * ds.manifest["dt_seconds"])
    fn = rasterize_crm if args.task == "CRM" else rasterize_hcrm
    patch = fn(trajs, sample.window, iv)
    stored = ds.counts(args.task, args.tau)[args.index]
    out = io.ensure_fresh_dir(args.out)
    io.write_tensor(out / "raster.btns", patch.values)
    figures.save_png(out / "raster.png", tone_map(patch.values))
    doc = {"index": args.index, "task": args.task, "tau": args.tau,
           "window": sample.window.to_dict(), "total": int(patch.values.sum()),
           "matches_dataset": bool(np.array_equal(stored, patch.values))}
    io.write_json(out / "raster.json", doc)
    _stamp(out)
    return doc


def _train_config(args, ds: Dataset, kind: str) -> tuple[TrainConfig, str]:
    doc = _load_config(args.config)
    task = args.task or doc.pop("task", "CRM")
    doc.pop("dataset", None)
    if task not in TASKS:
        raise CLIError(f"unknown task {task}")
    c = ds.manifest["tasks"][task]
    if doc.setdefault("c", c) != c:
        raise CLIError(f"config c={doc['c']} does not match task {task} ({c} channels)")
    if doc.setdefault("n", ds.n) != ds.n:
        raise CLIError(f"config n={doc['n']} does not match the dataset (n={ds.n})")
    doc["seed"] = args.seed
    if args.steps is not None:
        doc["steps"] = args.steps
    if kind != MAIN_KIND:
        BaselineSpec.parse(kind)
    return TrainConfig.from_dict(doc), task


def _train(args, kind: str) -> dict:
    ds = Dataset(args.dataset)
    out = Path(args.out)
    if args.resume:
        data_task = io.read_json(resolve_checkpoint(out) / "meta.json")["task"]
        tr = Trainer.resume(out, load_split(ds, "train", data_task), ds.manifest_hash)
        if tr.learner.kind != kind:
            raise CLIError(f"{out} holds a {tr.learner.kind} run, not {kind}")
        until = args.steps if args.steps is not None else tr.learner.cfg.steps
    else:
        cfg, task = _train_config(args, ds, kind)
        data = load_split(ds, "train", task)
        out = io.ensure_fresh_dir(out)
        tr = Trainer(Learner(kind, cfg), data, out, ds.manifest_hash, task)
        until = cfg.steps
    ckpt = tr.run(until)
    _stamp(out)
    return {"kind": kind, "run": str(out), "checkpoint": str(ckpt) if ckpt else None, "step": tr.step}


def cmd_train(args) -> dict:
    return _train(args, MAIN_KIND)


def cmd_train_baseline(args) -> dict:
    return _train(args, BaselineSpec.parse(args.spec).name)


def _parse_ckpt_args(items) -> dict:
    """``NAME=PATH`` or ``NAME@TASK=PATH`` -> task -> name -> path."""
    table: dict[str, dict[str, str]] = {}
    for item in items or []:
        if "=" not in item:
            raise CLIError(f"checkpoint spec {item!r} must look like NAME[@TASK]=PATH")
        key, path = item.split("=", 1)
        name, _, task = key.partition("@")
        task = task or "CRM"
        if name not in MODEL_ORDER or task not in TASKS:
            raise CLIError(f"unknown model or task in {item!r}")
        table.setdefault(task, {})[name] = path
    return table


def cmd_eval(args) -> dict:
    ckpts = _parse_ckpt_args(args.ckpt)
    for task, row in _load_config(args.config).get("checkpoints", {}).items():
        ckpts.setdefault(task, {}).update(row)
    if not ckpts:
        raise CLIError("no checkpoints given")
    ds = Dataset(args.dataset)
    report = compare_models(ckpts, ds, seed=args.seed)
    report["dataset"] = str(ds.root)
    out = io.ensure_fresh_dir(args.out)
    write_report(report, out)
    _stamp(out)
    return {"report": str(out / "report.json"), "table": render_table(report)}


def _load_main(path):
    ckpt = resolve_checkpoint(path)
    learner, meta = load_checkpoint(ckpt)
    if meta["kind"] != MAIN_KIND:
        raise CLIError(f"{ckpt} is a {meta['kind']} checkpoint; {MAIN_KIND} required")
    return ckpt, learner.module, meta


def _codes(model, ds: Dataset, idx: np.ndarray, task: str, tau: int) -> torch.Tensor:
    return latent.encode_codes(model, ds.counts(task, tau)[idx])


def cmd_fit_direction(args) -> dict:
    ds = Dataset(args.dataset)
    ckpt, model, meta = _load_main(args.checkpoint)
    if meta["dataset_id"] != ds.manifest_hash:
        raise CLIError("checkpoint was trained on a different dataset")
    idx = ds.split(args.split)
    lo = _codes(model, ds, idx, meta["task"], 1).double().numpy()
    hi = _codes(model, ds, idx, meta["task"], 2).double().numpy()
    d = latent.fit_direction(lo, hi, C=args.svm_c)
    out = io.ensure_fresh_dir(args.out)
    doc = {**d.to_dict(), "checkpoint": str(ckpt), "checkpoint_id": checkpoint_identity(ckpt),
           "split": args.split, "codes_per_class": int(len(idx)),
           "mean_projection_low": float((lo @ d.d).mean()),
           "mean_projection_high": float((hi @ d.d).mean())}
    io.write_json(out / "direction.json", doc)
    _stamp(out)
    return doc


def cmd_sweep(args) -> dict:
    ds = Dataset(args.dataset)
    ckpt, model, meta = _load_main(args.checkpoint)
    if meta["dataset_id"] != ds.manifest_hash:
        raise CLIError("checkpoint was trained on a different dataset")
    direction = latent.LatentDirection.from_dict(io.read_json(Path(args.direction) / "direction.json")
                                                 if Path(args.direction).is_dir()
                                                 else io.read_json(args.direction))
    alphas = parse_alphas(args.alphas)
    test = ds.split("test")
    if not 0 <= args.condition < len(test):
        raise CLIError(f"condition index must be in [0, {len(test)})")
    i = test[args.condition : args.condition + 1]
    task = meta["task"]
    out = io.ensure_fresh_dir(args.out)
    y = torch.from_numpy(to_model_inputs(ds.counts(task, 1)[i], ds.tensor("road")[i])[1])
    base = _codes(model, ds, i, task, 1)[0]
    gen = torch.Generator().manual_seed(derive_seed(args.seed, "sweep", args.condition))
    rasters = latent.sweep(model, y, base, direction, alphas, gen)
    result = latent.AlphaSweep(alphas, base.double().numpy(), direction, rasters)
    latent.save_sweep(out, result, checkpoint_identity(ckpt),
                      {"checkpoint_path": str(ckpt), "condition": int(args.condition),
                       "patch_index": int(i[0]), "masses": result.masses().tolist()})
    figures.save_png(out / "strip.png", figures.alpha_strip(rasters, ds.tensor("road")[i[0]][..., 0]))
    doc = {"sweep": str(out), "alphas": len(alphas)}
    if args.target_ratio is not None:
        sel = test[: args.conditions]
        ys = torch.from_numpy(to_model_inputs(ds.counts(task, 1)[sel], ds.tensor("road")[sel])[1])
        cal = latent.calibrate_alpha(model, ys, _codes(model, ds, sel, task, 1), direction,
                                     args.target_ratio,
                                     torch.Generator().manual_seed(derive_seed(args.seed, "calibrate")),
                                     latent.DEFAULT_ALPHAS)
        io.write_json(out / "calibration.json", {**cal.to_dict(), "conditions": int(len(sel))})
        doc.update(alpha_star=cal.alpha_star, attained=cal.attained)
    _stamp(out)
    return doc


def cmd_report(args) -> dict:
    ev = Path(args.eval)
    _verify_stamp(ev)
    report = io.read_json(ev / "report.json")
    ds = Dataset(args.dataset or report["dataset"])
    if ds.manifest_hash != report["dataset_id"]:
        raise CLIError("evaluation report refers to a different dataset")
    out = io.ensure_fresh_dir(args.out)
    (out / "table.txt").write_text(render_table(report))
    doc = {"table": str(out / "table.txt"), "figures": []}
    for task in TASKS:
        entry = report["checkpoints"].get(f"{MAIN_KIND}/{task}")
        if entry is None:
            continue
        ckpt = Path(entry["path"])
        if checkpoint_identity(ckpt) != entry["id"]:
            raise io.FormatError(f"{ckpt} changed since evaluation")
        learner, _ = load_checkpoint(ckpt)
        test = ds.split("test")
        rng = np.random.default_rng(derive_seed(args.seed, "report-rows", TASKS.index(task)))
        rows = np.sort(rng.choice(test, size=min(args.rows, len(test)), replace=False))
        counts, road = ds.counts(task, 1)[rows], ds.tensor("road")[rows]
        gen = torch.Generator().manual_seed(derive_seed(args.seed, "report", TASKS.index(task)))
        pred = model_predictor(MAIN_KIND, learner.module)(counts, road, ds.features(1)[rows], gen)
        name = f"grid_{task.lower()}.png"
        figures.save_png(out / name, figures.comparison_grid(road[..., 0], counts, pred))
        doc["figures"].append(name)
    for k, sdir in enumerate(args.sweep or []):
        sdir = Path(sdir)
        _verify_stamp(sdir)
        res, meta = latent.load_sweep(sdir)
        road = ds.tensor("road")[meta["patch_index"]][..., 0]
        name = f"alpha_strip_{k}.png"
        figures.save_png(out / name, figures.alpha_strip(res.rasters, road))
        io.write_json(out / f"alpha_strip_{k}.json", {"alphas": res.alphas.tolist(),
                                                       "masses": res.masses().tolist(),
                                                       "source": str(sdir)})
        doc["figures"].append(name)
    _stamp(out)
    return doc


# -- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    common.add_argument("--out", type=Path, required=True, help="fresh output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vaeinfocgan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simgen", parents=[common], help="simulate a synthetic dataset")
    s.add_argument("--patches", type=int)
    s.add_argument("--save-trajectories", action="store_true")
    s.set_defaults(func=cmd_simgen)

    s = sub.add_parser("rasterize", parents=[common], help="re-rasterize one dataset patch")
    s.add_argument("--dataset", type=Path, required=True)
    s.add_argument("--index", type=int, required=True)
    s.add_argument("--task", default="CRM", choices=TASKS)
    s.add_argument("--tau", type=int, default=1, choices=(1, 2))
    s.set_defaults(func=cmd_rasterize)

    for name, func in (("train", cmd_train), ("train-baseline", cmd_train_baseline)):
        s = sub.add_parser(name, parents=[common], help=f"train {'a baseline' if '-' in name else MAIN_KIND}")
        if name == "train-baseline":
            s.add_argument("--spec", required=True, choices=[b.name for b in ALL_BASELINES])
        s.add_argument("--dataset", type=Path, required=True)
        s.add_argument("--task", choices=TASKS)
        s.add_argument("--steps", type=int)
        s.add_argument("--resume", action="store_true", help="continue the run in --out")
        s.set_defaults(func=func)

    s = sub.add_parser("eval", parents=[common], help="APND comparison table")
    s.add_argument("--dataset", type=Path, required=True)
    s.add_argument("--ckpt", action="append", metavar="NAME[@TASK]=PATH")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("fit-direction", parents=[common], help="fit the interval direction")
    s.add_argument("--dataset", type=Path, required=True)
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--split", default="val", choices=("train", "val", "test"))
    s.add_argument("--svm-c", type=float, default=latent.DEFAULT_SVM_C)
    s.set_defaults(func=cmd_fit_direction)

    s = sub.add_parser("sweep", parents=[common], help="alpha sweep for one test condition")
    s.add_argument("--dataset", type=Path, required=True)
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--direction", type=Path, required=True)
    s.add_argument("--alphas", default="-10:10:21")
    s.add_argument("--condition", type=int, default=0, help="index into the test split")
    s.add_argument("--target-ratio", type=float, help="also calibrate alpha for this mass ratio")
    s.add_argument("--conditions", type=int, default=50, help="test conditions used to calibrate")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("report", parents=[common], help="render tables and figure grids")
    s.add_argument("--eval", type=Path, required=True)
    s.add_argument("--sweep", type=Path, action="append")
    s.add_argument("--dataset", type=Path)
    s.add_argument("--rows", type=int, default=20)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.seed < 0 or args.seed >= 2 ** 64:
        print(json.dumps({"command": args.command, "error": "CLIError",
                          "message": "--seed must be an unsigned 64-bit integer"}), file=sys.stderr)
        return 1
    try:
        result = args.func(args)
    except Exception as err:
        doc = {"command": args.command, "error": type(err).__name__, "message": str(err)}
        if args.verbose:
            doc["traceback"] = traceback.format_exc()
        print(json.dumps(doc, indent=2), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
