"""Command-line entry point: ``ndcscene {gen,train,eval,ablate,diagnose,pose}``.

Exit codes: 0 success, 2 invalid configuration, 1 any other failure.
Verbosity follows the ``NDC_LOG`` environment variable (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .data.manifest import MANIFEST_NAME, ManifestError, generate_dataset, load_samples, read_manifest, split
from .evaluation import evaluate, imbalance_report, majority_baseline, pose_robustness_experiment, write_pose_csv
from .model import VARIANTS, ConfigError, SscNet
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.training import train
from .runconfig import RunConfig

log = logging.getLogger("ndcscene")

ABLATION_HEADER = ("variant", "seed", "iou", "miou", "train_seconds", "steps")
SUMMARY_HEADER = ("variant", "n_seeds", "iou_mean", "iou_ci95", "miou_mean", "miou_ci95")


# shared helpers ----------------------------------------------------------------


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = d["model"]["seed"] = d["train"]["seed"] = args.seed
    if args.out is not None:
        d["out"] = args.out
    if getattr(args, "variant", None):
        d["model"]["variant"] = args.variant
    return RunConfig.from_dict(d)


def _datasets(cfg: RunConfig):
    d = cfg.data_dir()
    manifest = d / MANIFEST_NAME
    if not manifest.exists():
        raise ManifestError(f"no dataset at {d}; run `ndcscene gen` with this config first")
    entries = read_manifest(manifest)
    train_e, eval_e = split(entries, cfg.data.train_fraction, cfg.seed)
    return load_samples(d, train_e), load_samples(d, eval_e)


def _variant_config(cfg: RunConfig, variant: str, seed: int | None = None) -> RunConfig:
    d = cfg.to_dict()
    d["model"]["variant"] = variant
    if seed is not None:
        d["model"]["seed"] = d["train"]["seed"] = seed
    return RunConfig.from_dict(d)


def _train_dir(cfg: RunConfig) -> Path:
    return cfg.out_dir() / "train" / cfg.model.variant


def _checkpoint_path(cfg: RunConfig, args) -> Path:
    return Path(args.checkpoint) if getattr(args, "checkpoint", None) else _train_dir(cfg) / "checkpoint.ndcs"


def _fit(cfg: RunConfig, train_set, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "loss.csv"
    if log_path.exists():
        log_path.unlink()
    model = SscNet(cfg.model)
    every = max(cfg.train.steps // 20, 1)
    result = train(
        model,
        train_set,
        cfg.target(),
        cfg.ndc(),
        cfg.train,
        log_path=log_path,
        on_step=lambda s, loss: log.info("step %d loss %.4f", s, loss) if s % every == 0 else None,
    )
    meta = {"steps": len(result.losses), "final_loss": result.losses[-1] if result.losses else None, "seed": cfg.train.seed}
    save_checkpoint(out_dir / "checkpoint.ndcs", model, meta)
    return model, result


def _load_model(cfg: RunConfig, path: Path) -> SscNet:
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found; run `ndcscene train` first or pass --checkpoint")
    model, _ = load_checkpoint(path)
    if model.cfg.to_dict() | {"seed": 0} != cfg.model.to_dict() | {"seed": 0}:
        log.warning("checkpoint model config differs from the run config; using the checkpoint's")
    return model


def _ci95(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float("nan")
    return float(1.96 * v.std(ddof=1) / math.sqrt(v.size))


# commands ----------------------------------------------------------------------


def cmd_gen(cfg: RunConfig, args) -> int:
    d = cfg.data_dir()
    entries = generate_dataset(cfg.scene_spec(), d, cfg.data.count, cfg.seed)
    train_e, eval_e = split(entries, cfg.data.train_fraction, cfg.seed)
    log.info("wrote %d scenes to %s (%d train / %d eval)", len(entries), d, len(train_e), len(eval_e))
    print(f"{d / MANIFEST_NAME}: {len(entries)} scenes, {len(train_e)} train / {len(eval_e)} eval")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    train_set, _ = _datasets(cfg)
    out = _train_dir(cfg)
    _, result = _fit(cfg, train_set, out)
    print(f"{out / 'checkpoint.ndcs'}: {len(result.losses)} steps in {result.seconds:.1f}s, final loss {result.losses[-1]:.4f}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    train_set, eval_set = _datasets(cfg)
    model = _load_model(cfg, _checkpoint_path(cfg, args))
    rep = evaluate(model, eval_set, cfg.target(), cfg.ndc())
    base = majority_baseline([s.grid for s in train_set], [s.grid for s in eval_set])
    out = cfg.out_dir() / "eval"
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(rep.to_json())
    (out / "majority_baseline.json").write_text(base.to_json())
    print(f"{out / 'metrics.json'}: IoU {rep.iou_occupancy:.4f} mIoU {rep.miou:.4f} (majority mIoU {base.miou:.4f})")
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    train_set, eval_set = _datasets(cfg)
    variants = [args.variant] if args.variant else list(cfg.ablate.variants)
    out = cfg.out_dir() / "ablate"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant in variants:
        for seed in cfg.ablate.seeds:
            vcfg = _variant_config(cfg, variant, int(seed))
            model, result = _fit(vcfg, train_set, out / f"{variant}_seed{seed}")
            rep = evaluate(model, eval_set, cfg.target(), cfg.ndc())
            rows.append((variant, int(seed), rep.iou_occupancy, rep.miou, result.seconds, len(result.losses)))
            log.info("%s seed %d: IoU %.4f mIoU %.4f", variant, seed, rep.iou_occupancy, rep.miou)
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ABLATION_HEADER)
        w.writerows((v, s, repr(i), repr(m), f"{t:.3f}", n) for v, s, i, m, t, n in rows)
    summary = []
    for variant in variants:
        mine = [r for r in rows if r[0] == variant]
        ious, mious = [r[2] for r in mine], [r[3] for r in mine]
        summary.append((variant, len(mine), float(np.mean(ious)), _ci95(ious), float(np.mean(mious)), _ci95(mious)))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        w.writerows(summary)
    for row in summary:
        print("{:8s} n={} IoU {:.4f} ±{:.4f}  mIoU {:.4f} ±{:.4f}".format(*row))
    return 0


def cmd_diagnose(cfg: RunConfig, args) -> int:
    out = cfg.out_dir() / "diagnose"
    s = imbalance_report(cfg.target(), cfg.ndc(), cfg.camera_model(), out)
    for name in ("target", "camera", "ndc"):
        print(f"{name:7s} cv {s[name]['cv']:.4f} min {s[name]['min']} max {s[name]['max']}")
    return 0


def cmd_pose(cfg: RunConfig, args) -> int:
    _, eval_set = _datasets(cfg)
    model = _load_model(cfg, _checkpoint_path(cfg, args))
    thetas = cfg.pose.thetas
    if args.thetas:
        try:
            thetas = tuple(float(t) for t in args.thetas.split(","))
        except ValueError:
            raise ConfigError("--thetas", f"expected comma-separated degrees, got {args.thetas!r}") from None
        if any(t < 0 for t in thetas):
            raise ConfigError("--thetas", "angles must be non-negative")
    rows = pose_robustness_experiment(model, eval_set, cfg.target(), cfg.ndc(), thetas, cfg.seed, cfg.grids.vertical_axis)
    out = cfg.out_dir() / "pose"
    out.mkdir(parents=True, exist_ok=True)
    write_pose_csv(out / "pose.csv", rows)
    for r in rows:
        print(f"theta {r.theta_deg:5.1f}  IoU {r.iou:.4f}  mIoU {r.miou:.4f}")
    return 0


COMMANDS = {
    "gen": (cmd_gen, "generate a synthetic dataset and its manifest"),
    "train": (cmd_train, "train one variant and write a checkpoint and loss log"),
    "eval": (cmd_eval, "score a checkpoint on the evaluation split"),
    "ablate": (cmd_ablate, "train and score every variant over the configured seeds"),
    "diagnose": (cmd_diagnose, "write computation-balance histograms for the three grid spaces"),
    "pose": (cmd_pose, "score a checkpoint under random target-space rotations"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run config (defaults are used for missing keys)")
    common.add_argument("--seed", type=int, help="master seed; overrides the config")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads (1 = deterministic, the default)")
    common.add_argument("--out", metavar="DIR", help="output directory; overrides the config")
    common.add_argument("--print-config", action="store_true", help="print the resolved config and exit")

    parser = argparse.ArgumentParser(prog="ndcscene", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name in ("train", "eval", "ablate", "pose"):
            p.add_argument("--variant", choices=VARIANTS, help="model variant; overrides the config")
        if name in ("eval", "pose"):
            p.add_argument("--checkpoint", metavar="PATH", help="checkpoint file (default: the train output)")
        if name == "pose":
            p.add_argument("--thetas", metavar="LIST", help="comma-separated maximum angles in degrees, e.g. 5,10,15")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("NDC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        sys.stdout.write(cfg.to_yaml())
        return 0
    if args.threads < 1:
        print("config error: --threads: must be >= 1", file=sys.stderr)
        return 2
    fn, _ = COMMANDS[args.command]
    try:
        with threadpool_limits(args.threads):
            return fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
