"""Training loop: Adam with cosine decay, gradients accumulated over scenes."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..autodiff import scale
from ..autodiff.optim import Adam
from ..data.manifest import Sample
from ..geometry import NdcGridSpec, TargetGridSpec
from .config import ConfigError
from .loss import class_weights, ssc_loss
from .network import SscNet

LOSS_LOG_HEADER = ("step", "loss", "lr", "seconds")


class NonFiniteLossError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 600
    batch_size: int = 2  # scenes whose gradients are summed per step
    lr: float = 1e-3
    min_lr_frac: float = 0.05
    warmup: int = 10
    weight_decay: float = 0.0
    class_weighting: bool = True
    time_budget: float | None = None  # seconds; stops early when exceeded
    seed: int = 0

    def validate(self, path: str = "train") -> None:
        if self.steps < 0:
            raise ConfigError(f"{path}.steps", "must be >= 0")
        if self.batch_size < 1:
            raise ConfigError(f"{path}.batch_size", "must be >= 1")
        if self.lr < 0:
            raise ConfigError(f"{path}.lr", "must be >= 0")
        if not 0.0 <= self.min_lr_frac <= 1.0:
            raise ConfigError(f"{path}.min_lr_frac", "must be in [0, 1]")
        if self.warmup < 0:
            raise ConfigError(f"{path}.warmup", "must be >= 0")

    @classmethod
    def from_dict(cls, d: dict, path: str = "train") -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(f"{path}.{k}", "unknown field")
        cfg = cls(**d)
        cfg.validate(path)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup then cosine decay from ``lr`` to ``min_lr_frac * lr``."""
    if cfg.warmup and step < cfg.warmup:
        return cfg.lr * (step + 1) / cfg.warmup
    span = max(cfg.steps - cfg.warmup, 1)
    frac = min(max(step - cfg.warmup, 0) / span, 1.0)
    lo = cfg.min_lr_frac * cfg.lr
    return lo + 0.5 * (cfg.lr - lo) * (1.0 + math.cos(math.pi * frac))


def train_step(model: SscNet, opt: Adam, batch: list[Sample], target: TargetGridSpec, ndc: NdcGridSpec, weights=None) -> float:
    """One optimizer step on the mean loss over ``batch``; returns that mean."""
    opt.zero_grad()
    total = 0.0
    for i, s in enumerate(batch):
        pred = model(s.image, s.camera, target, ndc)
        loss = ssc_loss(pred.logits, s.grid, weights)
        value = float(loss.item())
        if not math.isfinite(value):
            raise NonFiniteLossError(f"loss is {value} on batch element {i}; logits range [{np.min(pred.logits.data)}, {np.max(pred.logits.data)}]")
        scale(loss, 1.0 / len(batch)).backward()
        total += value
    bad = [name for name, p in model.named_parameters() if p.grad is not None and not np.all(np.isfinite(p.grad))]
    if bad:
        raise NonFiniteLossError(f"non-finite gradients in {bad[:5]}")
    opt.step()
    return total / len(batch)


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    seconds: float = 0.0
    stopped_early: bool = False


def _batches(n: int, size: int, rng):
    while True:
        order = rng.permutation(n)
        for i in range(0, n - size + 1, size):
            yield order[i : i + size]
        if n < size:
            yield order


def train(
    model: SscNet,
    samples: list[Sample],
    target: TargetGridSpec,
    ndc: NdcGridSpec,
    cfg: TrainConfig,
    log_path=None,
    on_step=None,
) -> TrainResult:
    """Run ``cfg.steps`` steps; appends ``step,loss,lr,seconds`` rows to ``log_path``."""
    cfg.validate()
    if not samples:
        raise ValueError("no training samples")
    rng = np.random.default_rng(cfg.seed)
    weights = class_weights([s.grid for s in samples], model.cfg.num_classes) if cfg.class_weighting else None
    opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    result = TrainResult()
    writer = fh = None
    if log_path is not None:
        log_path = Path(log_path)
        fresh = not log_path.exists() or log_path.stat().st_size == 0
        fh = open(log_path, "a", newline="")
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(LOSS_LOG_HEADER)
    start = time.perf_counter()
    batches = _batches(len(samples), cfg.batch_size, rng)
    try:
        for step in range(cfg.steps):
            opt.lr = lr_at(step, cfg)
            loss = train_step(model, opt, [samples[i] for i in next(batches)], target, ndc, weights)
            elapsed = time.perf_counter() - start
            result.losses.append(loss)
            result.lrs.append(opt.lr)
            if writer is not None:
                writer.writerow((step, f"{loss:.6f}", f"{opt.lr:.6g}", f"{elapsed:.3f}"))
            if on_step is not None:
                on_step(step, loss)
            if cfg.time_budget is not None and elapsed > cfg.time_budget:
                result.stopped_early = step + 1 < cfg.steps
                break
    finally:
        if fh is not None:
            fh.close()
    result.seconds = time.perf_counter() - start
    return result


def smoothed(losses, window: int = 50) -> np.ndarray:
    """Means over consecutive non-overlapping windows."""
    n = len(losses) // window
    return np.asarray(losses[: n * window], dtype=np.float64).reshape(n, window).mean(axis=1)
