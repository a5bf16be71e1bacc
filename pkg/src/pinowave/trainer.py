"""Dataset splitting, the AdamW training loop and model checkpoints."""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import io
from .errors import InvalidArgument, NonFiniteLoss, VersionMismatch
from .physloss import LossWeights, loss_terms
from .pino import ArchConfig, OperatorModel
from .wavecore import Grid

log = logging.getLogger(__name__)

LOSS_KEYS = ("sensor", "phy1", "phy2", "reg", "n_norm", "total")


# --- splitting ---------------------------------------------------------------

def split_counts(n: int, ratios=(0.6, 0.2, 0.2)) -> tuple[int, int, int]:
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def split_dataset(manifest, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> tuple[list[str], list[str], list[str]]:
    """Seeded shuffle of the successful sample ids into train/val/test lists.

    ``manifest`` is a manifest dict or a sequence of sample ids.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not np.isclose(sum(ratios), 1.0):
        raise InvalidArgument(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    if isinstance(manifest, dict):
        ids = [s["id"] for s in manifest["samples"] if s.get("status", "ok") == "ok"]
    else:
        ids = list(manifest)
    if not ids:
        raise InvalidArgument("cannot split an empty dataset")
    ids = sorted(ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train, n_val, _ = split_counts(len(ids), ratios)
    shuffled = [ids[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def assign_splits(writer: io.DatasetWriter, splits: tuple[Sequence[str], Sequence[str], Sequence[str]]) -> dict:
    """Persist split membership in a dataset manifest."""
    for name, ids in zip(("train", "val", "test"), splits):
        for sample_id in ids:
            writer.update_sample(sample_id, split=name)
    return writer.flush()


# --- training data -------------------------------------------------------------

@dataclass
class TrainItem:
    sample_id: str
    measurement: np.ndarray
    eta_cal: np.ndarray
    columns: np.ndarray
    lp: float = float("nan")
    eps: float = float("nan")


def items_from_samples(samples, ids=None) -> list[TrainItem]:
    """Wrap :class:`~pinowave.sensors.SensorSample` objects for training."""
    out = []
    for i, s in enumerate(samples):
        prov = s.provenance or {}
        out.append(TrainItem(ids[i] if ids else prov.get("id", str(i)), np.asarray(s.measurement),
                             np.asarray(s.eta_cal), np.asarray(s.columns), prov.get("lp", float("nan")),
                             prov.get("eps", float("nan"))))
    return out


def load_items(reader: io.DatasetReader, split: str | None = None) -> list[TrainItem]:
    """Training items from a sensor dataset written by :func:`pinowave.cli` ``sense``."""
    items = []
    for rec in reader.samples(split=split):
        items.append(TrainItem(rec["id"], reader.read_array(rec["id"], "measurement"),
                               reader.read_array(rec["id"], "eta_cal"), np.asarray(rec["columns"]),
                               rec.get("lp", float("nan")), rec.get("eps", float("nan"))))
    return items


# --- configuration and records ---------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-3
    halve_every: int = 25
    batch_size: int = 8
    patience: int = 50
    max_epochs: int = 300
    weight_decay: float = 1e-4
    seed: int = 0
    micro_batch: int | None = None  # gradient accumulation chunk
    deterministic: bool = False

    def __post_init__(self):
        for name in ("lr0", "halve_every", "batch_size", "patience", "max_epochs"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.weight_decay < 0:
            raise InvalidArgument("weight_decay must be non-negative")
        if self.patience > self.max_epochs:
            raise InvalidArgument("patience cannot exceed max_epochs")
        if self.micro_batch is not None and self.micro_batch < 1:
            raise InvalidArgument("micro_batch must be positive")


def learning_rate(epoch: int, cfg: TrainConfig) -> float:
    """Step schedule for 1-based ``epoch``: halved after every ``halve_every`` epochs."""
    return cfg.lr0 * 0.5 ** ((epoch - 1) // cfg.halve_every)


@dataclass
class RunRecord:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")
    stopped_early: bool = False
    config: dict = field(default_factory=dict)
    seconds: list[float] = field(default_factory=list)  # wall clock per epoch, not part of equality

    def as_lines(self, timings: bool = True) -> list[dict]:
        lines = []
        for i, ep in enumerate(self.epochs):
            line = dict(ep)
            if timings and i < len(self.seconds):
                line["seconds"] = self.seconds[i]
            lines.append(line)
        lines.append({"summary": True, "best_epoch": self.best_epoch, "best_val": self.best_val,
                      "stopped_early": self.stopped_early, "config": self.config})
        return lines

    def write_jsonl(self, path, timings: bool = True) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            for line in self.as_lines(timings):
                fh.write(json.dumps(line, sort_keys=True) + "\n")
        return path

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunRecord):
            return NotImplemented
        return self.as_lines(timings=False) == other.as_lines(timings=False)


def deterministic_mode(threads: int = 1):
    """Single-threaded, deterministic kernels for reproducible runs."""
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)


# --- loop ---------------------------------------------------------------------

LossFn = Callable[[torch.nn.Module, list], tuple[torch.Tensor, dict]]


def physics_loss_fn(grid: Grid, weights: LossWeights = LossWeights()) -> LossFn:
    """Mean physics-informed loss over a list of :class:`TrainItem`."""

    def fn(model: OperatorModel, batch: list[TrainItem]):
        m = torch.as_tensor(np.stack([it.measurement for it in batch]), dtype=model.dtype)
        eta = model(m)
        cols = [tuple(np.asarray(it.columns).reshape(-1)) for it in batch]
        if all(c == cols[0] for c in cols):
            cal = np.stack([np.atleast_2d(it.eta_cal) for it in batch])
            terms = loss_terms(eta, cal, cols[0], grid, weights)
        else:
            per = [loss_terms(eta[i], it.eta_cal, it.columns, grid, weights) for i, it in enumerate(batch)]
            terms = {k: torch.stack([p[k] for p in per]) for k in per[0]}
        parts = {k: v.detach().double().reshape(-1) for k, v in terms.items()}
        return terms["total"].mean(), parts

    return fn


def _evaluate(model, items, loss_fn, batch_size) -> dict:
    if not items:
        return {}
    sums: dict[str, float] = {}
    with torch.no_grad():
        for start in range(0, len(items), batch_size):
            _, parts = loss_fn(model, items[start:start + batch_size])
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + float(v.sum())
    return {k: v / len(items) for k, v in sums.items()}


def train(model: torch.nn.Module, train_set: list, val_set: list, cfg: TrainConfig, grid: Grid | None = None,
          weights: LossWeights = LossWeights(), loss_fn: LossFn | None = None,
          log_path=None) -> tuple[torch.nn.Module, RunRecord]:
    """AdamW with a halving step schedule, early stopping and best-weight reload.

    ``loss_fn(model, batch) -> (mean_total, parts)`` defaults to the
    physics-informed loss on :class:`TrainItem` batches (needs ``grid``).
    Validation uses the same function without gradients; with an empty
    ``val_set`` the training loss selects the best epoch.
    """
    if loss_fn is None:
        if grid is None:
            raise InvalidArgument("the default physics loss needs a grid")
        if train_set and isinstance(train_set[0], TrainItem):
            want = model.cfg.input_shape
            bad = [it.sample_id for it in list(train_set) + list(val_set) if it.measurement.shape != want]
            if bad:
                raise InvalidArgument(f"{len(bad)} samples do not match the {model.cfg.case} input shape {want}")
        loss_fn = physics_loss_fn(grid, weights)
    if not train_set:
        raise InvalidArgument("empty training set")
    if cfg.deterministic:
        deterministic_mode()

    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr0, weight_decay=cfg.weight_decay)
    record = RunRecord(config=asdict(cfg))
    best_state = copy.deepcopy(model.state_dict())
    rng = np.random.default_rng(cfg.seed)
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            start = time.perf_counter()
            lr = learning_rate(epoch, cfg)
            for group in opt.param_groups:
                group["lr"] = lr
            model.train()
            order = rng.permutation(len(train_set))
            sums: dict[str, float] = {}
            for b0 in range(0, len(order), cfg.batch_size):
                batch = [train_set[i] for i in order[b0:b0 + cfg.batch_size]]
                opt.zero_grad(set_to_none=False)
                chunk = cfg.micro_batch or len(batch)
                for c0 in range(0, len(batch), chunk):
                    part = batch[c0:c0 + chunk]
                    loss, parts = loss_fn(model, part)
                    if not torch.isfinite(loss):
                        snapshot = {"epoch": epoch, "lr": lr, "batch": [getattr(it, "sample_id", None) for it in part],
                                    "parts": {k: v.tolist() for k, v in parts.items()}}
                        raise NonFiniteLoss(f"non-finite loss at epoch {epoch}", snapshot)
                    (loss * (len(part) / len(batch))).backward()
                    for k, v in parts.items():
                        sums[k] = sums.get(k, 0.0) + float(v.sum())
                opt.step()
            model.eval()
            train_means = {k: v / len(train_set) for k, v in sums.items()}
            val_means = _evaluate(model, val_set, loss_fn, cfg.batch_size)
            score = val_means.get("total", train_means["total"])
            entry = {"epoch": epoch, "lr": lr, "train": train_means, "val": val_means}
            record.epochs.append(entry)
            record.seconds.append(time.perf_counter() - start)
            if score < record.best_val:
                record.best_val = score
                record.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
            if log_fh:
                line = dict(entry)
                if not cfg.deterministic:
                    line["seconds"] = record.seconds[-1]
                log_fh.write(json.dumps(line, sort_keys=True) + "\n")
                log_fh.flush()
            log.info("epoch %d lr %.3g train %.4g val %.4g", epoch, lr, train_means["total"], score)
            if epoch - record.best_epoch >= cfg.patience:
                record.stopped_early = True
                break
    finally:
        if log_fh:
            log_fh.close()
    model.load_state_dict(best_state)
    return model, record


# --- checkpoints -----------------------------------------------------------------

CHECKPOINT_KIND = "pinowave-operator"


def save_checkpoint(model: OperatorModel, record: RunRecord | None, path) -> Path:
    header = {
        "kind": CHECKPOINT_KIND,
        "arch": model.cfg.to_dict(),
        "dtype": str(model.dtype).replace("torch.", ""),
        "best_epoch": record.best_epoch if record else None,
        "best_val": record.best_val if record else None,
        "train_config": record.config if record else None,
    }
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    io.write_checkpoint(path, header, tensors)
    return Path(path)


def load_checkpoint(path) -> tuple[OperatorModel, dict]:
    header, tensors = io.read_checkpoint(path)
    if header.get("kind") != CHECKPOINT_KIND:
        raise VersionMismatch(f"checkpoint kind {header.get('kind')!r} is not {CHECKPOINT_KIND!r}")
    cfg = ArchConfig(**header["arch"])
    dtype = getattr(torch, header["dtype"])
    model = OperatorModel(cfg, dtype)
    state = {k: torch.from_numpy(v) for k, v in tensors.items()}
    model.load_state_dict(state)
    return model, header
