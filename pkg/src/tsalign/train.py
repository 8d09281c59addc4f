"""Training loop: batched window losses, AdamW, validation-based model
selection with patience, and reproducible logs."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .config import ExperimentConfig, config_hash
from .data import (SeriesDataset, TimeSeriesWindow, chronological_split,
                   load_csv, standardize_by_train, windows_for_split)
from .model import Forecaster, save_checkpoint
from .optim import AdamW
from .prompts import prompts_for_dataset, template_hash
from .store import (LastTokenStore, StoreError, store_filename, stub_embed_all,
                    write_store)
from .tensor import Tensor

SPLITS = ("train", "val", "test")


class TrainingDiverged(RuntimeError):
    """Loss went NaN/Inf; message carries the epoch and batch."""


@dataclass
class DataBundle:
    dataset: SeriesDataset
    windows: dict[str, list[TimeSeriesWindow]]

    @property
    def n_variables(self) -> int:
        return self.dataset.n_variables


def load_bundle(cfg: ExperimentConfig) -> DataBundle:
    ds = load_csv(cfg.dataset_csv, cfg.dataset_name, cfg.frequency,
                  cfg.split, drop_missing=cfg.drop_missing)
    if cfg.scale:
        ds, _ = standardize_by_train(ds)
    ranges = chronological_split(ds, cfg.lookback, cfg.horizon)
    windows = {s: windows_for_split(ds, ranges, s, cfg.lookback, cfg.horizon)
               for s in SPLITS}
    return DataBundle(dataset=ds, windows=windows)


def store_path(cfg: ExperimentConfig, split: str) -> Path:
    base = Path(cfg.store_dir) if cfg.store_dir else Path(cfg.out_dir) / "stores"
    return base / store_filename(cfg.dataset_name, split, cfg.lookback,
                                 cfg.prompt_design)


def build_stub_store(cfg: ExperimentConfig, bundle: DataBundle, split: str,
                     path: Path) -> None:
    windows = bundle.windows[split]
    records = prompts_for_dataset(bundle.dataset, windows, cfg.prompt_design)
    matrix = stub_embed_all(records, len(windows), bundle.n_variables,
                            cfg.embed_dim)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_store(str(path), matrix)


def load_split_embeddings(cfg: ExperimentConfig, bundle: DataBundle,
                          split: str) -> np.ndarray:
    """W x N x E matrix for a split; stub stores are built on demand,
    external stores must already exist."""
    path = store_path(cfg, split)
    if not path.exists():
        if cfg.embedder == "stub":
            build_stub_store(cfg, bundle, split, path)
        else:
            raise StoreError(f"missing embedding store {path}; run the "
                             f"extractor or switch embedder = stub")
    store = LastTokenStore(str(path))
    windows = bundle.windows[split]
    if store.num_windows != len(windows) or \
            store.num_variables != bundle.n_variables:
        raise StoreError(
            f"{path}: store dims ({store.num_windows} windows, "
            f"{store.num_variables} variables) do not match the {split} split "
            f"({len(windows)} windows, {bundle.n_variables} variables)")
    return store.matrix()


@dataclass
class TrainResult:
    log: list[dict]
    best_epoch: int
    best_val_loss: float
    checkpoint_path: str
    config_digest: str
    seconds: float


def _epoch_validation(model: Forecaster, windows, embeds) -> float:
    total = 0.0
    for i, w in enumerate(windows):
        pred = model.forward_normalized(w.normalized_lookback(), embeds[i])
        diff = pred.data - w.normalized_target().astype(np.float32)
        total += float((diff * diff).mean())
    return total / max(1, len(windows))


def train(cfg: ExperimentConfig, bundle: DataBundle | None = None,
          quiet: bool = False) -> TrainResult:
    started = time.time()
    bundle = bundle or load_bundle(cfg)
    if not bundle.windows["train"]:
        raise ValueError("train split has no windows; series too short for "
                         f"T={cfg.lookback}, M={cfg.horizon}")
    use_prompts = cfg.use_prompt_branch
    embeds = {}
    for split in ("train", "val"):
        embeds[split] = (load_split_embeddings(cfg, bundle, split)
                         if use_prompts else None)

    model = Forecaster(cfg.model_config(bundle.n_variables), cfg.seed)
    opt = AdamW(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)

    train_windows = bundle.windows["train"]
    val_windows = bundle.windows["val"]
    log: list[dict] = []
    best_val = float("inf")
    best_epoch = -1
    best_arrays = None
    since_best = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_windows))
        epoch_pre = 0.0
        for batch_start in range(0, len(order), cfg.batch_size):
            batch = order[batch_start:batch_start + cfg.batch_size]
            model.params.zero_grad()
            try:
                pre_sum = None
                for idx in batch:
                    w = train_windows[idx]
                    prompt = embeds["train"][idx] if use_prompts else None
                    pred = model.forward_normalized(w.normalized_lookback(),
                                                    prompt)
                    _, pre = model.loss(pred, w.normalized_target())
                    pre_sum = pre if pre_sum is None else pre_sum + pre
                scale = Tensor(np.float32(1.0 / len(batch)))
                task = scale * pre_sum + \
                    Tensor(np.float32(cfg.l2_weight)) * model.l2_penalty()
            except T.NonFiniteError as exc:
                raise TrainingDiverged(
                    f"non-finite forward value at epoch {epoch}, batch "
                    f"starting {batch_start}: {exc}") from exc
            value = task.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, "
                    f"batch starting {batch_start}: {value}")
            epoch_pre += pre_sum.item()
            T.backward(task)
            opt.step()

        train_loss = epoch_pre / len(train_windows)
        val_loss = (_epoch_validation(model, val_windows, embeds["val"]
                                      if use_prompts else
                                      [None] * len(val_windows))
                    if val_windows else train_loss)
        log.append({"epoch": epoch, "train_loss": train_loss,
                    "val_loss": val_loss})
        if not quiet:
            print(f"epoch {epoch:3d}  train {train_loss:.6f}  val {val_loss:.6f}")
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_arrays = model.params.state_arrays()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    digest = config_hash(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / f"{cfg.dataset_name}_T{cfg.lookback}_M{cfg.horizon}.ckpt"
    save_checkpoint(str(ckpt_path), model, arrays=best_arrays,
                    extra={"best_epoch": best_epoch, "best_val_loss": best_val,
                           "config_hash": digest,
                           "template_hash": template_hash()})
    log_path = out / "training_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for row in log:
            fh.write(json.dumps(row) + "\n")

    return TrainResult(log=log, best_epoch=best_epoch, best_val_loss=best_val,
                       checkpoint_path=str(ckpt_path), config_digest=digest,
                       seconds=time.time() - started)
