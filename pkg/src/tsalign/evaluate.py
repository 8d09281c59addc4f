"""Test-split evaluation (batch size 1), the persistence baseline,
zero-shot transfer, and efficiency measurement."""

from __future__ import annotations

import resource
import time
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig, config_hash
from .data import TimeSeriesWindow, revin_denormalize
from .model import Forecaster
from .train import DataBundle, load_bundle, load_split_embeddings


@dataclass
class ForecastReport:
    dataset: str
    split: str
    n_windows: int
    mse: float
    mae: float
    baseline_mse: float
    baseline_mae: float
    seconds_per_window: float
    param_count: int
    peak_rss_mib: float
    dataset_scaled: bool
    config_digest: str
    predictions: list[np.ndarray] | None = field(default=None, repr=False)

    def metric_rows(self) -> list[tuple[str, str]]:
        """Stable (name, value) pairs; timing fields are excluded from
        byte-reproducibility guarantees."""
        return [
            ("dataset", self.dataset),
            ("split", self.split),
            ("n_windows", str(self.n_windows)),
            ("mse", f"{self.mse:.6f}"),
            ("mae", f"{self.mae:.6f}"),
            ("baseline_mse", f"{self.baseline_mse:.6f}"),
            ("baseline_mae", f"{self.baseline_mae:.6f}"),
            ("param_count", str(self.param_count)),
            ("dataset_scaled", str(self.dataset_scaled).lower()),
            ("config_hash", self.config_digest),
        ]


def persistence_forecast(window: TimeSeriesWindow) -> np.ndarray:
    """Repeat the last observed row across the horizon."""
    return np.tile(window.lookback[-1], (window.horizon, 1))


def peak_rss_mib() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def model_forecast_fn(model: Forecaster):
    """Standard forecast path: normalized forward pass, then the window's
    own statistics undo the instance normalization."""

    def forecast(window: TimeSeriesWindow, prompt):
        pred_norm = model.forward_normalized(window.normalized_lookback(),
                                             prompt)
        return revin_denormalize(pred_norm.data.astype(np.float64),
                                 window.stats)

    return forecast


def evaluate_windows(forecast_fn, windows: list[TimeSeriesWindow],
                     embeds: np.ndarray | None,
                     collect_predictions: bool = False):
    """Sequential batch-1 pass; errors accumulate on denormalized values."""
    sq_sum = 0.0
    abs_sum = 0.0
    base_sq = 0.0
    base_abs = 0.0
    count = 0
    elapsed = 0.0
    predictions = [] if collect_predictions else None
    for i, w in enumerate(windows):
        prompt = embeds[i] if embeds is not None else None
        tic = time.perf_counter()
        pred = forecast_fn(w, prompt)
        elapsed += time.perf_counter() - tic
        err = pred - w.target
        sq_sum += float((err * err).sum())
        abs_sum += float(np.abs(err).sum())
        naive = persistence_forecast(w) - w.target
        base_sq += float((naive * naive).sum())
        base_abs += float(np.abs(naive).sum())
        count += err.size
        if collect_predictions:
            predictions.append(pred)
    if count == 0:
        raise ValueError("no windows to evaluate")
    return {
        "mse": sq_sum / count,
        "mae": abs_sum / count,
        "baseline_mse": base_sq / count,
        "baseline_mae": base_abs / count,
        "seconds_per_window": elapsed / len(windows),
        "predictions": predictions,
    }


def evaluate(cfg: ExperimentConfig, model: Forecaster,
             bundle: DataBundle | None = None, split: str = "test",
             collect_predictions: bool = False) -> ForecastReport:
    bundle = bundle or load_bundle(cfg)
    windows = bundle.windows[split]
    embeds = (load_split_embeddings(cfg, bundle, split)
              if cfg.use_prompt_branch else None)
    stats = evaluate_windows(model_forecast_fn(model), windows, embeds,
                             collect_predictions)
    return ForecastReport(
        dataset=cfg.dataset_name,
        split=split,
        n_windows=len(windows),
        mse=stats["mse"],
        mae=stats["mae"],
        baseline_mse=stats["baseline_mse"],
        baseline_mae=stats["baseline_mae"],
        seconds_per_window=stats["seconds_per_window"],
        param_count=model.count_params(),
        peak_rss_mib=peak_rss_mib(),
        dataset_scaled=cfg.scale,
        config_digest=config_hash(cfg),
        predictions=stats["predictions"],
    )


def zeroshot(model: Forecaster, target_cfg: ExperimentConfig,
             collect_predictions: bool = False) -> ForecastReport:
    """Evaluate a trained model on another dataset, no parameter updates.

    The target must match the source's lookback, horizon, and both
    hidden widths; the variable count is free because every per-variable
    map is shared.
    """
    cfg = model.cfg
    if target_cfg.lookback != cfg.lookback:
        raise ValueError(f"lookback mismatch: source {cfg.lookback}, "
                         f"target {target_cfg.lookback}; remap explicitly")
    if target_cfg.horizon != cfg.horizon:
        raise ValueError(f"horizon mismatch: source {cfg.horizon}, "
                         f"target {target_cfg.horizon}; remap explicitly")
    if target_cfg.ts_dim != cfg.ts_dim or target_cfg.embed_dim != cfg.embed_dim:
        raise ValueError("hidden dims of target config do not match checkpoint")
    if target_cfg.use_prompt_branch != cfg.use_prompt_branch:
        raise ValueError("prompt-branch setting must match the checkpoint")
    before = model.params.state_arrays()
    report = evaluate(target_cfg, model, collect_predictions=collect_predictions)
    after = model.params.state_arrays()
    for name in before:
        if not np.array_equal(before[name], after[name]):
            raise AssertionError(f"zero-shot must not update parameters: {name}")
    return report


@dataclass
class BenchRow:
    dataset: str
    param_count: int
    seconds_per_iter: float
    iterations: int
    peak_rss_mib: float

    def rows(self) -> list[tuple[str, str]]:
        return [
            ("dataset", self.dataset),
            ("param_count", str(self.param_count)),
            ("seconds_per_iter", f"{self.seconds_per_iter:.6f}"),
            ("iterations", str(self.iterations)),
            ("peak_rss_mib", f"{self.peak_rss_mib:.1f}"),
        ]


def benchmark(cfg: ExperimentConfig, model: Forecaster,
              bundle: DataBundle | None = None,
              min_iters: int = 100) -> BenchRow:
    """Mean inference seconds per window over at least ``min_iters`` passes.

    Store reads are excluded: embeddings are preloaded, matching how the
    training loop consumes them.
    """
    bundle = bundle or load_bundle(cfg)
    windows = bundle.windows["test"] or bundle.windows["train"]
    embeds = (load_split_embeddings(
        cfg, bundle, "test" if bundle.windows["test"] else "train")
        if cfg.use_prompt_branch else None)
    iters = max(min_iters, len(windows))
    tic = time.perf_counter()
    for i in range(iters):
        idx = i % len(windows)
        w = windows[idx]
        prompt = embeds[idx] if embeds is not None else None
        model.forward_normalized(w.normalized_lookback(), prompt)
    elapsed = time.perf_counter() - tic
    return BenchRow(
        dataset=cfg.dataset_name,
        param_count=model.count_params(),
        seconds_per_iter=elapsed / iters,
        iterations=iters,
        peak_rss_mib=peak_rss_mib(),
    )
