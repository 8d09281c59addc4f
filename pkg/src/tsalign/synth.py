"""Seeded generators for benchmark-shaped synthetic datasets.

Real benchmark files are not redistributable, so these produce series
with the same shapes, frequencies, and split ratios: seasonal structure
plus autoregressive noise and cross-variable coupling, learnable from a
short lookback but not trivially flat.
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta

import numpy as np

PROFILES = ("ili", "fredmd", "etth1", "etth2")


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    noise = rng.normal(0.0, sigma, size=n)
    out = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = phi * acc + noise[i]
        out[i] = acc
    return out


def _seasonal_panel(rng: np.random.Generator, length: int, n_vars: int,
                    periods: list[float], noise: float, trend: float) -> np.ndarray:
    """Shared seasonal factors mixed per-variable, plus AR(1) noise."""
    t = np.arange(length, dtype=np.float64)
    factors = []
    for p in periods:
        phase = rng.uniform(0, 2 * np.pi)
        factors.append(np.sin(2 * np.pi * t / p + phase))
        factors.append(np.cos(2 * np.pi * t / p + phase))
    factors = np.stack(factors, axis=1)
    loadings = rng.uniform(0.4, 1.6, size=(factors.shape[1], n_vars))
    signs = rng.choice([-1.0, 1.0], size=loadings.shape)
    panel = factors @ (loadings * signs)
    panel += trend * np.outer(t / length, rng.uniform(-1.0, 1.0, size=n_vars))
    for j in range(n_vars):
        panel[:, j] += _ar1(rng, length, phi=0.7, sigma=noise)
    return panel


def _stamps(start: datetime, count: int, step: timedelta, fmt: str) -> list[str]:
    return [(start + i * step).strftime(fmt) for i in range(count)]


def _monthly_stamps(start_year: int, count: int) -> list[str]:
    out = []
    for i in range(count):
        year = start_year + (i // 12)
        month = 1 + (i % 12)
        out.append(f"{year:04d}-{month:02d}-01")
    return out


def make_ili_like(seed: int = 0, length: int = 966):
    """Weekly, 7 variables, count-like magnitudes. Split 7:1:2."""
    rng = np.random.default_rng(seed)
    panel = _seasonal_panel(rng, length, 7, periods=[52.0, 26.0], noise=0.25,
                            trend=0.8)
    scales = np.array([1200.0, 900.0, 450.0, 300.0, 15000.0, 2500.0, 4.0])
    offsets = np.array([2500.0, 2000.0, 900.0, 700.0, 30000.0, 5200.0, 8.0])
    values = panel * scales + offsets
    stamps = _stamps(datetime(2002, 1, 7), length, timedelta(days=7), "%Y-%m-%d")
    columns = [f"region_{i}" for i in range(1, 6)] + ["providers", "rate"]
    return stamps, columns, values, "1w", "7:1:2"


def make_fredmd_like(seed: int = 0, length: int = 728, n_raw: int = 112,
                     n_missing: int = 5):
    """Monthly macro panel; ``n_missing`` columns carry missing cells so a
    drop-missing load keeps n_raw - n_missing variables."""
    rng = np.random.default_rng(seed)
    panel = _seasonal_panel(rng, length, n_raw, periods=[12.0, 60.0], noise=0.4,
                            trend=2.0)
    scales = rng.uniform(0.5, 200.0, size=n_raw)
    values = panel * scales + rng.uniform(-50.0, 400.0, size=n_raw)
    mask = np.zeros_like(values, dtype=bool)
    missing_cols = rng.choice(n_raw, size=n_missing, replace=False)
    for col in missing_cols:
        holes = rng.integers(1, 24)
        mask[:holes, col] = True  # leading gap, as in late-added indicators
    values = values.copy()
    values[mask] = np.nan
    stamps = _monthly_stamps(1960, length)
    columns = [f"series_{i:03d}" for i in range(n_raw)]
    return stamps, columns, values, "1m", "7:1:2"


def make_ett_like(seed: int = 0, length: int = 1200, variant: str = "etth1"):
    """Hourly, 7 variables, daily + weekly seasonality. Split 6:2:2."""
    rng = np.random.default_rng(seed)
    panel = _seasonal_panel(rng, length, 7, periods=[24.0, 168.0], noise=0.3,
                            trend=0.5)
    if variant == "etth2":
        scales = np.array([42.0, 12.0, 38.0, 10.0, 3.5, 1.2, 28.0])
        offsets = np.array([18.0, 6.0, 22.0, 4.0, 1.5, 0.8, 26.0])
    else:
        scales = np.array([6.0, 2.2, 5.5, 1.8, 3.0, 1.0, 14.0])
        offsets = np.array([8.0, 3.0, 7.0, 2.0, 4.0, 1.5, 17.0])
    values = panel * scales + offsets
    stamps = _stamps(datetime(2016, 7, 1), length, timedelta(hours=1),
                     "%Y-%m-%d %H:%M:%S")
    columns = ["hufl", "hull", "mufl", "mull", "lufl", "lull", "ot"]
    return stamps, columns, values, "1h", "6:2:2"


def generate(profile: str, seed: int = 0, length: int | None = None):
    if profile == "ili":
        return make_ili_like(seed, length or 966)
    if profile == "fredmd":
        return make_fredmd_like(seed, length or 728)
    if profile == "etth1":
        return make_ett_like(seed, length or 1200, "etth1")
    if profile == "etth2":
        return make_ett_like(seed, length or 1200, "etth2")
    raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")


def write_csv(path: str, stamps: list[str], columns: list[str],
              values: np.ndarray) -> None:
    """Write the `date` + variables layout; NaN cells become empty."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(columns))
        for ts, row in zip(stamps, values):
            cells = ["" if np.isnan(v) else f"{v:.6f}" for v in row]
            writer.writerow([ts] + cells)
