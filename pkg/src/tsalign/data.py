"""Dataset loading, chronological splitting, windowing, and reversible
per-window normalization.

The protocol follows the long-horizon benchmark convention: the raw
series is optionally standardized with train-split statistics, splits
are contiguous row ranges, a window belongs to the split that contains
its entire target, and lookbacks may reach back across the boundary
into earlier rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

REVIN_EPS = 1e-5

FREQUENCY_ALIASES = {
    "10min": "10min",
    "15min": "15min",
    "1h": "1h",
    "1hour": "1h",
    "1w": "1w",
    "1week": "1w",
    "1m": "1m",
    "1month": "1m",
}

_FIXED_DELTAS = {
    "10min": timedelta(minutes=10),
    "15min": timedelta(minutes=15),
    "1h": timedelta(hours=1),
    "1w": timedelta(days=7),
}

_MISSING_TOKENS = {"", "na", "nan", "n/a", "null"}


class DataError(ValueError):
    """Problem in a dataset file or in split/window arithmetic."""


def canonical_frequency(freq: str) -> str:
    try:
        return FREQUENCY_ALIASES[freq.strip().lower()]
    except KeyError:
        raise DataError(f"unknown frequency {freq!r}; expected one of "
                        f"{sorted(set(FREQUENCY_ALIASES))}") from None


def parse_split_ratio(text: str | tuple) -> tuple[int, int, int]:
    if isinstance(text, tuple):
        parts = tuple(int(p) for p in text)
    else:
        parts = tuple(int(p) for p in str(text).split(":"))
    if len(parts) != 3 or any(p <= 0 for p in parts):
        raise DataError(f"split ratio must be three positive parts, got {text!r}")
    if sum(parts) != 10:
        raise DataError(f"split ratio parts must sum to 10, got {parts}")
    return parts


@dataclass
class SeriesDataset:
    """An L x N numeric matrix with uniform timestamps."""

    name: str
    values: np.ndarray
    timestamps: list[str]
    columns: list[str]
    frequency: str
    split_ratio: tuple[int, int, int]

    def __post_init__(self):
        self.frequency = canonical_frequency(self.frequency)
        self.split_ratio = parse_split_ratio(self.split_ratio)
        if self.values.ndim != 2:
            raise DataError("values must be a 2-D matrix")
        if len(self.timestamps) != self.values.shape[0]:
            raise DataError("timestamp count does not match row count")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]


def _parse_timestamp(text: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"row {row}: unparseable timestamp {text!r}") from None


def _validate_uniform(stamps: list[datetime], frequency: str) -> None:
    if frequency in _FIXED_DELTAS:
        delta = _FIXED_DELTAS[frequency]
        for i in range(1, len(stamps)):
            if stamps[i] - stamps[i - 1] != delta:
                raise DataError(
                    f"row {i}: timestamp step {stamps[i] - stamps[i - 1]} "
                    f"does not match frequency {frequency}")
    else:  # monthly: +1 calendar month, same day of month
        for i in range(1, len(stamps)):
            prev, cur = stamps[i - 1], stamps[i]
            if (cur.year * 12 + cur.month) - (prev.year * 12 + prev.month) != 1 \
                    or cur.day != prev.day:
                raise DataError(f"row {i}: timestamps are not uniform monthly steps")


def load_csv(path: str, name: str, frequency: str,
             split_ratio: str | tuple = "7:1:2",
             drop_missing: bool = False) -> SeriesDataset:
    """Load a `date` + variables CSV into a SeriesDataset.

    With ``drop_missing``, any column containing a missing cell is
    removed; otherwise missing cells are load errors. Unparseable cells
    always are, with their row and column in the message.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "date":
            raise DataError(f"{path}: first column must be 'date', got {header[:1]}")
        columns = [c.strip() for c in header[1:]]
        if not columns:
            raise DataError(f"{path}: no variable columns")

        stamps: list[datetime] = []
        raw_stamps: list[str] = []
        rows: list[np.ndarray] = []
        missing_cols: set[int] = set()
        for row_idx, row in enumerate(reader):
            if len(row) != len(columns) + 1:
                raise DataError(f"row {row_idx}: expected {len(columns) + 1} cells, "
                                f"got {len(row)}")
            stamps.append(_parse_timestamp(row[0], row_idx))
            raw_stamps.append(row[0].strip())
            values = np.empty(len(columns), dtype=np.float64)
            for col_idx, cell in enumerate(row[1:]):
                cell = cell.strip()
                if cell.lower() in _MISSING_TOKENS:
                    if not drop_missing:
                        raise DataError(f"row {row_idx}, column {columns[col_idx]!r}: "
                                        f"missing value")
                    missing_cols.add(col_idx)
                    values[col_idx] = np.nan
                    continue
                try:
                    values[col_idx] = float(cell)
                except ValueError:
                    raise DataError(f"row {row_idx}, column {columns[col_idx]!r}: "
                                    f"unparseable cell {cell!r}") from None
            rows.append(values)

    if not rows:
        raise DataError(f"{path}: no data rows")
    matrix = np.vstack(rows)
    if missing_cols:
        keep = [i for i in range(len(columns)) if i not in missing_cols]
        matrix = matrix[:, keep]
        columns = [columns[i] for i in keep]
        if not columns:
            raise DataError(f"{path}: every column has missing values")

    for i in range(1, len(stamps)):
        if stamps[i] <= stamps[i - 1]:
            raise DataError(f"row {i}: timestamps not strictly increasing")
    freq = canonical_frequency(frequency)
    _validate_uniform(stamps, freq)

    return SeriesDataset(name=name, values=matrix, timestamps=raw_stamps,
                         columns=columns, frequency=freq,
                         split_ratio=parse_split_ratio(split_ratio))


def split_boundaries(length: int, ratio: tuple[int, int, int]) -> tuple[int, int]:
    """Row boundaries at floor(L * cumulative ratio / 10)."""
    b1 = (length * ratio[0]) // 10
    b2 = (length * (ratio[0] + ratio[1])) // 10
    return b1, b2


@dataclass(frozen=True)
class SplitRanges:
    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def named(self):
        return {"train": self.train, "val": self.val, "test": self.test}


def chronological_split(ds: SeriesDataset, lookback: int, horizon: int) -> SplitRanges:
    """Contiguous train/val/test row ranges.

    A series of exactly one window (L == T + M) becomes train in full;
    anything shorter is an error.
    """
    span = lookback + horizon
    if ds.length < span:
        raise DataError(f"series of length {ds.length} is shorter than one "
                        f"window (T+M = {span})")
    if ds.length == span:
        return SplitRanges((0, ds.length), (ds.length, ds.length),
                           (ds.length, ds.length))
    b1, b2 = split_boundaries(ds.length, ds.split_ratio)
    return SplitRanges((0, b1), (b1, b2), (b2, ds.length))


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


def compute_norm_stats(lookback: np.ndarray) -> NormStats:
    """Per-variable mean and eps-guarded population std of a lookback."""
    mean = lookback.mean(axis=0)
    var = lookback.var(axis=0)  # population variance
    std = np.sqrt(var + REVIN_EPS)
    return NormStats(mean=mean, std=std)


def revin_normalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return (values - stats.mean) / stats.std


def revin_denormalize(pred: np.ndarray, stats: NormStats) -> np.ndarray:
    return pred * stats.std + stats.mean


@dataclass
class TimeSeriesWindow:
    """One (lookback, horizon) slice with its normalization statistics."""

    window_id: int
    start: int
    lookback: np.ndarray
    target: np.ndarray
    stats: NormStats
    start_ts: str
    end_ts: str

    @property
    def lookback_len(self) -> int:
        return self.lookback.shape[0]

    @property
    def horizon(self) -> int:
        return self.target.shape[0]

    @property
    def n_variables(self) -> int:
        return self.lookback.shape[1]

    def normalized_lookback(self) -> np.ndarray:
        return revin_normalize(self.lookback, self.stats)

    def normalized_target(self) -> np.ndarray:
        return revin_normalize(self.target, self.stats)

    def rows(self) -> range:
        """Absolute dataset rows this window touches (lookback + target)."""
        return range(self.start, self.start + self.lookback_len + self.horizon)

    def target_rows(self) -> range:
        return range(self.start + self.lookback_len,
                     self.start + self.lookback_len + self.horizon)


def make_windows(ds: SeriesDataset, row_range: tuple[int, int], lookback: int,
                 horizon: int, stride: int = 1) -> list[TimeSeriesWindow]:
    """Enumerate windows fully inside ``row_range``; empty if it is too short."""
    if stride < 1:
        raise DataError("stride must be >= 1")
    lo, hi = row_range
    span = lookback + horizon
    windows = []
    wid = 0
    for start in range(lo, hi - span + 1, stride):
        look = ds.values[start:start + lookback]
        targ = ds.values[start + lookback:start + span]
        windows.append(TimeSeriesWindow(
            window_id=wid,
            start=start,
            lookback=look,
            target=targ,
            stats=compute_norm_stats(look),
            start_ts=ds.timestamps[start],
            end_ts=ds.timestamps[start + lookback - 1],
        ))
        wid += 1
    return windows


def windows_for_split(ds: SeriesDataset, ranges: SplitRanges, split: str,
                      lookback: int, horizon: int, stride: int = 1
                      ) -> list[TimeSeriesWindow]:
    """Windows whose targets lie inside the split's rows.

    Val and test lookbacks extend back into preceding rows, so the row
    range passed to enumeration starts ``lookback`` rows early.
    """
    lo, hi = ranges.named()[split]
    if hi <= lo:
        return []
    if split != "train":
        lo = lo - lookback
        if lo < 0:
            return []
    return make_windows(ds, (lo, hi), lookback, horizon, stride)


def standardize_by_train(ds: SeriesDataset) -> tuple[SeriesDataset, NormStats]:
    """Scale every variable by its train-range mean/std (benchmark protocol)."""
    b1, _ = split_boundaries(ds.length, ds.split_ratio)
    train_rows = ds.values[:b1] if b1 > 0 else ds.values
    mean = train_rows.mean(axis=0)
    std = train_rows.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    scaled = SeriesDataset(
        name=ds.name,
        values=(ds.values - mean) / std,
        timestamps=ds.timestamps,
        columns=ds.columns,
        frequency=ds.frequency,
        split_ratio=ds.split_ratio,
    )
    return scaled, NormStats(mean=mean, std=std)


def audit_no_leakage(splits: dict[str, list[TimeSeriesWindow]]) -> None:
    """Raise if a later split's target rows appear anywhere in an earlier one."""
    order = ["train", "val", "test"]
    covered: set[int] = set()
    for split in order:
        windows = splits.get(split, [])
        targets = set()
        for w in windows:
            targets.update(w.target_rows())
        overlap = targets & covered
        if overlap:
            raise DataError(f"{split} target rows leak into earlier splits: "
                            f"{sorted(overlap)[:5]}...")
        for w in windows:
            covered.update(w.rows())
