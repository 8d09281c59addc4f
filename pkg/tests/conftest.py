import numpy as np
import pytest

from tsalign.data import SeriesDataset, TimeSeriesWindow


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_window(values: np.ndarray, horizon: int = 2, window_id: int = 0,
                start_ts: str = "2002-01-07", end_ts: str = "2002-03-11"
                ) -> TimeSeriesWindow:
    """Wrap a raw (T+M) x N matrix into a window with computed stats."""
    from tsalign.data import compute_norm_stats

    values = np.asarray(values, dtype=np.float64)
    look = values[:-horizon] if horizon else values
    targ = values[-horizon:] if horizon else values[:0]
    return TimeSeriesWindow(
        window_id=window_id, start=0, lookback=look, target=targ,
        stats=compute_norm_stats(look), start_ts=start_ts, end_ts=end_ts)


def make_dataset(values: np.ndarray, frequency: str = "1w",
                 split_ratio: str = "7:1:2", name: str = "toy") -> SeriesDataset:
    from datetime import datetime, timedelta

    values = np.asarray(values, dtype=np.float64)
    length = values.shape[0]
    start = datetime(2002, 1, 7)
    step = {"1w": timedelta(days=7), "1h": timedelta(hours=1),
            "10min": timedelta(minutes=10), "15min": timedelta(minutes=15)}
    if frequency == "1m":
        stamps = [f"{2000 + i // 12:04d}-{1 + i % 12:02d}-01" for i in range(length)]
    else:
        fmt = "%Y-%m-%d" if frequency == "1w" else "%Y-%m-%d %H:%M:%S"
        stamps = [(start + i * step[frequency]).strftime(fmt) for i in range(length)]
    cols = [f"v{i}" for i in range(values.shape[1])]
    return SeriesDataset(name=name, values=values, timestamps=stamps,
                         columns=cols, frequency=frequency,
                         split_ratio=split_ratio)
