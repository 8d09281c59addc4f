"""Deterministic rendering of lookback windows into text prompts.

Five designs share one body (timestamps, sampling frequency, the value
list) and differ in their closing sentence. Designs P3, P4, and P5 end
on a bare numeral, which is what makes a causal model's last-token
state a useful window summary. Rendering is byte-stable: the store
cache is keyed on this text, so templates are versioned.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np

from .data import SeriesDataset, TimeSeriesWindow

DESIGNS = ("P1", "P2", "P3", "P4", "P5")
DEFAULT_DESIGN = "P5"
TEMPLATE_VERSION = "1"

_FREQ_PHRASE = {
    "10min": "10 minutes",
    "15min": "15 minutes",
    "1h": "hour",
    "1w": "week",
    "1m": "month",
}

_NUMERAL = re.compile(r"^-?\d+(\.\d+)?$")


@dataclass(frozen=True)
class ValueFormat:
    decimals: int = 2

    def render(self, value: float) -> str:
        text = f"{value:.{self.decimals}f}"
        # "-0.00" and "0.00" must be one byte pattern for cache stability.
        if text.startswith("-") and float(text) == 0.0:
            text = text[1:]
        return text


DEFAULT_FORMAT = ValueFormat()


@dataclass
class PromptRecord:
    window_id: int
    variable_id: int
    design: str
    text: str
    trend_value: float
    value_count: int
    mean: float
    std: float
    last: float


def trend(values) -> float:
    """Sum of consecutive differences; telescopes to last - first."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("trend needs at least two values")
    return float(np.diff(arr).sum())


def _body(window: TimeSeriesWindow, values: np.ndarray, frequency: str,
          fmt: ValueFormat) -> str:
    phrase = _FREQ_PHRASE[frequency]
    rendered = ", ".join(fmt.render(v) for v in values)
    return (f"From {window.start_ts} to {window.end_ts}, this variable was "
            f"sampled once every {phrase}, giving {len(values)} observations "
            f"in sequence. The recorded values were {rendered}.")


def render(window: TimeSeriesWindow, variable_id: int, design: str,
           frequency: str, fmt: ValueFormat = DEFAULT_FORMAT) -> PromptRecord:
    """Render one variable of one window; same inputs give identical bytes."""
    if design not in DESIGNS:
        raise ValueError(f"unknown prompt design {design!r}")
    values = window.normalized_lookback()[:, variable_id]
    body = _body(window, values, frequency, fmt)
    delta = trend(values)
    if design == "P1":
        text = body
    elif design == "P2":
        text = (f"{body} Use the pattern of these historical observations to "
                f"forecast the values of the next {window.horizon} steps.")
    elif design == "P3":
        text = (f"{body} The mean value of these observations is "
                f"{fmt.render(float(values.mean()))}")
    elif design == "P4":
        text = (f"{body} The number of historical steps recorded for this "
                f"variable is {len(values)}")
    else:  # P5
        text = (f"{body} The total trend value of these observations is "
                f"{fmt.render(delta)}")
    return PromptRecord(
        window_id=window.window_id,
        variable_id=variable_id,
        design=design,
        text=text,
        trend_value=delta,
        value_count=len(values),
        mean=float(values.mean()),
        std=float(values.std()),
        last=float(values[-1]),
    )


def ends_numeric(text: str) -> bool:
    tokens = text.split()
    return bool(tokens) and _NUMERAL.match(tokens[-1]) is not None


def render_all(windows: list[TimeSeriesWindow], n_variables: int, design: str,
               frequency: str, fmt: ValueFormat = DEFAULT_FORMAT
               ) -> list[PromptRecord]:
    """Window-major, variable-major prompt stream: exactly windows x N records."""
    records = []
    for window in windows:
        for var in range(n_variables):
            records.append(render(window, var, design, frequency, fmt))
    return records


def prompts_for_dataset(ds: SeriesDataset, windows: list[TimeSeriesWindow],
                        design: str, fmt: ValueFormat = DEFAULT_FORMAT
                        ) -> list[PromptRecord]:
    return render_all(windows, ds.n_variables, design, ds.frequency, fmt)


def template_hash() -> str:
    """Fingerprint of the template wording, for cache manifests."""
    from .data import NormStats
    probe_window = TimeSeriesWindow(
        window_id=0, start=0,
        lookback=np.array([[1.0], [2.0], [4.0]]),
        target=np.array([[0.0]]),
        stats=NormStats(mean=np.zeros(1), std=np.ones(1)),
        start_ts="2000-01-01", end_ts="2000-01-03",
    )
    h = hashlib.sha256(TEMPLATE_VERSION.encode("utf-8"))
    for design in DESIGNS:
        text = render(probe_window, 0, design, "1w").text
        h.update(text.encode("utf-8"))
    return h.hexdigest()[:16]


def dump_jsonl(records: list[PromptRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({
                "window_id": r.window_id,
                "variable_id": r.variable_id,
                "design": r.design,
                "text": r.text,
            }, ensure_ascii=False) + "\n")


def load_jsonl(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def stream_hash(records: list[PromptRecord]) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update(r.text.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()
