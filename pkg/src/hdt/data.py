"""Loading, splitting, normalizing and windowing multivariate series."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateChannel,
    EmptySeries,
    MissingFile,
    NonNumericCell,
    SeriesTooShort,
)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """An ``N x C`` real matrix with rows in chronological order."""

    values: np.ndarray
    channel_names: tuple = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise EmptySeries(f"series has shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains NaN or Inf")
        values.setflags(write=False)
        names = tuple(self.channel_names) or tuple(f"ch{c}" for c in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise ValueError(f"{len(names)} channel names for {values.shape[1]} channels")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "channel_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def c(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.n

    def rows(self, start, stop) -> "TimeSeries":
        return TimeSeries(self.values[start:stop], self.channel_names)


@dataclass(frozen=True)
class SplitSpec:
    train_ratio: Fraction = Fraction(6, 10)
    val_ratio: Fraction = Fraction(2, 10)
    test_ratio: Fraction = Fraction(2, 10)

    def __post_init__(self):
        ratios = [_as_fraction(r) for r in (self.train_ratio, self.val_ratio, self.test_ratio)]
        for r in ratios:
            if not 0 < r < 1:
                raise ValueError(f"split ratio {r} outside (0, 1)")
        if sum(ratios) != 1:
            raise ValueError(f"split ratios sum to {sum(ratios)}, not 1")
        object.__setattr__(self, "train_ratio", ratios[0])
        object.__setattr__(self, "val_ratio", ratios[1])
        object.__setattr__(self, "test_ratio", ratios[2])


def _as_fraction(r) -> Fraction:
    if isinstance(r, Fraction):
        return r
    if isinstance(r, float):
        # decimal text, so 0.7 + 0.1 is exactly 0.8
        return Fraction(repr(r))
    return Fraction(r)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True, eq=False)
class WindowPair:
    x: np.ndarray
    y: np.ndarray
    start_index: int


@dataclass(frozen=True)
class CsvOptions:
    timestamp_column: bool = False
    delimiter: str = ","


def load_csv(path, cfg: CsvOptions | None = None) -> TimeSeries:
    """Read a headed CSV into a :class:`TimeSeries`.

    Cell errors report a 1-based data row (header excluded) and a 1-based
    file column.
    """
    cfg = cfg or CsvOptions()
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    first = 1 if cfg.timestamp_column else 0
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=cfg.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptySeries(f"{path} is empty") from None
        names = [h.strip() for h in header[first:]]
        for r, record in enumerate(reader, start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise ValueError(f"row {r} has {len(record)} fields, header has {len(header)}")
            row = []
            for col in range(first, len(record)):
                text = record[col].strip()
                try:
                    value = float(text)
                except ValueError:
                    raise NonNumericCell(r, col + 1, text) from None
                if not math.isfinite(value):
                    raise NonNumericCell(r, col + 1, text)
                row.append(value)
            rows.append(row)
    if not rows:
        raise EmptySeries(f"{path} has no data rows")
    if not names:
        raise EmptySeries(f"{path} has no numeric columns")
    return TimeSeries(np.array(rows, dtype=np.float64), tuple(names))


def write_csv(ts: TimeSeries, path) -> None:
    """Write ``ts`` in the ingestion format; floats use shortest round-trip text."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ts.channel_names)
        for row in ts.values:
            writer.writerow([repr(float(v)) for v in row])


def split_bounds(n: int, spec: SplitSpec) -> tuple[int, int]:
    a = math.floor(n * spec.train_ratio)
    b = math.floor(n * (spec.train_ratio + spec.val_ratio))
    return a, b


def split(ts: TimeSeries, spec: SplitSpec | None = None):
    """Chronological train/val/test split; floor at both cuts, remainder to test."""
    spec = spec or SplitSpec()
    a, b = split_bounds(ts.n, spec)
    if a < 1 or b - a < 1 or ts.n - b < 1:
        raise SeriesTooShort(ts.n, "nonempty train/val/test")
    return ts.rows(0, a), ts.rows(a, b), ts.rows(b, ts.n)


def fit_norm(ts: TimeSeries) -> NormStats:
    """Per-channel mean and population std. Fit on the training split only."""
    mean = ts.values.mean(axis=0)
    std = ts.values.std(axis=0)
    for c, s in enumerate(std):
        if not s > 0:
            raise DegenerateChannel(c)
    return NormStats(mean=mean, std=std)


def apply_norm(ts: TimeSeries, stats: NormStats) -> TimeSeries:
    return TimeSeries((ts.values - stats.mean) / stats.std, ts.channel_names)


def invert_norm(ts: TimeSeries, stats: NormStats) -> TimeSeries:
    return TimeSeries(ts.values * stats.std + stats.mean, ts.channel_names)


def window_count(n: int, l: int, t: int) -> int:
    return max(n - (l + t) + 1, 0)


def window_arrays(values: np.ndarray, l: int, t: int):
    """Stride-1 windows of an ``N x C`` array as ``(x, y)`` of shapes
    ``(W, l, C)`` and ``(W, t, C)``."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n < l + t:
        raise SeriesTooShort(n, l, t)
    w = np.lib.stride_tricks.sliding_window_view(values, l + t, axis=0)
    w = np.moveaxis(w, -1, 1)  # (W, l+t, C)
    return w[:, :l, :], w[:, l:, :]


def make_windows(ts: TimeSeries, l: int, t: int) -> list[WindowPair]:
    if l < 1 or t < 1:
        raise ValueError("lookback and horizon must be positive")
    x, y = window_arrays(ts.values, l, t)
    return [WindowPair(x[s], y[s], s) for s in range(x.shape[0])]


def subsequence_start(n: int, m: int, rng: np.random.Generator) -> int:
    if m < 1 or n < m:
        raise SeriesTooShort(n, m)
    return int(rng.integers(0, n - m + 1))


def sample_subsequence(ts: TimeSeries, m: int, rng: np.random.Generator) -> TimeSeries:
    """Contiguous length-``m`` slice with a uniformly drawn start."""
    s = subsequence_start(ts.n, m, rng)
    return ts.rows(s, s + m)
