"""Hourly PUN price ingestion, month-stratified episode splits and state windows."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

WINDOW_HOURS = 168
SETTLEMENT_LAG = 24


class DataError(Exception):
    """Base class for every data-ingest failure."""


class ParseError(DataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class GapError(DataError):
    def __init__(self, missing: datetime):
        super().__init__(f"missing hour at {missing:%Y-%m-%d %H:00}")
        self.missing = missing


class DuplicateError(DataError):
    def __init__(self, timestamp: datetime):
        super().__init__(f"duplicate row for {timestamp:%Y-%m-%d %H:00}")
        self.timestamp = timestamp


class InsufficientData(DataError):
    pass


class OutOfRange(DataError, IndexError):
    pass


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Contiguous hourly clearing prices; entry k is ``start + k`` hours."""

    start: datetime
    prices: np.ndarray

    def __post_init__(self):
        prices = np.array(self.prices, dtype=np.float64)
        if prices.ndim != 1:
            raise ValueError("prices must be one-dimensional")
        if not np.all(np.isfinite(prices)):
            raise ValueError("prices must be finite")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.prices)

    def __eq__(self, other):
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return self.start == other.start and np.array_equal(self.prices, other.prices)

    def timestamp(self, k: int) -> datetime:
        return self.start + timedelta(hours=int(k))


@dataclass(frozen=True)
class ColumnSpec:
    date: str = "Date"
    hour: str = "Hour"
    price: str = "PUN"


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratum: str = field(default="month", init=False)

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


class Split(NamedTuple):
    train: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std)) or self.std <= 0:
            raise ValueError(f"invalid normalization stats ({self.mean}, {self.std})")


def _parse_price(text: str, line: int) -> float:
    raw = text.strip()
    if "," in raw:
        # the right-most separator is the decimal mark
        thousands = "." if raw.rfind(",") > raw.rfind(".") else ","
        raw = raw.replace(thousands, "").replace(",", ".")
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(line, f"bad price {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(line, f"non-finite price {text!r}")
    return value


def load_pun_csv(path: str | Path, columns: ColumnSpec = ColumnSpec()) -> PriceSeries:
    """Read a GME-style export (``Date`` YYYYMMDD, ``Hour`` 1-24, ``PUN``) into a series.

    Rows may come in any order. Duplicated or missing hours raise instead of
    being imputed.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)

    rows: dict[datetime, float] = {}
    with path.open(newline="", encoding="utf-8-sig") as fh:
        first = fh.readline()
        fh.seek(0)
        delimiter = ";" if ";" in first else "\t" if "\t" in first else ","
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        for name in (columns.date, columns.hour, columns.price):
            if name not in header:
                raise ParseError(1, f"missing column {name!r}")
        for rec in reader:
            line = reader.line_num
            try:
                day = datetime.strptime(rec[columns.date].strip(), "%Y%m%d")
            except (ValueError, AttributeError):
                raise ParseError(line, f"bad date {rec[columns.date]!r}") from None
            try:
                hour = int(rec[columns.hour].strip())
            except (ValueError, AttributeError):
                raise ParseError(line, f"bad hour {rec[columns.hour]!r}") from None
            if not 1 <= hour <= 24:
                raise ParseError(line, f"hour {hour} outside 1..24")
            if rec[columns.price] is None:
                raise ParseError(line, "missing price")
            stamp = day + timedelta(hours=hour - 1)
            if stamp in rows:
                raise DuplicateError(stamp)
            rows[stamp] = _parse_price(rec[columns.price], line)

    if not rows:
        raise InsufficientData(f"{path} holds no price rows")
    stamps = sorted(rows)
    for prev, cur in zip(stamps, stamps[1:]):
        if cur - prev != timedelta(hours=1):
            raise GapError(prev + timedelta(hours=1))
    prices = np.array([rows[s] for s in stamps])
    if np.any(prices < 0):
        log.warning("%s contains %d negative prices", path, int(np.sum(prices < 0)))
    return PriceSeries(stamps[0], prices)


def write_pun_csv(series: PriceSeries, path: str | Path, columns: ColumnSpec = ColumnSpec()) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([columns.date, columns.hour, columns.price])
        for k, price in enumerate(series.prices):
            ts = series.timestamp(k)
            writer.writerow([ts.strftime("%Y%m%d"), ts.hour + 1, repr(float(price))])


def eligible_starts(n_hours: int, window_hours: int = WINDOW_HOURS, horizon_hours: int = SETTLEMENT_LAG) -> np.ndarray:
    """Hours with a full state window behind them and a settlement day after them."""
    return np.arange(window_hours, max(window_hours, n_hours - horizon_hours), dtype=np.int64)


def stratified_split(series: PriceSeries, spec: SplitSpec, window_hours: int = WINDOW_HOURS) -> Split:
    """Split eligible episode starts into train/test inside each calendar month.

    Each month contributes ``ceil(train_fraction * n)`` of its ``n`` eligible
    starts to the training set, drawn without replacement.
    """
    starts = eligible_starts(len(series), window_hours)
    if starts.size == 0:
        raise InsufficientData(
            f"series of {len(series)} hours has no start with a {window_hours}h window and a settlement day"
        )
    rng = np.random.default_rng(spec.seed)
    months = np.array([_month_key(series.timestamp(int(t))) for t in starts])
    train, test = [], []
    for key in sorted(set(months.tolist())):
        members = starts[months == key]
        # guard against 0.8 * 5 == 4.000000000000001
        n_train = math.ceil(spec.train_fraction * members.size - 1e-9)
        order = rng.permutation(members.size)
        train.append(members[order[:n_train]])
        test.append(members[order[n_train:]])
    return Split(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)))


def _month_key(ts: datetime) -> int:
    return ts.year * 12 + ts.month - 1


def compute_norm_stats(series: PriceSeries, indices: Sequence[int] | np.ndarray) -> NormStats:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise InsufficientData("cannot compute normalization stats from no hours")
    values = series.prices[idx]
    std = float(values.std())
    return NormStats(float(values.mean()), std if std > 0 else 1.0)


def window(series: PriceSeries, t: int, stats: NormStats, window_hours: int = WINDOW_HOURS) -> np.ndarray:
    """Normalized prices of hours ``t - window_hours .. t - 1`` in chronological order."""
    if t < window_hours or t > len(series):
        raise OutOfRange(f"hour {t} has no complete {window_hours}h window in a {len(series)}h series")
    return (series.prices[t - window_hours : t] - stats.mean) / stats.std


def windows(series: PriceSeries, ts: np.ndarray, stats: NormStats, window_hours: int = WINDOW_HOURS) -> np.ndarray:
    """Stack of :func:`window` rows for many hours at once."""
    ts = np.asarray(ts, dtype=np.int64)
    if ts.size and (ts.min() < window_hours or ts.max() > len(series)):
        raise OutOfRange("window index out of range")
    view = np.lib.stride_tricks.sliding_window_view(series.prices, window_hours)
    return (view[ts - window_hours] - stats.mean) / stats.std
