"""Per-episode metrics CSV: crash-safe appends and strict parsing."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import astuple, dataclass
from pathlib import Path

HEADER = ("episode", "mean_normalized_reward", "mean_policy_loss", "mean_critic_loss", "wall_seconds")


class MetricsParseError(Exception):
    pass


@dataclass(frozen=True)
class MetricsRow:
    episode: int
    mean_normalized_reward: float
    mean_policy_loss: float
    mean_critic_loss: float
    wall_seconds: float


def _fmt(x: float) -> str:
    return repr(float(x))


class MetricsWriter:
    """Writes the header on open and fsyncs after every row, so a killed run keeps whole rows only."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", newline="", encoding="utf-8")
        self._last = 0
        self._write(HEADER)

    def _write(self, fields) -> None:
        self._fh.write(",".join(fields) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def append(self, row: MetricsRow) -> None:
        if row.episode <= self._last:
            raise ValueError(f"episode {row.episode} does not follow {self._last}")
        self._last = row.episode
        self._write([str(row.episode)] + [_fmt(v) for v in astuple(row)[1:]])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> MetricsWriter:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path: str | Path) -> list[MetricsRow]:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise MetricsParseError(f"cannot open {path}: {exc}") from exc
    rows: list[MetricsRow] = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise MetricsParseError(f"{path}: expected header {','.join(HEADER)}")
        for rec in reader:
            if not rec:
                continue
            if len(rec) != len(HEADER):
                raise MetricsParseError(f"{path}:{reader.line_num}: expected {len(HEADER)} fields")
            try:
                row = MetricsRow(int(rec[0]), *(float(x) for x in rec[1:]))
            except ValueError as exc:
                raise MetricsParseError(f"{path}:{reader.line_num}: {exc}") from exc
            if rows and row.episode <= rows[-1].episode:
                raise MetricsParseError(f"{path}:{reader.line_num}: episode index not increasing")
            rows.append(row)
    return rows


def nanmean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else float("nan")


@dataclass(frozen=True)
class LossShape:
    early_policy_loss: float
    late_policy_loss: float
    critic_peak: float
    critic_peak_episode: int
    critic_final: float

    @property
    def policy_loss_decreasing(self) -> bool:
        return self.late_policy_loss < self.early_policy_loss

    @property
    def critic_spike_then_decay(self) -> bool:
        return self.critic_final < self.critic_peak


def loss_shape(rows: list[MetricsRow], early: tuple[int, int] = (1, 100), late: tuple[int, int] = (500, 1000)) -> LossShape:
    """Qualitative training-curve summary for a long run.

    The policy loss trend compares the mean over the ``late`` episode range
    with the ``early`` one. The critic spike is the largest critic loss in
    the first fifth of the run; ``critic_final`` averages the last tenth.
    """
    if not rows:
        raise ValueError("no metrics rows")

    def span(lo: int, hi: int, attr: str) -> float:
        return nanmean(getattr(r, attr) for r in rows if lo <= r.episode <= hi)

    n = len(rows)
    head = rows[: max(1, n // 5)]
    finite = [r for r in head if not math.isnan(r.mean_critic_loss)]
    peak = max(finite, key=lambda r: r.mean_critic_loss) if finite else head[0]
    return LossShape(
        early_policy_loss=span(*early, "mean_policy_loss"),
        late_policy_loss=span(*late, "mean_policy_loss"),
        critic_peak=peak.mean_critic_loss,
        critic_peak_episode=peak.episode,
        critic_final=nanmean(r.mean_critic_loss for r in rows[n - max(1, n // 10) :]),
    )
