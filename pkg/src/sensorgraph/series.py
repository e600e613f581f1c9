"""Sensor time series: ingestion, cleaning, normalization and STL decomposition."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from statsmodels.tsa.seasonal import STL

from .errors import (
    AllMissing,
    DegenerateSeries,
    InsufficientLength,
    IrregularCadence,
    PeriodTooLong,
)

DEFAULT_CADENCE_S = 300


class SensorKind(str, Enum):
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    WBT = "wbt"
    IT_LOAD = "it_load"
    PUE = "pue"
    FAN_SPEED = "fan_speed"
    WATER = "water"
    OTHER = "other"


def _check_period(period: Optional[int], length: int) -> None:
    if period is None:
        return
    if period < 2 or period >= length / 2:
        raise PeriodTooLong(
            f"period {period} must satisfy 2 <= period < length/2 (length={length})"
        )


@dataclass(frozen=True, eq=False)
class SensorSeries:
    """One sensor's uniformly sampled values.

    ``timestamps`` are integer epoch seconds. Missing values are NaN.
    ``period`` is the number of samples per season, if the sensor is seasonal.
    """

    sensor_id: str
    timestamps: np.ndarray
    values: np.ndarray
    kind: SensorKind = SensorKind.OTHER
    period: Optional[int] = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        if ts.ndim != 1 or vals.ndim != 1 or len(ts) != len(vals):
            raise ValueError("timestamps and values must be 1-d and of equal length")
        if len(ts) > 1:
            steps = np.diff(ts)
            if steps[0] <= 0 or np.any(steps != steps[0]):
                raise IrregularCadence(
                    f"{self.sensor_id}: timestamps must increase with a constant step"
                )
        _check_period(self.period, len(ts))
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "kind", SensorKind(self.kind))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def step(self) -> int:
        if len(self.timestamps) < 2:
            return DEFAULT_CADENCE_S
        return int(self.timestamps[1] - self.timestamps[0])

    def with_values(self, values: np.ndarray) -> "SensorSeries":
        return replace(self, values=np.asarray(values, dtype=float))

    def __eq__(self, other):
        if not isinstance(other, SensorSeries):
            return NotImplemented
        return (
            self.sensor_id == other.sensor_id
            and self.kind == other.kind
            and self.period == other.period
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True)
class Decomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal + self.residual


def _odd_ceil(value: float) -> int:
    n = int(math.ceil(value))
    return n if n % 2 else n + 1


@dataclass(frozen=True)
class StlConfig:
    """Loess-based STL settings.

    Window lengths left as ``None`` are derived from the period using the
    usual defaults: trend window is the smallest odd integer at least
    ``1.5 * period / (1 - 1.5 / seasonal)`` and the low-pass window is the
    smallest odd integer above ``period``. Jumps (loess evaluated every
    ``jump`` points and linearly interpolated in between) default to
    ``ceil(window / 10)``.
    """

    period: Optional[int] = None
    seasonal: int = 7
    trend: Optional[int] = None
    low_pass: Optional[int] = None
    inner_iter: int = 2
    outer_iter: int = 1
    seasonal_jump: Optional[int] = None
    trend_jump: Optional[int] = None
    low_pass_jump: Optional[int] = None

    def windows(self, period: int) -> tuple[int, int, int]:
        trend = self.trend or _odd_ceil(1.5 * period / (1.0 - 1.5 / self.seasonal))
        low_pass = self.low_pass or _odd_ceil(period + 1)
        return self.seasonal, trend, low_pass


def interpolate_missing(series: SensorSeries) -> SensorSeries:
    """Fill NaNs linearly between valid neighbours; edges take the nearest valid value."""
    values = series.values
    missing = np.isnan(values)
    if not missing.any():
        return series
    if missing.all():
        raise AllMissing(f"{series.sensor_id}: every value is missing")
    idx = np.arange(len(values))
    filled = values.copy()
    # np.interp clamps to the end values outside the valid range
    filled[missing] = np.interp(idx[missing], idx[~missing], values[~missing])
    return series.with_values(filled)


def normalize(series: SensorSeries, mode: str = "none") -> SensorSeries:
    """Rescale values by ``mode``: ``"none"``, ``"zscore"`` (population std) or ``"minmax"``."""
    values = series.values
    if len(values) == 0:
        raise InsufficientLength("cannot normalize an empty series")
    if mode == "none":
        return series
    if mode == "zscore":
        std = values.std()
        if not std > 0:
            raise DegenerateSeries(f"{series.sensor_id}: zero standard deviation")
        return series.with_values((values - values.mean()) / std)
    if mode == "minmax":
        lo, hi = values.min(), values.max()
        if not hi > lo:
            raise DegenerateSeries(f"{series.sensor_id}: max equals min")
        return series.with_values((values - lo) / (hi - lo))
    raise ValueError(f"unknown normalization mode {mode!r}")


def stl_decompose(series: SensorSeries, config: StlConfig = StlConfig()) -> Decomposition:
    """Additive seasonal-trend decomposition with loess.

    The residual is computed as ``x - trend - seasonal`` so the three
    components always add back to the input up to rounding.
    """
    x = np.asarray(series.values, dtype=float)
    if np.isnan(x).any():
        raise ValueError(f"{series.sensor_id}: interpolate missing values first")
    period = config.period or series.period
    if period is None:
        raise PeriodTooLong(f"{series.sensor_id}: no seasonal period configured")
    _check_period(period, len(x))

    seasonal, trend, low_pass = config.windows(period)
    result = STL(
        x,
        period=period,
        seasonal=seasonal,
        trend=trend,
        low_pass=low_pass,
        seasonal_deg=1,
        trend_deg=1,
        low_pass_deg=1,
        robust=config.outer_iter > 0,
        seasonal_jump=config.seasonal_jump or math.ceil(seasonal / 10),
        trend_jump=config.trend_jump or math.ceil(trend / 10),
        low_pass_jump=config.low_pass_jump or math.ceil(low_pass / 10),
    ).fit(inner_iter=config.inner_iter, outer_iter=config.outer_iter)
    d = np.asarray(result.trend, dtype=float)
    s = np.asarray(result.seasonal, dtype=float)
    return Decomposition(trend=d, seasonal=s, residual=x - d - s)


def autocorrelation(x: np.ndarray, lag: int) -> float:
    x = np.asarray(x, dtype=float)
    centered = x - x.mean()
    denom = float(np.dot(centered, centered))
    if denom <= 0 or lag >= len(x):
        return 0.0
    return float(np.dot(centered[:-lag], centered[lag:]) / denom)


def detect_period(series: SensorSeries, candidates: Sequence[int],
                  min_acf: float = 0.3) -> Optional[int]:
    """Return the candidate lag with the largest autocorrelation, if it exceeds ``min_acf``."""
    if len(candidates) == 0:
        raise ValueError("candidates must be non-empty")
    scores = [autocorrelation(series.values, int(c)) for c in candidates]
    best = int(np.argmax(scores))
    if scores[best] > min_acf:
        return int(candidates[best])
    return None


# -- file formats -------------------------------------------------------------

def parse_timestamp(text: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _parse_value(raw) -> float:
    if raw is None:
        return math.nan
    if isinstance(raw, (int, float)):
        return float(raw)
    raw = raw.strip()
    return float(raw) if raw else math.nan


def _assemble(rows: Iterable[tuple[int, str, float]],
              metadata: Optional[Mapping[str, Mapping]] = None) -> dict[str, SensorSeries]:
    grouped: dict[str, list[tuple[int, float]]] = {}
    for ts, sid, value in rows:
        grouped.setdefault(sid, []).append((ts, value))
    metadata = metadata or {}
    out = {}
    for sid, pairs in grouped.items():
        pairs.sort(key=lambda p: p[0])
        meta = metadata.get(sid, {})
        out[sid] = SensorSeries(
            sensor_id=sid,
            timestamps=np.array([p[0] for p in pairs], dtype=np.int64),
            values=np.array([p[1] for p in pairs], dtype=float),
            kind=SensorKind(meta.get("kind", "other")),
            period=meta.get("period"),
        )
    return out


def _data_lines(handle):
    return (line for line in handle if not line.startswith("#"))


def read_series(path, metadata: Optional[Mapping[str, Mapping]] = None) -> dict[str, SensorSeries]:
    """Read ``timestamp,sensor_id,value`` CSV or JSON-lines into per-sensor series.

    Sensors come back in first-appearance order. Lines starting with ``#``
    are comments. ``metadata`` maps sensor id to ``{"kind": ..., "period": ...}``.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        if path.suffix in (".jsonl", ".ndjson"):
            for line in _data_lines(fh):
                if not line.strip():
                    continue
                rec = json.loads(line)
                rows.append((parse_timestamp(str(rec["timestamp"])), str(rec["sensor_id"]),
                             _parse_value(rec.get("value"))))
        else:
            for rec in csv.DictReader(_data_lines(fh)):
                rows.append((parse_timestamp(rec["timestamp"]), rec["sensor_id"],
                             _parse_value(rec["value"])))
    return _assemble(rows, metadata)


def write_series(path, series: Iterable[SensorSeries], header_comment: Optional[str] = None) -> None:
    """Write series in the long ``timestamp,sensor_id,value`` CSV layout (NaN -> empty)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "sensor_id", "value"])
        for s in series:
            for ts, v in zip(s.timestamps.tolist(), s.values.tolist()):
                w.writerow([ts, s.sensor_id, "" if math.isnan(v) else repr(v)])


def write_decomposition(path, timestamps: np.ndarray, decomposition: Decomposition,
                        header_comment: Optional[str] = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "trend", "seasonal", "residual"])
        for row in zip(np.asarray(timestamps).tolist(), decomposition.trend.tolist(),
                       decomposition.seasonal.tolist(), decomposition.residual.tolist()):
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
