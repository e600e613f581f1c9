"""Generalized z-score features and hybrid-threshold event detection.

Each event type has its own intermediate statistic built from either the
raw series or one STL component:

=============== ========= =================================================
type            input     statistic
=============== ========= =================================================
SpikeDip        residual  the value itself
MeanShift       trend     mean(right window) - mean(left window)
VarianceShift   residual  std(right window) - std(left window)
TrendChange     trend     ema(diff, right window) - ema(diff, left window)
=============== ========= =================================================

The statistic is then passed through a trailing z-score of ``window + 1``
samples. An event fires where the z-score falls outside
``[min(-gamma, Q(alpha/2)), max(gamma, Q(1 - alpha/2))]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyInput, InsufficientLength, WarmupNotReached
from .series import SensorSeries, StlConfig, interpolate_missing, stl_decompose

FLAT_EPS = 1e-12


class EventType(IntEnum):
    SPIKE_DIP = 0
    MEAN_SHIFT = 1
    VARIANCE_SHIFT = 2
    TREND_CHANGE = 3

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def from_label(cls, name: str) -> "EventType":
        try:
            return _BY_LABEL[name]
        except KeyError:
            return cls[name]


_LABELS = {
    EventType.SPIKE_DIP: "SpikeDip",
    EventType.MEAN_SHIFT: "MeanShift",
    EventType.VARIANCE_SHIFT: "VarianceShift",
    EventType.TREND_CHANGE: "TrendChange",
}
_BY_LABEL = {v: k for k, v in _LABELS.items()}


class Sign(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class FeatureConfig:
    """Window sizes (in samples) and thresholds for feature extraction.

    ``debounce`` collapses qualifying samples closer than this many steps
    into one event; ``None`` means "use ``right``" and ``0`` disables it.
    """

    window: int = 288
    left: int = 12
    right: int = 12
    ema_span: int = 12
    gamma: float = 3.0
    alpha: float = 0.01
    use_stl: bool = True
    debounce: Optional[int] = None

    def __post_init__(self):
        if self.window < 2 or self.left < 2 or self.right < 2:
            raise ValueError("window, left and right must all be >= 2")
        if self.ema_span < 1:
            raise ValueError("ema_span must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.debounce is not None and self.debounce < 0:
            raise ValueError("debounce must be >= 0")

    @property
    def warm_up(self) -> int:
        return max(self.window + self.left + self.right, self.window + self.ema_span)

    @property
    def debounce_samples(self) -> int:
        return self.right if self.debounce is None else self.debounce


@dataclass(frozen=True)
class FeatureVector:
    """Per-timestamp z-scores, columns ordered by ``EventType`` code.

    Rows before ``warm_up`` are NaN.
    """

    sensor_id: str
    timestamps: np.ndarray
    z: np.ndarray
    warm_up: int

    def at(self, t: int) -> np.ndarray:
        idx = int(np.searchsorted(self.timestamps, t))
        if idx >= len(self.timestamps) or self.timestamps[idx] != t:
            raise KeyError(f"{self.sensor_id}: no sample at t={t}")
        if idx < self.warm_up:
            raise WarmupNotReached(f"{self.sensor_id}: t={t} is inside the warm-up region")
        return self.z[idx]


@dataclass(frozen=True, order=True)
class EventTuple:
    time: int
    event_type: EventType
    sensor_id: str
    z_value: float
    sign: Sign

    @property
    def key(self) -> tuple[int, str, int]:
        return (int(self.event_type), self.sensor_id, self.time)


def zscore_transform(x: np.ndarray, window: int, return_flat: bool = False):
    """Trailing z-score over the ``window + 1`` samples ending at each t.

    Values before index ``window`` are NaN. Windows whose population std is
    below 1e-12 yield 0; ``return_flat=True`` also returns their mask.
    """
    x = np.asarray(x, dtype=float)
    if len(x) <= window:
        raise InsufficientLength(f"need more than {window} samples, got {len(x)}")
    w = sliding_window_view(x, window + 1)
    mean = w.mean(axis=1)
    std = np.sqrt(((w - mean[:, None]) ** 2).mean(axis=1))
    flat = std < FLAT_EPS
    out = np.full(len(x), np.nan)
    z = np.zeros(len(w))
    np.divide(x[window:] - mean, std, out=z, where=~flat)
    out[window:] = z
    if return_flat:
        flat_mask = np.zeros(len(x), dtype=bool)
        flat_mask[window:] = flat
        return out, flat_mask
    return out


def _window_stat(x: np.ndarray, cfg: FeatureConfig, reduce) -> np.ndarray:
    """reduce(right window) - reduce(left window); NaN until both windows exist."""
    out = np.full(len(x), np.nan)
    start = cfg.left + cfg.right
    right = reduce(sliding_window_view(x, cfg.right + 1))  # right[k] ends at k + right
    left = reduce(sliding_window_view(x, cfg.left + 1))    # left[k] ends at k + left
    # at time t: right window ends at t, left window ends at t - right
    t = np.arange(start, len(x))
    out[start:] = right[t - cfg.right] - left[t - cfg.right - cfg.left]
    return out


def ema_weights(length: int, span: int) -> np.ndarray:
    """Weights giving the EMA at the last of ``length`` samples, seeded with the first."""
    a = 2.0 / (span + 1.0)
    k = np.arange(length)
    w = a * (1.0 - a) ** (length - 1 - k)
    w[0] = (1.0 - a) ** (length - 1)
    return w


def intermediate_statistic(x1: np.ndarray, event_type: EventType, cfg: FeatureConfig) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    event_type = EventType(event_type)
    if event_type is EventType.SPIKE_DIP:
        return x1.copy()
    if event_type is EventType.MEAN_SHIFT:
        return _window_stat(x1, cfg, lambda w: w.mean(axis=1))
    if event_type is EventType.VARIANCE_SHIFT:
        return _window_stat(x1, cfg, lambda w: w.std(axis=1))
    # first difference; the first sample reuses the second sample's difference
    dx = np.diff(x1)
    dx = np.r_[dx[:1], dx] if len(dx) else np.zeros_like(x1)
    out = np.full(len(x1), np.nan)
    start = cfg.left + cfg.right
    right = sliding_window_view(dx, cfg.right + 1) @ ema_weights(cfg.right + 1, cfg.ema_span)
    left = sliding_window_view(dx, cfg.left + 1) @ ema_weights(cfg.left + 1, cfg.ema_span)
    t = np.arange(start, len(x1))
    out[start:] = right[t - cfg.right] - left[t - cfg.right - cfg.left]
    return out


def compute_feature(x1: np.ndarray, event_type: EventType, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Generalized z-score for one event type; NaN before ``cfg.warm_up``.

    ``x1`` must already be the right input: the STL residual for spikes and
    variance shifts, the trend for mean shifts and trend changes, or the raw
    series for non-seasonal sensors.
    """
    x1 = np.asarray(x1, dtype=float)
    if len(x1) <= cfg.warm_up:
        raise InsufficientLength(f"need more than {cfg.warm_up} samples, got {len(x1)}")
    x2 = intermediate_statistic(x1, event_type, cfg)
    valid = int(np.argmax(~np.isnan(x2)))
    z = np.full(len(x1), np.nan)
    z[valid:] = zscore_transform(x2[valid:], cfg.window)
    z[: cfg.warm_up] = np.nan
    return z


def feature_inputs(series: SensorSeries, cfg: FeatureConfig = FeatureConfig(),
                   stl: StlConfig = StlConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Return the (residual-like, trend-like) inputs used by the four features."""
    series = interpolate_missing(series)
    if cfg.use_stl and (series.period or stl.period):
        dec = stl_decompose(series, stl)
        return dec.residual, dec.trend
    return series.values, series.values


def compute_features(series: SensorSeries, cfg: FeatureConfig = FeatureConfig(),
                     stl: StlConfig = StlConfig()) -> FeatureVector:
    residual, trend = feature_inputs(series, cfg, stl)
    inputs = {
        EventType.SPIKE_DIP: residual,
        EventType.MEAN_SHIFT: trend,
        EventType.VARIANCE_SHIFT: residual,
        EventType.TREND_CHANGE: trend,
    }
    z = np.column_stack([compute_feature(inputs[e], e, cfg) for e in EventType])
    return FeatureVector(series.sensor_id, np.asarray(series.timestamps), z, cfg.warm_up)


def quantile(values, q: float) -> float:
    """Empirical q-quantile, interpolating linearly between order statistics."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInput("quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    return float(np.quantile(values, q, method="linear"))


def thresholds(z: np.ndarray, cfg: FeatureConfig) -> tuple[float, float]:
    """Lower and upper event thresholds over the available z values."""
    avail = z[~np.isnan(z)]
    lo = min(-cfg.gamma, quantile(avail, cfg.alpha / 2))
    hi = max(cfg.gamma, quantile(avail, 1 - cfg.alpha / 2))
    return lo, hi


def _debounce(idx: np.ndarray, z: np.ndarray, gap: int) -> list[int]:
    if gap <= 0 or len(idx) == 0:
        return idx.tolist()
    breaks = np.flatnonzero(np.diff(idx) > gap) + 1
    picked = []
    for run in np.split(idx, breaks):
        picked.append(int(run[np.argmax(np.abs(z[run]))]))
    return picked


def detect_events(z: np.ndarray, cfg: FeatureConfig, event_type: EventType,
                  sensor_id: str, timestamps: Sequence[int]) -> list[EventTuple]:
    z = np.asarray(z, dtype=float)
    timestamps = np.asarray(timestamps)
    if len(z) != len(timestamps):
        raise ValueError("z and timestamps differ in length")
    if np.all(np.isnan(z)):
        return []
    lo, hi = thresholds(z, cfg)
    with np.errstate(invalid="ignore"):
        hits = np.flatnonzero((z < lo) | (z > hi))
    events = []
    for i in _debounce(hits, z, cfg.debounce_samples):
        zi = float(z[i])
        events.append(EventTuple(
            time=int(timestamps[i]),
            event_type=EventType(event_type),
            sensor_id=sensor_id,
            z_value=zi,
            sign=Sign.POSITIVE if zi > 0 else Sign.NEGATIVE,
        ))
    return events


def detect_sensor_events(features: FeatureVector, cfg: FeatureConfig = FeatureConfig()) -> list[EventTuple]:
    """Events of all four types for one sensor, ordered by (time, type)."""
    out = []
    for e in EventType:
        out.extend(detect_events(features.z[:, e], cfg, e, features.sensor_id, features.timestamps))
    out.sort(key=lambda ev: (ev.time, int(ev.event_type)))
    return out


def write_events_csv(path, events: Iterable[EventTuple], header_comment: Optional[str] = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "sensor_id", "event_type", "z_value", "sign"])
        for ev in events:
            w.writerow([ev.time, ev.sensor_id, ev.event_type.label, repr(ev.z_value), ev.sign.value])


def read_events_csv(path) -> list[EventTuple]:
    with Path(path).open(newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        return [
            EventTuple(
                time=int(r["time"]),
                event_type=EventType.from_label(r["event_type"]),
                sensor_id=r["sensor_id"],
                z_value=float(r["z_value"]),
                sign=Sign(r["sign"]),
            )
            for r in rows
        ]
