"""Sensor-level anomaly scores and precision/recall evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import NoPositives


def sensor_scores(error: np.ndarray) -> np.ndarray:
    """Mean squared reconstruction error over the four features of each sensor.

    ``error`` is ``(..., N, 4)``. Errors of vector models must be reshaped
    from ``4N`` to ``(N, 4)`` first (see ``unvec``).
    """
    error = np.asarray(error, dtype=float)
    if error.shape[-1] != 4:
        raise ValueError(f"expected a trailing feature axis of size 4, got {error.shape}")
    return error.mean(axis=-1)


def unvec(x: np.ndarray, n_sensors: int) -> np.ndarray:
    x = np.asarray(x)
    return x.reshape(*x.shape[:-1], n_sensors, 4)


@dataclass
class ScoredFrame:
    t: int
    scores: np.ndarray
    labels: Optional[np.ndarray] = None


def _pool(frames_or_scores, labels=None) -> tuple[np.ndarray, np.ndarray]:
    if labels is None:
        frames = list(frames_or_scores)
        scores = np.concatenate([np.ravel(f.scores) for f in frames]) if frames else np.empty(0)
        labels = np.concatenate([np.ravel(f.labels) for f in frames]) if frames else np.empty(0, bool)
        return scores.astype(float), labels.astype(bool)
    return np.ravel(np.asarray(frames_or_scores, dtype=float)), np.ravel(np.asarray(labels, dtype=bool))


def _prf(tp: float, fp: float, fn: float) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def precision_recall_f1(scores, labels=None, threshold: float = 0.0,
                        inclusive: bool = False) -> tuple[float, float, float]:
    """Pooled precision, recall and F1 of ``score > threshold`` (``>=`` if ``inclusive``).

    Accepts either a sequence of ``ScoredFrame`` or parallel score/label arrays.
    """
    s, y = _pool(scores, labels)
    pred = s >= threshold if inclusive else s > threshold
    tp = float(np.sum(pred & y))
    fp = float(np.sum(pred & ~y))
    fn = float(np.sum(~pred & y))
    return _prf(tp, fp, fn)


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    recall: float
    precision: float
    f1: float


def pr_curve(scores, labels=None) -> list[CurvePoint]:
    """Sweep every distinct score from high to low, predicting ``score >= threshold``."""
    s, y = _pool(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("no positive labels; precision/recall undefined")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    points = []
    for e in ends:
        t = float(tp[e])
        p, r, f = _prf(t, float(e + 1) - t, n_pos - t)
        points.append(CurvePoint(float(s_sorted[e]), r, p, f))
    return points


def best_f1(curve: Sequence[CurvePoint]) -> float:
    return max((p.f1 for p in curve), default=0.0)


def point_at_recall(curve: Sequence[CurvePoint], recall: float) -> CurvePoint:
    """First point of the sweep whose recall reaches ``recall``."""
    for p in curve:
        if p.recall >= recall:
            return p
    return curve[-1]


def f1_at_recall(curve: Sequence[CurvePoint], recall: float) -> float:
    return point_at_recall(curve, recall).f1


def write_curve_csv(path, curve: Sequence[CurvePoint], header_comment: Optional[str] = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "recall", "precision", "f1"])
        for p in curve:
            w.writerow([repr(p.threshold), repr(p.recall), repr(p.precision), repr(p.f1)])
