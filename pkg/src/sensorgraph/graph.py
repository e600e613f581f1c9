"""Sensor connectivity from concurrent events, sensor graph snapshots and
group-recovery validation against correlation matrices."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateSeriesWarning, ZeroRowWarning
from .events import EventType, FeatureVector
from .eventstore import EventStore

EventSet = Sequence[tuple[int, int]]  # (event type code, time)

DEFAULT_WINDOW_S = 30 * 86400
DEFAULT_DELTA_S = 15 * 60


def concurrent_set(s_i: EventSet, s_j: EventSet, delta: float) -> list[tuple[int, int]]:
    """Events of ``s_i`` matched by a same-type event of ``s_j`` at most ``delta`` apart."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    by_type = _times_by_type(s_j)
    out = []
    for e, t in s_i:
        times = by_type.get(int(e))
        if times is not None and _has_within(times, t, delta):
            out.append((e, t))
    return out


def concurrent_count(s_i: EventSet, s_j: EventSet, delta: float) -> int:
    return len(concurrent_set(s_i, s_j, delta))


def concurrent_prob(s_i: EventSet, s_j: EventSet, delta: float) -> float:
    """Share of ``s_i`` events that are concurrent with ``s_j``; 0 when ``s_i`` is empty."""
    total = len(s_i)
    if total == 0:
        return 0.0
    return concurrent_count(s_i, s_j, delta) / total


def connectivity(s_i: EventSet, s_j: EventSet, delta: float) -> float:
    return concurrent_prob(s_i, s_j, delta) * concurrent_prob(s_j, s_i, delta)


def _times_by_type(events: EventSet) -> dict[int, np.ndarray]:
    grouped: dict[int, list] = {}
    for e, t in events:
        grouped.setdefault(int(e), []).append(t)
    return {e: np.sort(np.asarray(ts, dtype=np.int64)) for e, ts in grouped.items()}


def _has_within(times: np.ndarray, t, delta) -> bool:
    pos = np.searchsorted(times, t - delta, side="left")
    return bool(pos < len(times) and times[pos] <= t + delta)


def _count_matched(ti: np.ndarray, tj: np.ndarray, delta) -> int:
    if len(ti) == 0 or len(tj) == 0:
        return 0
    pos = np.searchsorted(tj, ti - delta, side="left")
    ok = pos < len(tj)
    ok[ok] = tj[pos[ok]] <= ti[ok] + delta
    return int(ok.sum())


def concurrent_count_matrix(event_sets: Sequence[EventSet], delta: float) -> np.ndarray:
    """``C[i, j]`` for every ordered pair, with ``C[i, i] = |S_i|``."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    per_sensor = [_times_by_type(s) for s in event_sets]
    n = len(event_sets)
    C = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        C[i, i] = len(event_sets[i])
        for j in range(n):
            if i == j:
                continue
            C[i, j] = sum(_count_matched(ti, per_sensor[j].get(e, np.empty(0, np.int64)), delta)
                          for e, ti in per_sensor[i].items())
    return C


def adjacency_from_event_sets(event_sets: Sequence[EventSet], delta: float) -> np.ndarray:
    C = concurrent_count_matrix(event_sets, delta).astype(float)
    diag = np.diag(C).copy()
    P = np.zeros_like(C)
    nonzero = diag > 0
    P[nonzero] = C[nonzero] / diag[nonzero, None]
    A = P * P.T
    return A


def build_adjacency(store: EventStore, sensors: Sequence[str], window: tuple[int, int],
                    delta: float = DEFAULT_DELTA_S) -> np.ndarray:
    """Connectivity matrix over events with time in ``[window[0], window[1]]``."""
    start, end = window
    sets = [[(int(e), t) for e, t in store.event_set(s, start, end)] for s in sensors]
    return adjacency_from_event_sets(sets, delta)


def build_feature_matrix(features: Mapping[str, FeatureVector], sensors: Sequence[str], t: int) -> np.ndarray:
    """Row ``i`` holds sensor ``i``'s four z-scores at ``t`` (spike, mean, var, trend)."""
    return np.vstack([features[s].at(t) for s in sensors]) if sensors else np.zeros((0, 4))


@dataclass
class SensorGraph:
    sensors: list[str]
    A: np.ndarray
    X: np.ndarray
    t: int
    window: int
    delta: float

    def check(self) -> None:
        n = len(self.sensors)
        if self.A.shape != (n, n) or self.X.shape != (n, len(EventType)):
            raise ValueError("adjacency/feature shapes disagree with the sensor list")
        if np.max(np.abs(self.A - self.A.T), initial=0.0) > 1e-12:
            raise ValueError("adjacency is not symmetric")
        if np.any(self.A < 0) or np.any(self.A > 1):
            raise ValueError("adjacency entries outside [0, 1]")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("feature matrix is not finite")

    def to_dict(self, **extra) -> dict:
        out = {
            "sensors": list(self.sensors),
            "t": int(self.t),
            "window_s": int(self.window),
            "delta_s": float(self.delta),
            "A": self.A.tolist(),
            "X": self.X.tolist(),
        }
        out.update(extra)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "SensorGraph":
        return cls(
            sensors=list(data["sensors"]),
            A=np.asarray(data["A"], dtype=float).reshape(len(data["sensors"]), -1),
            X=np.asarray(data["X"], dtype=float).reshape(len(data["sensors"]), -1),
            t=int(data["t"]),
            window=int(data["window_s"]),
            delta=float(data["delta_s"]),
        )

    def write_json(self, path, **extra) -> None:
        Path(path).write_text(json.dumps(self.to_dict(**extra), sort_keys=True) + "\n")

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph(t=int(self.t), window_s=int(self.window), delta_s=float(self.delta))
        for i, s in enumerate(self.sensors):
            g.add_node(s, **{e.label: float(self.X[i, e]) for e in EventType})
        n = len(self.sensors)
        for i in range(n):
            for j in range(i + 1, n):
                if self.A[i, j] > 0:
                    g.add_edge(self.sensors[i], self.sensors[j], weight=float(self.A[i, j]))
        return g

    def write_graphml(self, path, **graph_attrs) -> None:
        import networkx as nx

        g = self.to_networkx()
        g.graph.update(graph_attrs)
        nx.write_graphml(g, str(path))


def snapshot(store: EventStore, features: Mapping[str, FeatureVector], sensors: Sequence[str],
             t: int, window: int = DEFAULT_WINDOW_S, delta: float = DEFAULT_DELTA_S) -> SensorGraph:
    """Graph at time ``t`` from events in ``[t - window, t]`` and features at ``t``."""
    A = build_adjacency(store, sensors, (t - window, t), delta)
    X = build_feature_matrix(features, sensors, t)
    g = SensorGraph(list(sensors), A, X, int(t), int(window), delta)
    g.check()
    return g


def write_matrix_csv(path, M: np.ndarray, labels: Sequence[str], header_comment: Optional[str] = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sensor_id", *labels])
        for lab, row in zip(labels, np.asarray(M).tolist()):
            w.writerow([lab, *[repr(v) for v in row]])


# -- correlation baselines ----------------------------------------------------

def correlation_matrix(data: np.ndarray, method: str = "pearson") -> np.ndarray:
    """Absolute pairwise correlation of the rows of ``data`` (sensors x time).

    ``method`` is ``pearson``, ``spearman`` or ``kendall`` (tau-b). Entries
    involving a constant series are set to 0 with a warning.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] < 3:
        raise ValueError("need a 2-d array with at least 3 aligned samples per series")
    n = data.shape[0]
    constant = np.ptp(data, axis=1) == 0
    if constant.any():
        warnings.warn(f"{int(constant.sum())} constant series; their correlations set to 0",
                      DegenerateSeriesWarning, stacklevel=2)
    ok = ~constant
    M = np.zeros((n, n))
    sub = data[ok]
    if method == "pearson":
        R = np.corrcoef(sub) if len(sub) > 1 else np.ones((1, 1))
    elif method == "spearman":
        ranks = stats.rankdata(sub, axis=1)
        R = np.corrcoef(ranks) if len(sub) > 1 else np.ones((1, 1))
    elif method == "kendall":
        m = len(sub)
        R = np.eye(m)
        for i in range(m):
            for j in range(i + 1, m):
                R[i, j] = R[j, i] = stats.kendalltau(sub[i], sub[j], variant="b").statistic
    else:
        raise ValueError(f"unknown correlation method {method!r}")
    idx = np.flatnonzero(ok)
    M[np.ix_(idx, idx)] = np.abs(np.atleast_2d(R))
    np.fill_diagonal(M, 1.0)
    return M


# -- group recovery -----------------------------------------------------------

@dataclass(frozen=True)
class GroupRecoveryMetrics:
    m1: float
    m2: float
    m3: float
    zero_row: bool = False


def top_k(row: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, ties broken by ascending index."""
    order = np.lexsort((np.arange(len(row)), -np.asarray(row)))
    return order[:k]


def group_recovery_metrics(M: np.ndarray, target: int, group: Iterable[int],
                           k: Optional[int] = None) -> GroupRecoveryMetrics:
    """Top-k hit rate and weight shares of a known related group in row ``target``.

    m1 = |top-k & group| / k, m2 = weight(top-k & group) / row sum,
    m3 = weight(group) / row sum. The target itself counts as a group member.
    """
    group = sorted(set(int(g) for g in group))
    if target not in group:
        raise ValueError("target must belong to the group")
    k = len(group) if k is None else k
    row = np.asarray(M, dtype=float)[target]
    total = row.sum()
    if total <= 0:
        warnings.warn(f"row {target} sums to zero", ZeroRowWarning, stacklevel=2)
        return GroupRecoveryMetrics(0.0, 0.0, 0.0, zero_row=True)
    hits = sorted(set(top_k(row, k).tolist()) & set(group))
    return GroupRecoveryMetrics(
        m1=len(hits) / k,
        m2=float(row[hits].sum() / total),
        m3=float(row[group].sum() / total),
    )


def mean_group_recovery(M: np.ndarray, group: Sequence[int], k: Optional[int] = None) -> GroupRecoveryMetrics:
    """Metrics averaged over every member of ``group`` taken as the target."""
    ms = [group_recovery_metrics(M, g, group, k) for g in group]
    return GroupRecoveryMetrics(
        m1=float(np.mean([m.m1 for m in ms])),
        m2=float(np.mean([m.m2 for m in ms])),
        m3=float(np.mean([m.m3 for m in ms])),
        zero_row=any(m.zero_row for m in ms),
    )
