"""Series -> features -> events -> store -> graph, for a whole fleet."""

from __future__ import annotations

from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .events import FeatureConfig, FeatureVector, EventTuple, compute_features, detect_sensor_events
from .eventstore import EventStore
from .graph import DEFAULT_DELTA_S, build_adjacency
from .series import SensorSeries, StlConfig


def fleet_features(series: Mapping[str, SensorSeries], cfg: FeatureConfig = FeatureConfig(),
                   stl: StlConfig = StlConfig()) -> dict[str, FeatureVector]:
    return {sid: compute_features(s, cfg, stl) for sid, s in series.items()}


def feature_frames(features: Mapping[str, FeatureVector], sensors: Sequence[str]) -> np.ndarray:
    """Stack per-sensor z-scores into frames ``(T, N, 4)``; warm-up rows stay NaN."""
    return np.stack([features[s].z for s in sensors], axis=1)


def fleet_events(features: Mapping[str, FeatureVector], cfg: FeatureConfig = FeatureConfig(),
                 window: Optional[tuple[int, int]] = None) -> list[EventTuple]:
    """Detect events per sensor; with ``window``, thresholds use only that span."""
    out = []
    for fv in features.values():
        if window is not None:
            keep = (fv.timestamps >= window[0]) & (fv.timestamps <= window[1])
            fv = FeatureVector(fv.sensor_id, fv.timestamps[keep], fv.z[keep], 0)
        out.extend(detect_sensor_events(fv, cfg))
    return out


def populate_store(events: Iterable[EventTuple], store: Optional[EventStore] = None) -> EventStore:
    store = EventStore() if store is None else store
    store.insert(sorted(events, key=lambda e: (e.time, int(e.event_type), e.sensor_id)))
    return store


def ts2graph_adjacency(series: Mapping[str, SensorSeries], window: tuple[int, int],
                       cfg: FeatureConfig = FeatureConfig(), stl: StlConfig = StlConfig(),
                       delta: float = DEFAULT_DELTA_S) -> tuple[np.ndarray, EventStore, dict[str, FeatureVector]]:
    features = fleet_features(series, cfg, stl)
    store = populate_store(fleet_events(features, cfg, window))
    A = build_adjacency(store, list(series), window, delta)
    return A, store, features
