"""End-to-end experiments on the synthetic fleet.

``run_validation`` compares the event adjacency with correlation matrices on
the planted groups. ``run_anomaly_benchmark`` trains GAE, VAE and PCA on four
clean weeks, early-stops on one validation week and scores one test week with
injected room-level anomalies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .anomaly.models import GaeModel, TrainConfig, VaeModel, pca_fit, train
from .anomaly.scoring import CurvePoint, best_f1, f1_at_recall, pr_curve, sensor_scores
from .events import FeatureConfig
from .graph import (
    DEFAULT_DELTA_S,
    GroupRecoveryMetrics,
    correlation_matrix,
    mean_group_recovery,
)
from .graph import build_adjacency
from .pipeline import feature_frames, fleet_events, fleet_features, populate_store
from .series import StlConfig
from .synth import DAY, FleetConfig, LabeledDataset, generate_fleet, inject_feature_anomaly, inject_series_anomaly

log = logging.getLogger(__name__)

WEEK = 7 * DAY
RECALL_GRID = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
MODELS = ("gae", "vae", "pca")


# -- validation ---------------------------------------------------------------------

def run_validation(dataset: LabeledDataset, window: Optional[tuple[int, int]] = None,
                   features_cfg: FeatureConfig = FeatureConfig(), stl: StlConfig = StlConfig(),
                   delta: float = DEFAULT_DELTA_S,
                   methods: Sequence[str] = ("pearson", "spearman", "kendall"),
                   A: Optional[np.ndarray] = None) -> dict[str, dict[str, GroupRecoveryMetrics]]:
    """Mean group-recovery metrics per planted group and per matrix.

    Returns ``{group_name: {"adjacency": m, "pearson": m, ...}}`` with
    ``k`` equal to the group size.
    """
    ids = dataset.sensor_ids
    ts = dataset.timestamps
    window = window or (int(ts[0]), int(ts[-1]))
    if A is None:
        feats = fleet_features(dataset.series, features_cfg, stl)
        store = populate_store(fleet_events(feats, features_cfg, window))
        A = build_adjacency(store, ids, window, delta)
    keep = (ts >= window[0]) & (ts <= window[1])
    data = dataset.values()[:, keep]
    matrices = {"adjacency": A}
    for m in methods:
        matrices[m] = correlation_matrix(data, m)
    pos = {s: i for i, s in enumerate(ids)}
    out = {}
    for name, members in dataset.groups.items():
        idx = [pos[s] for s in members]
        out[name] = {k: mean_group_recovery(M, idx) for k, M in matrices.items()}
    return out


def summarize_validation(results, prefixes: Sequence[str]) -> dict[str, GroupRecoveryMetrics]:
    """Average the metrics of groups whose names start with any of ``prefixes``."""
    picked = [v for k, v in results.items() if any(k.startswith(p) for p in prefixes)]
    out = {}
    for method in picked[0]:
        ms = [g[method] for g in picked]
        out[method] = GroupRecoveryMetrics(
            float(np.mean([m.m1 for m in ms])),
            float(np.mean([m.m2 for m in ms])),
            float(np.mean([m.m3 for m in ms])),
        )
    return out


# -- anomaly benchmark --------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkConfig:
    fleet: FleetConfig = FleetConfig()
    features: FeatureConfig = FeatureConfig()
    stl: StlConfig = StlConfig()
    train: TrainConfig = TrainConfig()
    train_weeks: int = 4
    val_weeks: int = 1
    test_weeks: int = 1
    delta_s: float = DEFAULT_DELTA_S
    train_stride: int = 4
    p: float = 0.2
    feature_mean: float = 3.0
    series_mean: float = 6.0
    duration_s: int = 3600
    models: tuple[str, ...] = MODELS


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass
class ModelResult:
    curve: list[CurvePoint]
    best_f1: float
    f1_at: dict[float, float]


@dataclass
class BenchmarkResult:
    seed: int
    A: np.ndarray
    histories: dict = field(default_factory=dict)
    feature: dict[str, ModelResult] = field(default_factory=dict)
    series: dict[str, ModelResult] = field(default_factory=dict)

    def summary(self) -> dict:
        def part(res):
            return {m: {"best_f1": r.best_f1,
                        "f1_at_recall": {f"{k:.1f}": v for k, v in r.f1_at.items()}}
                    for m, r in res.items()}
        return {"seed": self.seed, "feature": part(self.feature), "series": part(self.series)}


def split_indices(ts: np.ndarray, cfg: BenchmarkConfig) -> Split:
    t0 = int(ts[0])
    warm = cfg.features.warm_up
    idx = np.arange(len(ts))
    train_end = t0 + cfg.train_weeks * WEEK
    val_end = train_end + cfg.val_weeks * WEEK
    test_end = val_end + cfg.test_weeks * WEEK
    return Split(
        train=idx[(idx >= warm) & (ts < train_end)],
        val=idx[(ts >= train_end) & (ts < val_end)],
        test=idx[(ts >= val_end) & (ts < test_end)],
    )


def build_model(name: str, A: np.ndarray, train_frames: np.ndarray, seed: int):
    if name == "gae":
        return GaeModel.init(A, seed=seed)
    if name == "vae":
        return VaeModel.init(A.shape[0], seed=seed)
    if name == "pca":
        return pca_fit(train_frames)
    raise ValueError(f"unknown model {name!r}")


def fit_models(A: np.ndarray, train_frames: np.ndarray, val_frames: np.ndarray,
               cfg: BenchmarkConfig, seed: int):
    models, histories = {}, {}
    stride = max(1, cfg.train_stride)
    for name in cfg.models:
        model = build_model(name, A, train_frames, seed)
        if name != "pca":
            histories[name] = train(model, train_frames[::stride], replace(cfg.train, seed=seed),
                                    val_frames=val_frames)
            log.info("%s: %d epochs, final loss %.4g", name, len(histories[name].loss),
                     histories[name].loss[-1])
        models[name] = model
    return models, histories


def evaluate(model, frames: np.ndarray, labels: np.ndarray) -> ModelResult:
    _, err = model.reconstruct_frames(frames)
    curve = pr_curve(sensor_scores(err), labels)
    return ModelResult(curve, best_f1(curve), {r: f1_at_recall(curve, r) for r in RECALL_GRID})


def feature_test_set(test_frames: np.ndarray, rooms: Sequence[Sequence[int]], cfg: BenchmarkConfig,
                     seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Clean test frames with feature-matrix anomalies; returns frames and ``(T, N)`` labels."""
    return inject_feature_anomaly(test_frames, rooms, p=cfg.p, mean=cfg.feature_mean, seed=seed)


def series_test_set(dataset: LabeledDataset, features: dict, split: Split, cfg: BenchmarkConfig,
                    seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Inject raw-series anomalies into the test weeks and recompute the affected features.

    Only hot-aisle sensors are touched by the protocol, so only their
    features are recomputed; everything else reuses ``features``.
    """
    ts = dataset.timestamps
    anomalous = inject_series_anomaly(dataset, p=cfg.p, mean=cfg.series_mean, duration_s=cfg.duration_s,
                                      seed=seed, start=int(ts[split.test[0]]))
    touched = sorted({s for room in dataset.rooms for s in room})
    feats = dict(features)
    feats.update(fleet_features({s: anomalous.series[s] for s in touched}, cfg.features, cfg.stl))
    frames = feature_frames(feats, dataset.sensor_ids)[split.test]
    return frames, anomalous.labels[:, split.test].T


def run_anomaly_benchmark(seed: int, cfg: BenchmarkConfig = BenchmarkConfig(),
                          kinds: Sequence[str] = ("feature", "series")) -> BenchmarkResult:
    weeks = cfg.train_weeks + cfg.val_weeks + cfg.test_weeks
    fleet = replace(cfg.fleet, seed=seed, weeks=float(weeks))
    ds = generate_fleet(fleet)
    ids = ds.sensor_ids
    ts = ds.timestamps
    split = split_indices(ts, cfg)

    feats = fleet_features(ds.series, cfg.features, cfg.stl)
    frames = feature_frames(feats, ids)
    train_window = (int(ts[split.train[0]]), int(ts[split.train[-1]]))
    store = populate_store(fleet_events(feats, cfg.features, train_window))
    A = build_adjacency(store, ids, train_window, cfg.delta_s)

    models, histories = fit_models(A, frames[split.train], frames[split.val], cfg, seed)
    result = BenchmarkResult(seed=seed, A=A, histories=histories)

    if "feature" in kinds:
        test, labels = feature_test_set(frames[split.test], ds.room_indices(), cfg, seed)
        result.feature = {m: evaluate(models[m], test, labels) for m in models}
    if "series" in kinds:
        test, labels = series_test_set(ds, feats, split, cfg, seed)
        result.series = {m: evaluate(models[m], test, labels) for m in models}
    return result
