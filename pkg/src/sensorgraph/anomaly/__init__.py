"""Reconstruction-based group anomaly detection on sensor graphs."""

from .models import (
    DenseLayer,
    GaeModel,
    GcnLayer,
    PcaModel,
    TrainConfig,
    TrainHistory,
    VaeModel,
    gae_reconstruct,
    gae_train,
    gcn_forward,
    load_checkpoint,
    normalize_adjacency,
    pca_fit,
    pca_reconstruct,
    save_checkpoint,
    train,
    vae_reconstruct,
    vae_train,
)
from .scoring import (
    CurvePoint,
    ScoredFrame,
    best_f1,
    f1_at_recall,
    pr_curve,
    precision_recall_f1,
    sensor_scores,
    unvec,
    write_curve_csv,
)

__all__ = [
    "best_f1",
    "CurvePoint",
    "DenseLayer",
    "f1_at_recall",
    "gae_reconstruct",
    "gae_train",
    "GaeModel",
    "gcn_forward",
    "GcnLayer",
    "load_checkpoint",
    "normalize_adjacency",
    "pca_fit",
    "pca_reconstruct",
    "PcaModel",
    "pr_curve",
    "precision_recall_f1",
    "save_checkpoint",
    "ScoredFrame",
    "sensor_scores",
    "train",
    "TrainConfig",
    "TrainHistory",
    "unvec",
    "vae_reconstruct",
    "vae_train",
    "VaeModel",
    "write_curve_csv",
]
