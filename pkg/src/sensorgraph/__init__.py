"""Sensor graphs for data-center telemetry.

Time series are decomposed, turned into generalized z-score features,
thresholded into events, and linked by how often their events co-occur.
The resulting weighted graph supports validation against known sensor
groups and graph-autoencoder anomaly detection.
"""

from .events import EventTuple, EventType, FeatureConfig, FeatureVector, Sign, compute_features, detect_events
from .eventstore import EventStore
from .graph import SensorGraph, build_adjacency, connectivity, correlation_matrix, mean_group_recovery
from .series import Decomposition, SensorKind, SensorSeries, StlConfig, stl_decompose
from .synth import FleetConfig, LabeledDataset, generate_fleet

__version__ = "0.1.0"

__all__ = [
    "Decomposition",
    "EventStore",
    "EventTuple",
    "EventType",
    "FeatureConfig",
    "FeatureVector",
    "FleetConfig",
    "LabeledDataset",
    "SensorGraph",
    "SensorKind",
    "SensorSeries",
    "Sign",
    "StlConfig",
    "build_adjacency",
    "compute_features",
    "connectivity",
    "correlation_matrix",
    "detect_events",
    "generate_fleet",
    "mean_group_recovery",
    "stl_decompose",
]
