"""Run configuration: one JSON file, command-line overrides, and a stable hash.

Precedence is flags > file > defaults. The hash covers every setting that
can change a result; output locations are excluded so a run can be moved
or repeated elsewhere and keep its identity.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .anomaly.models import TrainConfig
from .errors import ConfigError
from .events import FeatureConfig
from .experiments import BenchmarkConfig
from .series import StlConfig
from .synth import FleetConfig

MODELS = ("gae", "vae", "pca")
ANOMALIES = ("feature", "series")
_PATH_FIELDS = ("out", "data", "events")


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs.

    ``data`` and ``events`` default to ``<out>/dataset`` and
    ``<out>/events.jsonl``. The graph window is the ``window_days`` ending
    at ``graph_time`` (epoch seconds); by default it ends where the
    training split ends, so the anomaly models see a graph built only from
    clean training data.
    """

    out: str = "run"
    data: Optional[str] = None
    events: Optional[str] = None
    seed: int = 0
    window_days: float = 28.0
    delta_min: float = 15.0
    graph_time: Optional[int] = None
    model: str = "gae"
    anomaly: str = "feature"
    fleet: FleetConfig = FleetConfig()
    features: FeatureConfig = FeatureConfig()
    stl: StlConfig = StlConfig()
    train: TrainConfig = TrainConfig()
    train_weeks: int = 4
    val_weeks: int = 1
    test_weeks: int = 1
    train_stride: int = 4
    p: float = 0.2
    feature_mean: float = 3.0
    series_mean: float = 6.0
    duration_s: int = 3600

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.anomaly not in ANOMALIES:
            raise ConfigError(f"anomaly must be one of {ANOMALIES}, got {self.anomaly!r}")
        if self.window_days <= 0 or self.delta_min < 0:
            raise ConfigError("window_days must be positive and delta_min non-negative")
        if min(self.train_weeks, self.val_weeks, self.test_weeks) < 1 or self.train_stride < 1:
            raise ConfigError("split lengths and train_stride must be >= 1")
        if not 0 <= self.p <= 1:
            raise ConfigError("p must lie in [0, 1]")

    # -- derived settings ---------------------------------------------------------

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def data_dir(self) -> Path:
        return Path(self.data) if self.data else self.out_dir / "dataset"

    @property
    def events_path(self) -> Path:
        return Path(self.events) if self.events else self.out_dir / "events.jsonl"

    @property
    def window_s(self) -> int:
        return int(round(self.window_days * 86400))

    @property
    def delta_s(self) -> float:
        return self.delta_min * 60.0

    def fleet_config(self) -> FleetConfig:
        weeks = float(self.train_weeks + self.val_weeks + self.test_weeks)
        return replace(self.fleet, seed=self.seed, weeks=max(self.fleet.weeks, weeks))

    def benchmark(self) -> BenchmarkConfig:
        return BenchmarkConfig(
            fleet=self.fleet_config(), features=self.features, stl=self.stl,
            train=replace(self.train, seed=self.seed), train_weeks=self.train_weeks,
            val_weeks=self.val_weeks, test_weeks=self.test_weeks, delta_s=self.delta_s,
            train_stride=self.train_stride, p=self.p, feature_mean=self.feature_mean,
            series_mean=self.series_mean, duration_s=self.duration_s, models=(self.model,),
        )

    # -- serialization ----------------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        data = dict(data)
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        nested = {"fleet": FleetConfig, "features": FeatureConfig, "stl": StlConfig, "train": TrainConfig}
        try:
            for key, typ in nested.items():
                if key in data:
                    data[key] = _build(typ, data[key], key)
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> "RunConfig":
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        return RunConfig.from_dict({**self.to_dict(), **changes})

    @property
    def config_hash(self) -> str:
        payload = {k: v for k, v in self.to_dict().items() if k not in _PATH_FIELDS}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @property
    def hash_comment(self) -> str:
        return f"config_hash={self.config_hash}"


def _build(typ, value, key):
    if not isinstance(value, Mapping):
        raise ConfigError(f"{key} must be a JSON object")
    names = {f.name for f in dataclasses.fields(typ)}
    unknown = sorted(set(value) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {key}: {', '.join(unknown)}")
    return typ(**value)
