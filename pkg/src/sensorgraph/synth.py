"""Synthetic data-center sensor fleet with planted related groups, and the
two group-anomaly injection protocols (feature matrix and raw series)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .series import SensorKind, SensorSeries, write_series

DAY = 86400
START_EPOCH = 1526083200  # 2018-05-12T00:00:00Z


@dataclass(frozen=True)
class FleetConfig:
    """Shape and dynamics of the synthetic fleet.

    The default counts add up to 163 sensors: 7 rooms x 8 hot-aisle
    temperatures plus 2 stray aisles, 7 x 10 CRAC fans plus 2 spares,
    5 x 5 water-loop sensors, 3 redundant outside-environment pairs,
    IT load and PUE.
    """

    rooms: int = 7
    hot_aisle_per_room: int = 8
    extra_hot_aisle: int = 2
    crac_per_room: int = 10
    extra_crac: int = 2
    water_groups: int = 5
    water_per_group: int = 5
    cadence_s: int = 300
    weeks: float = 6.0
    start: int = START_EPOCH
    seed: int = 0
    events_per_day: float = 3.0
    event_size: float = 8.0
    noise: float = 0.15
    local_events_per_day: float = 2.0
    local_event_size: float = 8.0

    def __post_init__(self):
        counts = (self.rooms, self.hot_aisle_per_room, self.crac_per_room,
                  self.water_groups, self.water_per_group)
        if min(counts) < 1 or self.extra_hot_aisle < 0 or self.extra_crac < 0:
            raise ValueError("group counts must be >= 1")
        if self.cadence_s <= 0 or self.weeks <= 0:
            raise ValueError("cadence and duration must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.weeks * 7 * DAY / self.cadence_s))

    @property
    def samples_per_day(self) -> int:
        return DAY // self.cadence_s


@dataclass
class LabeledDataset:
    series: dict[str, SensorSeries]
    labels: np.ndarray
    groups: dict[str, list[str]]
    rooms: list[list[str]] = field(default_factory=list)

    @property
    def sensor_ids(self) -> list[str]:
        return list(self.series)

    @property
    def timestamps(self) -> np.ndarray:
        return next(iter(self.series.values())).timestamps

    def values(self) -> np.ndarray:
        """Sensors x time value matrix."""
        return np.vstack([s.values for s in self.series.values()])

    def index(self, sensor_id: str) -> int:
        return self.sensor_ids.index(sensor_id)

    def room_indices(self) -> list[list[int]]:
        pos = {s: i for i, s in enumerate(self.sensor_ids)}
        return [[pos[s] for s in room] for room in self.rooms]

    @property
    def group_truth(self) -> list[frozenset[str]]:
        return [frozenset(g) for g in self.groups.values()]


class _Latent:
    """Random building blocks for shared latent drivers."""

    def __init__(self, rng: np.random.Generator, cfg: FleetConfig):
        self.rng = rng
        self.n = cfg.n_samples
        self.day = cfg.samples_per_day
        self.cfg = cfg
        self.t = np.arange(self.n)

    def daily(self, amplitude: float, phase: Optional[float] = None) -> np.ndarray:
        phase = self.rng.uniform(0, 2 * np.pi) if phase is None else phase
        return amplitude * np.sin(2 * np.pi * self.t / self.day + phase)

    def drift(self, scale: float) -> np.ndarray:
        # smoothed random walk over roughly a day
        steps = self.rng.standard_normal(self.n) * scale / np.sqrt(self.day)
        walk = np.cumsum(steps)
        width = min(self.day, self.n)
        return np.convolve(walk - walk.mean(), np.ones(width) / width, mode="same")

    def events(self, size: float, rate_per_day: Optional[float] = None) -> np.ndarray:
        """Additive spikes, level shifts, variance bursts and slope changes."""
        rate = self.cfg.events_per_day if rate_per_day is None else rate_per_day
        out = np.zeros(self.n)
        count = self.rng.poisson(rate * self.n / self.day)
        hour = self.day // 24
        for _ in range(count):
            t0 = int(self.rng.integers(0, self.n))
            kind = int(self.rng.integers(0, 4))
            sign = 1.0 if self.rng.random() < 0.5 else -1.0
            mag = size * self.rng.uniform(0.7, 1.3)
            dur = int(self.rng.integers(2 * hour, 8 * hour))
            end = min(self.n, t0 + dur)
            if kind == 0:
                out[t0:t0 + int(self.rng.integers(1, 3))] += sign * mag
            elif kind == 1:
                out[t0:end] += sign * 0.6 * mag
            elif kind == 2:
                out[t0:end] += 0.5 * mag * self.rng.standard_normal(end - t0)
            else:
                ramp = np.arange(end - t0) / hour
                out[t0:end] += sign * 0.4 * mag * ramp / max(ramp[-1], 1.0)
                out[end:min(self.n, end + hour)] += sign * 0.4 * mag * np.linspace(1, 0, min(self.n, end + hour) - end)
        return out


def generate_fleet(config: FleetConfig = FleetConfig()) -> LabeledDataset:
    """Build the fleet; identical configs give bit-identical datasets."""
    cfg = config
    root = np.random.SeedSequence(cfg.seed)
    group_seeds = iter(root.spawn(64))
    sensor_seeds = root.spawn(1)[0]
    n = cfg.n_samples
    ts = cfg.start + cfg.cadence_s * np.arange(n, dtype=np.int64)
    sigma = cfg.noise
    ev = cfg.event_size * sigma
    day = cfg.samples_per_day

    series: dict[str, SensorSeries] = {}
    groups: dict[str, list[str]] = {}
    rooms: list[list[str]] = []
    sensor_rng_seq = iter(sensor_seeds.spawn(4096))

    def add(sid: str, values: np.ndarray, kind: SensorKind, seasonal: bool, noise: float,
            quantum: Optional[float] = None, local: bool = False) -> str:
        rng = np.random.default_rng(next(sensor_rng_seq))
        v = values + noise * rng.standard_normal(n)
        if local and cfg.local_events_per_day > 0:
            # events seen by this sensor alone (local hot spots, faulty readings)
            v = v + _Latent(rng, cfg).events(cfg.local_event_size * noise, cfg.local_events_per_day)
        if quantum:
            v = np.round(v / quantum) * quantum
        series[sid] = SensorSeries(sid, ts, v, kind, day if seasonal else None)
        return sid

    def latent() -> _Latent:
        return _Latent(np.random.default_rng(next(group_seeds)), cfg)

    g = latent()
    it_load = 1.0 + g.daily(0.15, phase=-np.pi / 2) + g.drift(0.05) + g.events(0.04, 1.0)
    g = latent()
    outside_t = 24 + g.daily(4.0, phase=-2.0) + g.drift(2.0) + g.events(6 * ev)
    g = latent()
    humidity = 65 + g.daily(8.0, phase=1.1) + g.drift(4.0) + g.events(12 * ev) - 0.8 * (outside_t - 24)
    wbt = 0.55 * outside_t + 0.12 * humidity + 3.0

    add("it_load", 400 * it_load, SensorKind.IT_LOAD, True, 2.0)
    add("pue", 1.3 + 0.004 * (outside_t - 24) + 0.05 / it_load, SensorKind.PUE, True, 0.003)

    env = []
    for name, kind, sig, noise in (("temperature", SensorKind.TEMPERATURE, outside_t, 0.2),
                                   ("humidity", SensorKind.HUMIDITY, humidity, 0.4),
                                   ("wbt", SensorKind.WBT, wbt, 0.12)):
        pair = [add(f"env_{name}_{k}", sig, kind, True, noise) for k in ("a", "b")]
        groups[f"env_pair_{name}"] = pair
        env.extend(pair)
    groups["env"] = env

    for r in range(cfg.rooms):
        g = latent()
        room = (30 + 8 * (it_load - 1) + 0.1 * (outside_t - 24) + g.daily(0.5)
                + g.drift(0.3) + g.events(ev))
        ids = []
        for k in range(cfg.hot_aisle_per_room):
            gain = 1.0 + 0.1 * g.rng.standard_normal()
            offset = g.rng.normal(0, 0.8)
            ids.append(add(f"room{r}_aisle{k}", 30 + gain * (room - 30) + offset,
                           SensorKind.TEMPERATURE, True, sigma, local=True))
        rooms.append(ids)
        groups[f"room{r}"] = ids

        g = latent()
        fans = 55 + 20 * (it_load - 1) + g.drift(2.0) + g.events(8 * ev)
        groups[f"crac{r}"] = [add(f"crac{r}_fan{k}", fans + g.rng.normal(0, 2.0), SensorKind.FAN_SPEED,
                                  False, 0.8, quantum=1.0)
                              for k in range(cfg.crac_per_room)]

    for k in range(cfg.extra_hot_aisle):
        g = latent()
        add(f"stray_aisle{k}", 29 + 8 * (it_load - 1) + g.daily(0.5) + g.drift(0.3) + g.events(ev),
            SensorKind.TEMPERATURE, True, sigma)
    for k in range(cfg.extra_crac):
        g = latent()
        add(f"spare_crac_fan{k}", 40 + g.drift(2.0) + g.events(8 * ev), SensorKind.FAN_SPEED,
            False, 0.8, quantum=1.0)

    for w in range(cfg.water_groups):
        g = latent()
        loop = 12 + 0.05 * (outside_t - 24) + g.drift(0.5) + g.events(ev)
        groups[f"water{w}"] = [add(f"water{w}_{k}", loop + g.rng.normal(0, 0.5), SensorKind.WATER,
                                   False, sigma) for k in range(cfg.water_per_group)]

    labels = np.zeros((len(series), n), dtype=bool)
    return LabeledDataset(series=series, labels=labels, groups=groups, rooms=rooms)


def inject_feature_anomaly(frames: np.ndarray, rooms: Sequence[Sequence[int]], p: float = 0.2,
                           mean: float = 3.0, std: float = 1.0, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Perturb whole room groups in feature frames ``(T, N, 4)``.

    At every step, with probability ``p``, one room is chosen uniformly and
    each of its sensors' features gets ``+/- N(mean, std)`` (one sign per
    injection, independent draws per entry). Returns the new frames and a
    ``(T, N)`` label array.
    """
    frames = np.array(frames, dtype=float, copy=True)
    labels = np.zeros(frames.shape[:2], dtype=bool)
    rng = np.random.default_rng(seed)
    for t in range(len(frames)):
        if rng.random() >= p:
            continue
        idx = np.asarray(rooms[int(rng.integers(len(rooms)))])
        sign = 1.0 if rng.random() < 0.5 else -1.0
        frames[t, idx] += sign * rng.normal(mean, std, size=(len(idx), frames.shape[2]))
        labels[t, idx] = True
    return frames, labels


def inject_series_anomaly(dataset: LabeledDataset, rooms: Optional[Sequence[Sequence[str]]] = None,
                          p: float = 0.2, mean: float = 6.0, std: float = 1.0,
                          duration_s: int = 3600, seed: int = 0,
                          start: Optional[int] = None, stop: Optional[int] = None) -> LabeledDataset:
    """Add ``N(mean, std)`` offsets to a room's series for the next ``duration_s``.

    Injections may start at sample times in ``[start, stop)`` (epoch seconds;
    defaults to the whole span). Overlapping injections add up and their
    labels are unioned.
    """
    rooms = dataset.rooms if rooms is None else rooms
    ids = dataset.sensor_ids
    ts = dataset.timestamps
    step = int(ts[1] - ts[0]) if len(ts) > 1 else 1
    span = max(1, int(round(duration_s / step)))
    lo = 0 if start is None else int(np.searchsorted(ts, start))
    hi = len(ts) if stop is None else int(np.searchsorted(ts, stop))
    values = dataset.values()
    labels = dataset.labels.copy()
    rng = np.random.default_rng(seed)
    for t in range(lo, hi):
        if rng.random() >= p:
            continue
        room = [ids.index(s) for s in rooms[int(rng.integers(len(rooms)))]]
        offsets = rng.normal(mean, std, size=len(room))
        values[room, t:t + span] += offsets[:, None]
        labels[room, t:t + span] = True
    series = {sid: s.with_values(values[i]) for i, (sid, s) in enumerate(dataset.series.items())}
    return replace(dataset, series=series, labels=labels)


def write_dataset(out_dir, dataset: LabeledDataset, header_comment: Optional[str] = None) -> None:
    """``data.csv`` (ingestion layout), ``labels.csv``, ``groups.json`` and ``sensors.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_series(out / "data.csv", dataset.series.values(), header_comment)
    with (out / "labels.csv").open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "sensor_id", "label"])
        ts = dataset.timestamps.tolist()
        for i, sid in enumerate(dataset.sensor_ids):
            for t, lab in zip(ts, dataset.labels[i].tolist()):
                w.writerow([t, sid, int(lab)])
    meta = {"groups": dataset.groups, "rooms": dataset.rooms}
    if header_comment:
        meta["comment"] = header_comment
    (out / "groups.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    sensors = {sid: {"kind": s.kind.value, "period": s.period} for sid, s in dataset.series.items()}
    (out / "sensors.json").write_text(json.dumps(sensors, indent=2) + "\n")


def read_dataset(out_dir) -> LabeledDataset:
    from .series import read_series

    out = Path(out_dir)
    sensors = json.loads((out / "sensors.json").read_text())
    series = read_series(out / "data.csv", sensors)
    series = {sid: series[sid] for sid in sensors}
    meta = json.loads((out / "groups.json").read_text())
    ids = list(series)
    pos = {s: i for i, s in enumerate(ids)}
    n = len(next(iter(series.values())))
    labels = np.zeros((len(ids), n), dtype=bool)
    labels_path = out / "labels.csv"
    if labels_path.exists():
        t0 = int(next(iter(series.values())).timestamps[0])
        step = next(iter(series.values())).step
        with labels_path.open(newline="") as fh:
            for rec in csv.DictReader(line for line in fh if not line.startswith("#")):
                if rec["label"] == "1":
                    labels[pos[rec["sensor_id"]], (int(rec["timestamp"]) - t0) // step] = True
    return LabeledDataset(series, labels, meta["groups"], meta.get("rooms", []))
