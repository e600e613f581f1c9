"""Embedded append-only store for event tuples.

The log is a JSON-lines file, one event per line; a sidecar
``<log>.manifest.json`` carries the schema version. An in-memory index keyed
by sensor is rebuilt whenever a store is opened.
"""

from __future__ import annotations

import bisect
import json
import threading
from pathlib import Path
from typing import Iterable, Optional

from .errors import StorageFailure
from .events import EventTuple, EventType, Sign

SCHEMA_VERSION = 1


def _encode(ev: EventTuple) -> str:
    return json.dumps({
        "time": ev.time,
        "sensor_id": ev.sensor_id,
        "event_type": ev.event_type.label,
        "z_value": ev.z_value,
        "sign": ev.sign.value,
    })


def _decode(line: str) -> EventTuple:
    rec = json.loads(line)
    return EventTuple(
        time=int(rec["time"]),
        event_type=EventType.from_label(rec["event_type"]),
        sensor_id=str(rec["sensor_id"]),
        z_value=float(rec["z_value"]),
        sign=Sign(rec["sign"]),
    )


class EventStore:
    """Event tuples indexed by ``(sensor_id, time)``.

    Pass ``path=None`` for a purely in-memory store. Exact duplicates (same
    type, sensor and time) are dropped on insert.
    """

    def __init__(self, path=None, extra_manifest: Optional[dict] = None):
        self.path = Path(path) if path is not None else None
        self._keys: set[tuple[int, str, int]] = set()
        self._by_sensor: dict[str, list[tuple[int, int, EventTuple]]] = {}
        self._lock = threading.Lock()
        if self.path is None:
            return
        manifest = self.manifest_path
        try:
            if self.path.exists():
                self._load()
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.touch()
            if not manifest.exists() or extra_manifest:
                meta = {"schema_version": SCHEMA_VERSION}
                meta.update(extra_manifest or {})
                manifest.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc

    @classmethod
    def open(cls, path) -> "EventStore":
        return cls(path)

    @property
    def manifest_path(self) -> Path:
        return self.path.with_name(self.path.name + ".manifest.json")

    def _load(self) -> None:
        if self.manifest_path.exists():
            meta = json.loads(self.manifest_path.read_text())
            if meta.get("schema_version") != SCHEMA_VERSION:
                raise StorageFailure(f"unsupported schema version {meta.get('schema_version')}")
        with self.path.open() as fh:
            for line in fh:
                # a torn final line from an interrupted writer is ignored
                if not line.endswith("\n") or not line.strip():
                    continue
                self._index(_decode(line))

    def _index(self, ev: EventTuple) -> bool:
        if ev.key in self._keys:
            return False
        self._keys.add(ev.key)
        bisect.insort(self._by_sensor.setdefault(ev.sensor_id, []),
                      (ev.time, int(ev.event_type), ev))
        return True

    def insert(self, events: Iterable[EventTuple]) -> int:
        """Add events; returns how many were new."""
        with self._lock:
            fresh = [ev for ev in events if self._index(ev)]
            if fresh and self.path is not None:
                try:
                    with self.path.open("a") as fh:
                        fh.writelines(_encode(ev) + "\n" for ev in fresh)
                except OSError as exc:
                    raise StorageFailure(str(exc)) from exc
            return len(fresh)

    def query(self, sensor_id: str, start: int, end: int) -> list[EventTuple]:
        """Events of ``sensor_id`` with ``start <= time <= end``, by (time, type code)."""
        if start > end:
            raise ValueError("window start must not exceed its end")
        rows = self._by_sensor.get(sensor_id)
        if not rows:
            return []
        lo = bisect.bisect_left(rows, (start, -1))
        hi = bisect.bisect_right(rows, (end, len(EventType)))
        return [r[2] for r in rows[lo:hi]]

    def event_set(self, sensor_id: str, start: int, end: int) -> list[tuple[EventType, int]]:
        return [(ev.event_type, ev.time) for ev in self.query(sensor_id, start, end)]

    def sensors(self) -> list[str]:
        return sorted(self._by_sensor)

    def all_events(self) -> list[EventTuple]:
        out = [r[2] for rows in self._by_sensor.values() for r in rows]
        out.sort(key=lambda ev: (ev.time, int(ev.event_type), ev.sensor_id))
        return out

    def __len__(self) -> int:
        return len(self._keys)
