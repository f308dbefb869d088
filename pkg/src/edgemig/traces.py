"""Vehicle mobility: GPS trace parsing, slot resampling and synthetic movement.

Trace lines follow the public Rome taxi layout::

    156;2014-02-01 00:00:00.739166+01;POINT(41.8892 12.4869)
"""

from __future__ import annotations

import csv
import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, TextIO

import numpy as np

from .errors import EmptyInputError, InvalidArgument

log = logging.getLogger(__name__)

_LINE = re.compile(
    r"^\s*(?P<id>\d+)\s*;\s*(?P<ts>[^;]+?)\s*;\s*POINT\(\s*(?P<lat>[-+0-9.eE]+)\s+(?P<lon>[-+0-9.eE]+)\s*\)\s*$"
)
_SHORT_TZ = re.compile(r"([+-]\d\d)$")


@dataclass(frozen=True)
class TraceRecord:
    vehicle_id: int
    timestamp: float  # seconds since epoch
    lat: float
    lon: float


@dataclass(frozen=True)
class BoundingBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise InvalidArgument(f"bounding box needs min < max on both axes: {self}")


ROME_BBOX = BoundingBox(41.856, 41.928, 12.442, 12.5387)


@dataclass(frozen=True, eq=False)
class VehicleTrace:
    vehicle_id: int
    positions: np.ndarray  # (T, 2) meters

    def __len__(self):
        return len(self.positions)

    def __eq__(self, other):
        return (isinstance(other, VehicleTrace) and self.vehicle_id == other.vehicle_id
                and np.array_equal(self.positions, other.positions))


class ParsedRecords(list):
    """List of records that also remembers how many input lines were skipped."""

    skipped: int = 0


def parse_timestamp(text: str) -> float:
    text = text.strip()
    if _SHORT_TZ.search(text):
        text = text + ":00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def parse_line(line: str) -> TraceRecord | None:
    m = _LINE.match(line)
    if m is None:
        return None
    try:
        return TraceRecord(int(m["id"]), parse_timestamp(m["ts"]), float(m["lat"]), float(m["lon"]))
    except ValueError:
        return None


def format_record(rec: TraceRecord) -> str:
    ts = datetime.fromtimestamp(rec.timestamp, tz=timezone.utc)
    return f"{rec.vehicle_id};{ts.strftime('%Y-%m-%d %H:%M:%S.%f')}+00;POINT({rec.lat!r} {rec.lon!r})"


def parse_trace_stream(stream: Iterable[str]) -> ParsedRecords:
    out = ParsedRecords()
    skipped = 0
    for line in stream:
        if not line.strip():
            continue
        rec = parse_line(line)
        if rec is None:
            skipped += 1
        else:
            out.append(rec)
    if not out:
        raise EmptyInputError("no parsable trace records")
    out.sort(key=lambda r: (r.vehicle_id, r.timestamp))
    out.skipped = skipped
    if skipped:
        log.info("skipped %d malformed trace lines", skipped)
    return out


def _group(records):
    by_vehicle = defaultdict(list)
    for r in records:
        by_vehicle[r.vehicle_id].append(r)
    for vid, recs in by_vehicle.items():
        recs.sort(key=lambda r: r.timestamp)
        dedup = [recs[0]]
        for r in recs[1:]:
            if r.timestamp > dedup[-1].timestamp:
                dedup.append(r)
        by_vehicle[vid] = dedup
    return dict(sorted(by_vehicle.items()))


def project(lat, lon, bbox: BoundingBox, region_side: float) -> np.ndarray:
    """Clamp to ``bbox`` and map affinely onto ``[0, region_side]^2`` (x from lon, y from lat)."""
    lat = np.clip(np.asarray(lat, dtype=float), bbox.lat_min, bbox.lat_max)
    lon = np.clip(np.asarray(lon, dtype=float), bbox.lon_min, bbox.lon_max)
    x = (lon - bbox.lon_min) / (bbox.lon_max - bbox.lon_min) * region_side
    y = (lat - bbox.lat_min) / (bbox.lat_max - bbox.lat_min) * region_side
    return np.stack([x, y], axis=-1)


def select_vehicles(records, start: float, end: float, n: int) -> list[int]:
    """Ids of the ``n`` vehicles with the most records in ``[start, end]`` (ties by id)."""
    counts = defaultdict(int)
    for r in records:
        if start <= r.timestamp <= end:
            counts[r.vehicle_id] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [vid for vid, _ in ranked[:n]]


def resample_to_slots(records, bbox: BoundingBox, region_side: float, slot_seconds: float,
                      T: int, start: float) -> list[VehicleTrace]:
    """Positions at ``start + k * slot_seconds`` for ``k < T``, linearly interpolated.

    Slots before the first / after the last record hold that record's
    position. Vehicles whose records do not overlap the window are dropped.
    """
    if T < 1:
        raise InvalidArgument(f"T must be >= 1, got {T}")
    if not slot_seconds > 0:
        raise InvalidArgument(f"slot_seconds must be positive, got {slot_seconds}")
    slots = start + slot_seconds * np.arange(T)
    end = slots[-1]
    traces = []
    for vid, recs in _group(records).items():
        ts = np.array([r.timestamp for r in recs])
        if ts[-1] < start or ts[0] > end:
            continue
        xy = project([r.lat for r in recs], [r.lon for r in recs], bbox, region_side)
        pos = np.column_stack([np.interp(slots, ts, xy[:, 0]), np.interp(slots, ts, xy[:, 1])])
        traces.append(VehicleTrace(vid, np.clip(pos, 0.0, region_side)))
    if not traces:
        raise EmptyInputError("no vehicle has records inside the resampling window")
    return traces


def _reflect(p, side):
    """Fold unbounded coordinates back into ``[0, side]`` as mirror reflections."""
    period = 2.0 * side
    q = np.mod(p, period)
    return np.where(q > side, period - q, q)


def synthetic_traces(model: str, n_vehicles: int, T: int, region_side: float, speed: float,
                     seed: int, slot_seconds: float = 60.0) -> list[VehicleTrace]:
    """Seeded synthetic mobility.

    ``linear`` moves each vehicle along a fixed random heading and reflects
    off the region boundary. ``random_waypoint`` walks at constant speed
    toward uniformly drawn targets, drawing a new one on arrival.
    """
    if n_vehicles < 1 or T < 1:
        raise InvalidArgument("n_vehicles and T must be >= 1")
    if speed < 0:
        raise InvalidArgument(f"speed must be non-negative, got {speed}")
    rng = np.random.default_rng(seed)
    step = speed * slot_seconds
    traces = []
    if model == "linear":
        start = rng.uniform(0, region_side, size=(n_vehicles, 2))
        heading = rng.uniform(0, 2 * np.pi, size=n_vehicles)
        direction = np.column_stack([np.cos(heading), np.sin(heading)])
        for u in range(n_vehicles):
            raw = start[u] + step * np.arange(T)[:, None] * direction[u]
            pos = _reflect(raw, region_side)
            traces.append(VehicleTrace(u, pos))
    elif model == "random_waypoint":
        for u in range(n_vehicles):
            p = rng.uniform(0, region_side, size=2)
            target = rng.uniform(0, region_side, size=2)
            pos = np.empty((T, 2))
            pos[0] = p
            for t in range(1, T):
                remaining = step
                while remaining > 0:
                    gap = target - p
                    dist = float(np.hypot(*gap))
                    if dist > remaining:
                        p = p + gap * (remaining / dist)
                        remaining = 0.0
                    else:
                        p = target
                        remaining -= dist
                        target = rng.uniform(0, region_side, size=2)
                pos[t] = p
            traces.append(VehicleTrace(u, pos))
    else:
        raise InvalidArgument(f"unknown mobility model {model!r}")
    return traces


def write_traces_csv(traces: list[VehicleTrace], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["vehicle_id", "slot", "x_m", "y_m"])
    for tr in traces:
        for k, (x, y) in enumerate(tr.positions):
            w.writerow([tr.vehicle_id, k, repr(float(x)), repr(float(y))])


def read_traces_csv(fh: TextIO) -> list[VehicleTrace]:
    rows = defaultdict(list)
    reader = csv.DictReader(fh)
    missing = {"vehicle_id", "slot", "x_m", "y_m"} - set(reader.fieldnames or [])
    if missing:
        raise InvalidArgument(f"trace CSV missing columns {sorted(missing)}")
    for row in reader:
        rows[int(row["vehicle_id"])].append((int(row["slot"]), float(row["x_m"]), float(row["y_m"])))
    traces = []
    for vid in sorted(rows):
        pts = sorted(rows[vid])
        traces.append(VehicleTrace(vid, np.array([[x, y] for _, x, y in pts])))
    if not traces:
        raise EmptyInputError("trace CSV has no rows")
    return traces
