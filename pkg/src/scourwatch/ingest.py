"""Sensor CSV parsing, operator bias-shift correction, and regridding of
raw readings onto a uniform hourly timeline shared by all sensors.

Input CSV format: header ``timestamp,stage,sonar[,discharge]``, ISO-8601 UTC
timestamps, empty field = missing reading, decimal point, no thousands
separators. Elevations are meters (or feet with ``units="ft"``), discharge
is cubic meters per second (cubic feet per second with ``units="ft"``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import InputError, ParameterError

SENSORS = ("stage", "sonar", "discharge")

FT_TO_M = 0.3048
CFS_TO_CMS = FT_TO_M**3

STEP_SECONDS = 3600


@dataclass(frozen=True)
class RawReading:
    timestamp: datetime  # tz-aware UTC, second resolution
    sensor: str
    value: float

    def __post_init__(self):
        if self.sensor not in SENSORS:
            raise ParameterError(f"unknown sensor {self.sensor!r}")
        if not math.isfinite(self.value):
            raise InputError(f"non-finite value for {self.sensor} at {self.timestamp}")


@dataclass(frozen=True)
class BiasShift:
    sensor: str
    start: datetime
    end: datetime  # interval is half-open [start, end)
    offset_m: float


@dataclass
class BiasShiftTable:
    """Operator-supplied correction intervals, from manual inspection."""

    entries: list[BiasShift] = field(default_factory=list)

    def __post_init__(self):
        by_sensor: dict[str, list[BiasShift]] = {}
        for e in self.entries:
            if not math.isfinite(e.offset_m):
                raise ParameterError(f"non-finite bias offset for {e.sensor}")
            if e.end <= e.start:
                raise ParameterError(f"empty bias interval {e.start}..{e.end}")
            by_sensor.setdefault(e.sensor, []).append(e)
        for sensor, entries in by_sensor.items():
            entries = sorted(entries, key=lambda e: e.start)
            for a, b in zip(entries, entries[1:]):
                if b.start < a.end:
                    raise ParameterError(
                        f"overlapping bias intervals for {sensor} at {b.start}"
                    )


@dataclass
class UniformSeries:
    """Hourly-gridded multivariate series; NaN marks a gap."""

    origin: datetime
    channels: dict[str, np.ndarray]
    step_seconds: int = STEP_SECONDS

    def __post_init__(self):
        if self.step_seconds != STEP_SECONDS:
            raise ParameterError("UniformSeries step must be exactly 3600 s")
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise ParameterError(f"channel length mismatch: {sorted(lengths)}")
        for name, values in self.channels.items():
            values = np.asarray(values, dtype=np.float64)
            if np.isinf(values).any():
                raise InputError(f"infinite value in channel {name}")
            self.channels[name] = values

    @property
    def n_steps(self) -> int:
        return len(next(iter(self.channels.values())))

    def gap_mask(self, name: str) -> np.ndarray:
        return np.isnan(self.channels[name])

    def timestamp_at(self, index: int) -> datetime:
        return self.origin + timedelta(seconds=index * self.step_seconds)


def _parse_timestamp(text: str, line_no: int) -> datetime:
    raw = text.strip()
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        raise InputError(f"line {line_no}: bad timestamp {raw!r}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_csv(path, schema=None, units: str = "m") -> list[RawReading]:
    """Read a sensor CSV into readings sorted by (sensor, timestamp).

    `schema` pins the expected header columns; by default the header must be
    timestamp,stage,sonar with discharge optional. Empty value fields are
    skipped (they become gaps after regridding). Duplicate
    (timestamp, sensor) pairs and non-finite values are rejected.
    """
    if units not in ("m", "ft"):
        raise ParameterError(f"units must be 'm' or 'ft', got {units!r}")
    readings: list[RawReading] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if schema is not None:
            if header != list(schema):
                raise InputError(
                    f"{path}: header {header} does not match schema {list(schema)}"
                )
        else:
            if header[:1] != ["timestamp"] or not set(header[1:]) <= set(SENSORS):
                raise InputError(f"{path}: unsupported header {header}")
        sensor_cols = header[1:]
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            ts = _parse_timestamp(row[0], line_no)
            for sensor, cell in zip(sensor_cols, row[1:]):
                cell = cell.strip()
                if not cell:
                    continue
                try:
                    value = float(cell)
                except ValueError:
                    raise InputError(
                        f"line {line_no}: bad value {cell!r} for {sensor}"
                    ) from None
                if not math.isfinite(value):
                    raise InputError(f"line {line_no}: non-finite value for {sensor}")
                if units == "ft":
                    value *= CFS_TO_CMS if sensor == "discharge" else FT_TO_M
                readings.append(RawReading(ts, sensor, value))
    readings.sort(key=lambda r: (r.sensor, r.timestamp))
    for a, b in zip(readings, readings[1:]):
        if a.sensor == b.sensor and a.timestamp == b.timestamp:
            raise InputError(
                f"duplicate {a.sensor} reading at {a.timestamp.isoformat()}"
            )
    return readings


def apply_bias_shifts(
    readings: list[RawReading], table: BiasShiftTable
) -> list[RawReading]:
    """Add each interval's offset to readings inside [start, end); order kept."""
    if not table.entries:
        return list(readings)
    out = []
    for r in readings:
        value = r.value
        for e in table.entries:
            if e.sensor == r.sensor and e.start <= r.timestamp < e.end:
                value = value + e.offset_m
        out.append(RawReading(r.timestamp, r.sensor, value) if value != r.value else r)
    return out


def negate_table(table: BiasShiftTable) -> BiasShiftTable:
    return BiasShiftTable(
        [BiasShift(e.sensor, e.start, e.end, -e.offset_m) for e in table.entries]
    )


def regrid_hourly(
    readings: list[RawReading], origin: datetime, n_steps: int
) -> tuple[UniformSeries, int]:
    """Bucket readings into half-open hourly bins [t, t+1h) by arithmetic mean.

    Buckets with no reading are gaps (NaN). Readings outside
    [origin, origin + n_steps hours) are skipped; the skip count is returned
    alongside the series.
    """
    if n_steps < 1:
        raise ParameterError("n_steps must be >= 1")
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, np.ndarray] = {}
    skipped = 0
    origin_s = origin.timestamp()
    for r in readings:
        idx = math.floor((r.timestamp.timestamp() - origin_s) / STEP_SECONDS)
        if idx < 0 or idx >= n_steps:
            skipped += 1
            continue
        if r.sensor not in sums:
            sums[r.sensor] = np.zeros(n_steps)
            counts[r.sensor] = np.zeros(n_steps, dtype=np.int64)
        sums[r.sensor][idx] += r.value
        counts[r.sensor][idx] += 1
    channels = {}
    for sensor in sums:
        n = counts[sensor]
        values = np.full(n_steps, np.nan)
        present = n > 0
        values[present] = sums[sensor][present] / n[present]
        channels[sensor] = values
    return UniformSeries(origin=origin, channels=channels), skipped


def read_bias_table_csv(path) -> BiasShiftTable:
    """Bias table CSV: header sensor,start,end,offset_m."""
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["sensor", "start", "end", "offset_m"]:
            raise InputError(f"{path}: bad bias table header {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise InputError(f"line {line_no}: expected 4 fields")
            sensor = row[0].strip()
            start = _parse_timestamp(row[1], line_no)
            end = _parse_timestamp(row[2], line_no)
            try:
                offset = float(row[3])
            except ValueError:
                raise InputError(f"line {line_no}: bad offset {row[3]!r}") from None
            entries.append(BiasShift(sensor, start, end, offset))
    return BiasShiftTable(entries)


def write_uniform_csv(series: UniformSeries, path) -> None:
    names = [s for s in SENSORS if s in series.channels]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp"] + names)
        for i in range(series.n_steps):
            ts = series.timestamp_at(i).strftime("%Y-%m-%dT%H:%M:%SZ")
            row = [ts]
            for name in names:
                v = series.channels[name][i]
                row.append("" if np.isnan(v) else format(v, ".9g"))
            writer.writerow(row)


def read_uniform_csv(path) -> UniformSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header[:1] != ["timestamp"] or not set(header[1:]) <= set(SENSORS):
            raise InputError(f"{path}: unsupported header {header}")
        names = header[1:]
        times: list[datetime] = []
        columns: list[list[float]] = [[] for _ in names]
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            times.append(_parse_timestamp(row[0], line_no))
            for j, cell in enumerate(row[1:]):
                cell = cell.strip()
                columns[j].append(float(cell) if cell else np.nan)
    if not times:
        raise InputError(f"{path}: no data rows")
    for a, b in zip(times, times[1:]):
        if (b - a).total_seconds() != STEP_SECONDS:
            raise InputError(f"{path}: non-hourly step at {b.isoformat()}")
    channels = {n: np.asarray(c, dtype=np.float64) for n, c in zip(names, columns)}
    return UniformSeries(origin=times[0], channels=channels)
