"""Feature assembly and window slicing.

Feature combos fix the channel order (sonar is always channel 0, label
channels are always the first two). Cyclic time-of-year features are added
after normalization since sin/cos are already bounded. Windows are cut with
stride 1 inside each (segment x split-range) overlap, so no window crosses
a frozen-season trim or a split boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import ParameterError
from .preprocess import ProcessedSeries, Segment

YEAR_DAYS = 365.2425
TIME_CHANNELS = ("year_sin", "year_cos")

_COMBO_CHANNELS = {
    "ss": ("sonar", "stage"),
    "ssy": ("sonar", "stage", "year_sin", "year_cos"),
    "ssd": ("sonar", "stage", "discharge"),
    "sd": ("sonar", "discharge"),
}


@dataclass(frozen=True)
class FeatureCombo:
    code: str

    def __post_init__(self):
        if self.code not in _COMBO_CHANNELS:
            raise ParameterError(f"unknown feature combo {self.code!r}")

    @property
    def channels(self) -> tuple[str, ...]:
        return _COMBO_CHANNELS[self.code]

    @property
    def label_channels(self) -> tuple[str, ...]:
        # the forecast targets: always the first two channels
        return self.channels[:2]

    @property
    def n_features(self) -> int:
        return len(self.channels)


N_LABEL_FEATURES = 2


@dataclass(frozen=True)
class WindowSpec:
    input_width: int
    label_width: int

    def __post_init__(self):
        if self.input_width < 1 or self.label_width < 1:
            raise ParameterError("window widths must be >= 1")

    @property
    def total_width(self) -> int:
        return self.input_width + self.label_width  # offset equals label width


def year_fraction(ts: datetime) -> float:
    """Fraction of a 365.2425-day year elapsed since Jan 1 00:00 UTC."""
    ts = ts.astimezone(timezone.utc)
    jan1 = datetime(ts.year, 1, 1, tzinfo=timezone.utc)
    return (ts - jan1).total_seconds() / (YEAR_DAYS * 86400.0)


def time_features(tau) -> tuple[float, float]:
    angle = 2.0 * math.pi * tau
    return math.sin(angle), math.cos(angle)


def add_time_features(series: ProcessedSeries) -> ProcessedSeries:
    """Append year_sin / year_cos channels computed from segment timestamps."""
    if TIME_CHANNELS[0] in series.channel_names:
        return series
    segments = []
    for seg in series.segments:
        taus = np.array(
            [year_fraction(series.timestamp_at(seg.start + i)) for i in range(seg.length)]
        )
        angles = 2.0 * np.pi * taus
        extra = np.column_stack([np.sin(angles), np.cos(angles)])
        values = np.column_stack([seg.values, extra])
        imputed = np.column_stack(
            [seg.imputed, np.zeros((seg.length, 2), dtype=bool)]
        )
        segments.append(Segment(seg.start, values, imputed))
    return ProcessedSeries(
        series.origin,
        series.step_seconds,
        list(series.channel_names) + list(TIME_CHANNELS),
        segments,
        dict(series.report),
    )


@dataclass(frozen=True)
class SplitRanges:
    """Half-open index ranges on the uniform grid: train | validation | test."""

    train: tuple[int, int]
    validation: tuple[int, int]
    test: tuple[int, int]

    def range_of(self, split: str) -> tuple[int, int]:
        return getattr(self, split)


def chronological_split(n_steps: int, test_steps: int, val_steps: int) -> SplitRanges:
    """Last `test_steps` are test, the span before is validation, rest train."""
    if test_steps < 1 or val_steps < 1:
        raise ParameterError("test and validation spans must be >= 1 step")
    train_end = n_steps - test_steps - val_steps
    if train_end < 1:
        raise ParameterError(
            f"series too short: {n_steps} steps, need more than "
            f"{test_steps + val_steps} for a nonempty training range"
        )
    return SplitRanges(
        train=(0, train_end),
        validation=(train_end, train_end + val_steps),
        test=(train_end + val_steps, n_steps),
    )


class FeatureMatrix:
    """Per-segment [length, n_features] arrays, channels ordered per combo."""

    def __init__(self, series: ProcessedSeries, combo: FeatureCombo):
        missing = [c for c in combo.channels if c not in series.channel_names]
        if missing:
            raise ParameterError(
                f"series lacks channels {missing} required by combo {combo.code}"
            )
        idx = [series.channel_names.index(c) for c in combo.channels]
        self.combo = combo
        self.origin = series.origin
        self.step_seconds = series.step_seconds
        self.segment_starts = [s.start for s in series.segments]
        self.segments = [np.ascontiguousarray(s.values[:, idx]) for s in series.segments]

    @property
    def n_features(self) -> int:
        return self.combo.n_features


@dataclass
class WindowSet:
    """Sliding windows of one split: (segment, global start index) pairs."""

    split: str
    spec: WindowSpec
    matrix: FeatureMatrix
    entries: list[tuple[int, int]]  # (segment index, global start)

    def __len__(self) -> int:
        return len(self.entries)

    def materialize(self, order=None):
        """Stack windows into (inputs, labels, future_exo) arrays.

        future_exo covers the non-label channels over the label steps: time
        channels take their (deterministic) true values; any other exogenous
        channel (discharge) is held at its last observed input value.
        """
        if order is None:
            order = range(len(self.entries))
        spec = self.spec
        combo = self.matrix.combo
        n_exo = combo.n_features - N_LABEL_FEATURES
        xs, ys, exos = [], [], []
        exo_names = combo.channels[N_LABEL_FEATURES:]
        for k in order:
            seg_idx, gstart = self.entries[k]
            seg = self.matrix.segments[seg_idx]
            rel = gstart - self.matrix.segment_starts[seg_idx]
            block = seg[rel : rel + spec.total_width]
            xs.append(block[: spec.input_width])
            ys.append(block[spec.input_width :, :N_LABEL_FEATURES])
            if n_exo:
                exo = block[spec.input_width :, N_LABEL_FEATURES:].copy()
                for j, name in enumerate(exo_names):
                    if name not in TIME_CHANNELS:
                        exo[:, j] = block[spec.input_width - 1, N_LABEL_FEATURES + j]
                exos.append(exo)
        x = np.stack(xs) if xs else np.zeros((0, spec.input_width, combo.n_features))
        y = np.stack(ys) if ys else np.zeros((0, spec.label_width, N_LABEL_FEATURES))
        if n_exo:
            exo = np.stack(exos) if exos else np.zeros((0, spec.label_width, n_exo))
        else:
            exo = np.zeros((len(xs), spec.label_width, 0))
        return x, y, exo


def window_count(length: int, spec: WindowSpec) -> int:
    return max(0, length - spec.total_width + 1)


def make_windows(
    matrix: FeatureMatrix, spec: WindowSpec, ranges: SplitRanges
) -> dict[str, WindowSet]:
    """Stride-1 windows for each split, never crossing segment or split edges."""
    out = {}
    for split in ("train", "validation", "test"):
        lo, hi = ranges.range_of(split)
        entries: list[tuple[int, int]] = []
        for seg_idx, seg in enumerate(matrix.segments):
            s = matrix.segment_starts[seg_idx]
            a, b = max(s, lo), min(s + len(seg), hi)
            if b <= a:
                continue
            for start in range(a, b - spec.total_width + 1):
                entries.append((seg_idx, start))
        out[split] = WindowSet(split, spec, matrix, entries)
    return out


class WindowFactory:
    """Normalizes a processed series once and hands out window sets per
    (combo, window-spec), memoized; shared by grid-search runs."""

    def __init__(self, series: ProcessedSeries, test_steps: int, val_steps: int):
        from .preprocess import compute_norm_stats, normalize_series

        self.ranges = chronological_split(series.n_steps, test_steps, val_steps)
        self.stats = compute_norm_stats(series, self.ranges.train[1])
        self.normalized = add_time_features(normalize_series(series, self.stats))
        self._matrices: dict[str, FeatureMatrix] = {}
        self._windows: dict[tuple, dict[str, WindowSet]] = {}

    def matrix(self, combo_code: str) -> FeatureMatrix:
        if combo_code not in self._matrices:
            self._matrices[combo_code] = FeatureMatrix(
                self.normalized, FeatureCombo(combo_code)
            )
        return self._matrices[combo_code]

    def windows(self, combo_code: str, spec: WindowSpec) -> dict[str, WindowSet]:
        key = (combo_code, spec.input_width, spec.label_width)
        if key not in self._windows:
            self._windows[key] = make_windows(self.matrix(combo_code), spec, self.ranges)
        return self._windows[key]


def batches(windows: WindowSet, batch_size: int, shuffle_seed=None):
    """Yield (inputs, labels, future_exo) batches.

    With a seed, windows are drawn in seeded-shuffled order (training); the
    final partial batch is kept. Without one, order is deterministic.
    """
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")
    n = len(windows)
    order = np.arange(n)
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(order)
    for i in range(0, n, batch_size):
        yield windows.materialize(order[i : i + batch_size])
