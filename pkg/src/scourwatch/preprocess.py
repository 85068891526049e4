"""Cleaning chain for gridded sensor series: gap-aware median filtering,
moving average, zero-phase low-pass, gap imputation (polynomial for short
gaps, Gaussian-process posterior mean for long ones), and reversible
standard normalization.

The chain order is fixed: median filter -> impute -> moving average ->
low-pass -> (normalize later, with stats from the training split only).
Gaps longer than the hard cap split the series into independent segments;
this is how frozen-season blackouts are handled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import GapError, ParameterError

DEFAULT_MAX_GAP_SAMPLES = 60 * 24  # 60 days of hourly data


@dataclass(frozen=True)
class FilterSpec:
    median_window: int = 5
    ma_window: int = 6
    lowpass_cutoff: float = 1.0 / 24.0  # cycles per sample (hourly grid)
    lowpass_order: int = 2

    def __post_init__(self):
        if self.median_window < 3 or self.median_window % 2 == 0:
            raise ParameterError("median_window must be odd and >= 3")
        if self.ma_window < 1:
            raise ParameterError("ma_window must be >= 1")
        if not 0.0 < self.lowpass_cutoff < 0.5:
            raise ParameterError("lowpass_cutoff must be in (0, 0.5) cycles/sample")
        if self.lowpass_order < 1:
            raise ParameterError("lowpass_order must be >= 1")


@dataclass(frozen=True)
class ImputeSpec:
    short_gap_max: int = 6
    poly_degree: int = 3
    gp_length_scale: float = 48.0  # samples (hours)
    gp_signal_variance: float = 1.0
    gp_noise_variance: float = 1e-4
    gp_context: int = 72  # present samples taken on each side of a gap
    max_gap_samples: int = DEFAULT_MAX_GAP_SAMPLES

    def __post_init__(self):
        if self.short_gap_max < 1:
            raise ParameterError("short_gap_max must be >= 1")
        if self.poly_degree < 1:
            raise ParameterError("poly_degree must be >= 1")
        if self.gp_length_scale <= 0:
            raise ParameterError("gp_length_scale must be > 0")
        if self.gp_signal_variance <= 0 or self.gp_noise_variance <= 0:
            raise ParameterError("gp variances must be > 0")
        if self.gp_context < 2:
            raise ParameterError("gp_context must be >= 2")


def _nan_windows(values: np.ndarray, window: int, center_left: bool) -> np.ndarray:
    """Sliding windows of `values` padded with NaN so edges truncate."""
    half_left = (window - 1) // 2 if center_left else window // 2
    half_right = window - 1 - half_left
    padded = np.concatenate(
        [np.full(half_left, np.nan), values, np.full(half_right, np.nan)]
    )
    return np.lib.stride_tricks.sliding_window_view(padded, window)


def median_filter(channel: np.ndarray, window: int) -> np.ndarray:
    """Sliding median that skips gaps and truncates at edges.

    Even present-counts take the lower median (no averaging), so values in
    the output always occur in the input. Gap positions stay gaps.
    """
    if window % 2 == 0:
        raise ParameterError("median window must be odd")
    if window < 3:
        raise ParameterError("median window must be >= 3")
    values = np.asarray(channel, dtype=np.float64)
    wins = np.sort(_nan_windows(values, window, center_left=True), axis=1)
    counts = np.sum(~np.isnan(wins), axis=1)
    out = np.full_like(values, np.nan)
    present = ~np.isnan(values)
    rows = np.nonzero(present)[0]
    out[rows] = wins[rows, (counts[rows] - 1) // 2]
    return out


def moving_average(channel: np.ndarray, window: int) -> np.ndarray:
    """Centered mean over present values; even windows extend one sample
    further into the future. Gap positions stay gaps."""
    if window < 1:
        raise ParameterError("moving-average window must be >= 1")
    values = np.asarray(channel, dtype=np.float64)
    if window == 1:
        return values.copy()
    wins = _nan_windows(values, window, center_left=True)
    counts = np.sum(~np.isnan(wins), axis=1)
    sums = np.nansum(wins, axis=1)
    out = np.full_like(values, np.nan)
    present = ~np.isnan(values) & (counts > 0)
    out[present] = sums[present] / counts[present]
    return out


def lowpass_filter(channel: np.ndarray, cutoff: float, order: int) -> np.ndarray:
    """Zero-phase (forward-backward) Butterworth low-pass, DC gain 1.

    `cutoff` is in cycles per sample. The segment must be gap-free; filter
    each maximal gap-free segment independently if not.
    """
    if not 0.0 < cutoff < 0.5:
        raise ParameterError("cutoff must be in (0, 0.5) cycles/sample")
    if order < 1:
        raise ParameterError("filter order must be >= 1")
    values = np.asarray(channel, dtype=np.float64)
    if np.isnan(values).any():
        raise GapError(
            "low-pass input contains gaps; impute first or filter per segment"
        )
    sos = butter(order, 2.0 * cutoff, btype="low", output="sos")
    padlen = min(3 * (2 * len(sos) + 1), len(values) - 1)
    if padlen < 1:
        return values.copy()
    return sosfiltfilt(sos, values, padlen=padlen)


def _gap_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) runs of True in `mask`."""
    runs = []
    n = len(mask)
    i = 0
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def _context_indices(
    present: np.ndarray, start: int, end: int, n_each_side: int
) -> np.ndarray:
    left = np.nonzero(present[:start])[0][-n_each_side:]
    right = end + np.nonzero(present[end:])[0][:n_each_side]
    return np.concatenate([left, right])


def _poly_fill(values, present, start, end, degree):
    ctx = _context_indices(present, start, end, 2 * (degree + 1))
    deg = min(degree, len(ctx) - 1)
    center = 0.5 * (start + end)  # centered abscissa keeps the fit conditioned
    coeffs = np.polynomial.polynomial.polyfit(
        ctx.astype(np.float64) - center, values[ctx], deg
    )
    xs = np.arange(start, end, dtype=np.float64) - center
    return np.polynomial.polynomial.polyval(xs, coeffs)


def _se_kernel(a: np.ndarray, b: np.ndarray, length_scale: float, variance: float):
    d = a[:, None] - b[None, :]
    return variance * np.exp(-0.5 * (d / length_scale) ** 2)


def _gp_fill(values, present, start, end, spec: ImputeSpec):
    ctx = _context_indices(present, start, end, spec.gp_context)
    if len(ctx) < 4:
        return _poly_fill(values, present, start, end, 1)
    x = ctx.astype(np.float64)
    y = values[ctx]
    mean = y.mean()
    k = _se_kernel(x, x, spec.gp_length_scale, spec.gp_signal_variance)
    k[np.diag_indices_from(k)] += spec.gp_noise_variance + 1e-8
    chol = np.linalg.cholesky(k)
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y - mean))
    xs = np.arange(start, end, dtype=np.float64)
    k_star = _se_kernel(xs, x, spec.gp_length_scale, spec.gp_signal_variance)
    return mean + k_star @ alpha


def impute(
    channel: np.ndarray, spec: ImputeSpec
) -> tuple[np.ndarray, np.ndarray, tuple[int, int]]:
    """Fill internal gaps; trim leading/trailing ones.

    Gaps of length <= short_gap_max get a local least-squares polynomial,
    longer ones the GP posterior mean conditioned on gp_context present
    samples each side. Gaps beyond max_gap_samples raise GapError: split
    the series instead of inventing two months of readings.

    Returns (gap-free values, imputed mask, (n_trimmed_lead, n_trimmed_trail)).
    """
    values = np.asarray(channel, dtype=np.float64)
    present = ~np.isnan(values)
    if not present.any():
        raise GapError("channel has no present samples")
    first = int(np.argmax(present))
    last = int(len(values) - np.argmax(present[::-1]))
    trim = (first, len(values) - last)
    values = values[first:last].copy()
    present = present[first:last]
    imputed = np.zeros(len(values), dtype=bool)
    for start, end in _gap_runs(~present):
        length = end - start
        if length > spec.max_gap_samples:
            raise GapError(
                f"gap of {length} samples exceeds cap {spec.max_gap_samples}; "
                "split the series at this gap"
            )
        if length <= spec.short_gap_max:
            fill = _poly_fill(values, present, start, end, spec.poly_degree)
        else:
            fill = _gp_fill(values, present, start, end, spec)
        values[start:end] = fill
        imputed[start:end] = True
    return values, imputed, trim


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean/std, computed on the training split only."""

    channel_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(self.std <= 0) or not np.all(np.isfinite(self.std)):
            raise ParameterError("normalization std must be positive and finite")

    def index_of(self, name: str) -> int:
        return self.channel_names.index(name)


def normalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """(x - mean) / std along the last (channel) axis."""
    return (np.asarray(values, dtype=np.float64) - stats.mean) / stats.std


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * stats.std + stats.mean


@dataclass
class Segment:
    """A contiguous gap-free stretch of the processed series."""

    start: int  # index on the uniform hourly grid
    values: np.ndarray  # [length, n_channels]
    imputed: np.ndarray  # [length, n_channels] bool

    @property
    def length(self) -> int:
        return len(self.values)

    @property
    def end(self) -> int:
        return self.start + len(self.values)


@dataclass
class ProcessedSeries:
    origin: datetime
    step_seconds: int
    channel_names: list[str]
    segments: list[Segment]
    report: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return max(s.end for s in self.segments) if self.segments else 0

    def timestamp_at(self, index: int) -> datetime:
        return self.origin + timedelta(seconds=index * self.step_seconds)

    def channel_index(self, name: str) -> int:
        return self.channel_names.index(name)


def compute_norm_stats(series: ProcessedSeries, train_end: int) -> NormStats:
    """Stats over all segment samples with grid index < train_end.

    Taking the boundary as an argument (instead of a split object) keeps the
    leakage guard structural: callers can only ever normalize with
    training-range statistics.
    """
    rows = [
        seg.values[: max(0, min(seg.length, train_end - seg.start))]
        for seg in series.segments
    ]
    data = np.concatenate([r for r in rows if len(r)], axis=0)
    if len(data) < 2:
        raise ParameterError("training range too short to compute statistics")
    mean = data.mean(axis=0)
    std = data.std(axis=0, ddof=0)
    return NormStats(tuple(series.channel_names), mean, std)


def normalize_series(series: ProcessedSeries, stats: NormStats) -> ProcessedSeries:
    if tuple(series.channel_names) != stats.channel_names:
        raise ParameterError("normalization stats do not match series channels")
    segments = [
        Segment(s.start, normalize(s.values, stats), s.imputed.copy())
        for s in series.segments
    ]
    return ProcessedSeries(
        series.origin, series.step_seconds, list(series.channel_names), segments,
        dict(series.report),
    )


CANONICAL_ORDER = ("sonar", "stage", "discharge")


def preprocess_series(
    uniform,
    filter_spec: FilterSpec | None = None,
    impute_spec: ImputeSpec | None = None,
    outlier_report_threshold: float = 0.1,
) -> ProcessedSeries:
    """Run the full cleaning chain on a UniformSeries.

    Long gaps (beyond the impute cap, in any channel) cut the timeline into
    segments; each segment is trimmed until every channel is present at both
    ends, then imputed, smoothed, and low-pass filtered per channel.
    """
    filter_spec = filter_spec or FilterSpec()
    impute_spec = impute_spec or ImputeSpec()
    names = [n for n in CANONICAL_ORDER if n in uniform.channels]
    if not names:
        raise ParameterError("series has no known channels")
    n = uniform.n_steps

    filtered = {}
    outliers = {}
    for name in names:
        raw = uniform.channels[name]
        med = median_filter(raw, filter_spec.median_window)
        delta = np.abs(med - raw)
        outliers[name] = int(np.sum(delta > outlier_report_threshold))
        filtered[name] = med

    # Cut wherever any channel has an uncloseable gap.
    cut = np.zeros(n, dtype=bool)
    for name in names:
        mask = np.isnan(filtered[name])
        for start, end in _gap_runs(mask):
            if end - start > impute_spec.max_gap_samples:
                cut[start:end] = True

    segments: list[Segment] = []
    imputed_count = 0
    trimmed_count = 0
    for seg_start, seg_end in _gap_runs(~cut):
        all_present = np.ones(seg_end - seg_start, dtype=bool)
        for name in names:
            all_present &= ~np.isnan(filtered[name][seg_start:seg_end])
        if not all_present.any():
            trimmed_count += seg_end - seg_start
            continue
        lead = int(np.argmax(all_present))
        trail = int(np.argmax(all_present[::-1]))
        lo, hi = seg_start + lead, seg_end - trail
        trimmed_count += lead + trail
        min_len = 2 * max(filter_spec.median_window, filter_spec.ma_window)
        if hi - lo < min_len:
            trimmed_count += hi - lo
            continue
        cols = []
        masks = []
        for name in names:
            window = filtered[name][lo:hi]
            values, mask, trim = impute(window, impute_spec)
            if trim != (0, 0):  # cannot happen: ends are all-present
                raise GapError(f"unexpected edge gap in {name} at {lo}")
            imputed_count += int(mask.sum())
            values = moving_average(values, filter_spec.ma_window)
            values = lowpass_filter(
                values, filter_spec.lowpass_cutoff, filter_spec.lowpass_order
            )
            cols.append(values)
            masks.append(mask)
        segments.append(
            Segment(lo, np.column_stack(cols), np.column_stack(masks))
        )
    if not segments:
        raise GapError("no usable segments after gap splitting")
    report = {
        "outliers_replaced": outliers,
        "samples_imputed": imputed_count,
        "samples_trimmed": trimmed_count,
        "segments": len(segments),
        "segment_spans": [(s.start, s.end) for s in segments],
    }
    return ProcessedSeries(
        origin=uniform.origin,
        step_seconds=uniform.step_seconds,
        channel_names=names,
        segments=segments,
        report=report,
    )


def write_processed_csv(series: ProcessedSeries, path) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        header = ["segment", "index", "timestamp"]
        header += series.channel_names
        header += [f"imputed_{n}" for n in series.channel_names]
        writer.writerow(header)
        for si, seg in enumerate(series.segments):
            for i in range(seg.length):
                idx = seg.start + i
                ts = series.timestamp_at(idx).strftime("%Y-%m-%dT%H:%M:%SZ")
                row = [si, idx, ts]
                row += [format(v, ".12g") for v in seg.values[i]]
                row += [int(v) for v in seg.imputed[i]]
                writer.writerow(row)


def read_processed_csv(path) -> ProcessedSeries:
    import csv as _csv

    from .ingest import _parse_timestamp

    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        n_named = (len(header) - 3) // 2
        names = header[3 : 3 + n_named]
        rows = list(reader)
    if not rows:
        raise GapError(f"{path}: no data rows")
    origin_ts = None
    segments: list[Segment] = []
    cur_seg = None
    cur_vals: list[list[float]] = []
    cur_imp: list[list[int]] = []
    cur_start = 0
    for row in rows:
        si = int(row[0])
        idx = int(row[1])
        ts = _parse_timestamp(row[2], 0)
        if origin_ts is None:
            origin_ts = ts - timedelta(hours=idx)
        if cur_seg is None or si != cur_seg:
            if cur_seg is not None:
                segments.append(
                    Segment(
                        cur_start,
                        np.asarray(cur_vals, dtype=np.float64),
                        np.asarray(cur_imp, dtype=bool),
                    )
                )
            cur_seg, cur_start, cur_vals, cur_imp = si, idx, [], []
        cur_vals.append([float(v) for v in row[3 : 3 + n_named]])
        cur_imp.append([int(v) for v in row[3 + n_named :]])
    segments.append(
        Segment(
            cur_start,
            np.asarray(cur_vals, dtype=np.float64),
            np.asarray(cur_imp, dtype=bool),
        )
    )
    return ProcessedSeries(
        origin=origin_ts,
        step_seconds=3600,
        channel_names=names,
        segments=segments,
    )
