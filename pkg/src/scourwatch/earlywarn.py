"""Early-warning products from a trained ensemble: rolling forecasts over
held-out data, empirical 95% bands, max-scour-depth distributions per
forecast window, exceedance-based alerting, summary error metrics, and the
reduced HEC-18 fixed-point solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .dataset import WindowSet, batches
from .errors import ParameterError
from .preprocess import NormStats

# flow-depth exponent after folding Manning velocity into the pier equation:
# 0.13 from depth directly, 0.43 * 0.67 through velocity ~ depth^0.67
P_EXPONENT = 0.13 + 0.43 * 0.67


@dataclass(frozen=True)
class SurrogateConstants:
    """Bridge-specific constants reducing the pier-scour equation to
    y_s = eta * (spread - y_s)^p. Component constants, when all given,
    override a directly supplied eta."""

    eta: float | None = None
    alpha: float | None = None
    slope: float | None = None
    manning_n: float | None = None
    mu: float | None = None

    @property
    def beta(self) -> float:
        if self.slope is None or self.manning_n is None:
            raise ParameterError("beta needs slope and manning_n")
        if self.slope <= 0 or self.manning_n <= 0:
            raise ParameterError("slope and manning_n must be positive")
        return np.sqrt(self.slope) / self.manning_n

    @property
    def eta_value(self) -> float:
        components = (self.alpha, self.slope, self.manning_n, self.mu)
        if all(v is not None for v in components):
            if self.alpha <= 0 or self.mu <= 0:
                raise ParameterError("alpha and mu must be positive")
            return self.alpha * self.beta**0.43 * self.mu ** (0.43 * 0.67)
        if self.eta is None:
            raise ParameterError("need eta or all of (alpha, slope, manning_n, mu)")
        if self.eta < 0:
            raise ParameterError("eta must be >= 0")
        return self.eta


def hec18_surrogate(constants, y_st_max: float, y_so_min: float) -> float:
    """Solve y_s = eta * (d - y_s)^p with d = y_st_max - y_so_min.

    Bisection on [0, d]; the left side increases and the right side
    decreases in y_s, so the root is unique. Residual < 1e-10 for any
    moderate eta.
    """
    eta = constants.eta_value if isinstance(constants, SurrogateConstants) else float(constants)
    if eta < 0:
        raise ParameterError("eta must be >= 0")
    d = y_st_max - y_so_min
    if d <= 0:
        raise ParameterError(f"stage-sonar spread must be positive, got {d}")
    if eta == 0.0:
        return 0.0
    lo, hi = 0.0, d
    mid = 0.5 * d
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        residual = mid - eta * (d - mid) ** P_EXPONENT
        if abs(residual) < 1e-12:
            return mid
        if residual < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17 * max(1.0, d):
            break
    return mid


@dataclass
class RollingForecast:
    """Per-origin ensemble predictions over a held-out range, in meters.

    `origins` holds the grid index of the first predicted step of each
    window; predictions are [n_origins, n_members, label_width, 2] with the
    label channels in `channels` order (sonar first).
    """

    origins: np.ndarray
    predictions: np.ndarray
    actuals: np.ndarray
    channels: tuple[str, str]
    skipped: int = 0


def rolling_forecast(
    members,
    windows: WindowSet,
    stats: NormStats,
    origin_stride: int = 1,
    batch_size: int = 64,
) -> RollingForecast:
    """Every ensemble member predicts at every valid origin (stride
    configurable); outputs are denormalized to physical units."""
    if not members:
        raise ParameterError("ensemble has no members")
    combo = windows.matrix.combo
    label_names = combo.label_channels
    scale = np.array([stats.std[stats.index_of(c)] for c in label_names])
    shift = np.array([stats.mean[stats.index_of(c)] for c in label_names])
    spec = windows.spec
    entries = windows.entries[::origin_stride]
    sub = WindowSet(windows.split, spec, windows.matrix, list(entries))
    n = len(sub)
    k = len(members)
    preds = np.empty((n, k, spec.label_width, 2))
    actuals = np.empty((n, spec.label_width, 2))
    row = 0
    for X, Y, exo in batches(sub, batch_size):
        b = len(X)
        actuals[row : row + b] = Y * scale + shift
        for mi, model in enumerate(members):
            p = model.forward(X, exo=exo, training=False)
            preds[row : row + b, mi] = p * scale + shift
        row += b
    origins = np.array([start + spec.input_width for _, start in entries], dtype=np.int64)
    return RollingForecast(
        origins=origins,
        predictions=preds,
        actuals=actuals,
        channels=label_names,
        skipped=len(windows) - n,
    )


@dataclass
class ForecastBand:
    """Ensemble mean and empirical 95% band for one forecast window."""

    origin: int
    mean: np.ndarray  # [label_width, 2]
    lower: np.ndarray
    upper: np.ndarray
    has_bands: bool

    def __post_init__(self):
        if self.has_bands:
            # widen degenerate bands so lower <= mean <= upper always holds
            self.lower = np.minimum(self.lower, self.mean)
            self.upper = np.maximum(self.upper, self.mean)


def band(member_predictions: np.ndarray, origin: int = 0) -> ForecastBand:
    """2.5/97.5 empirical percentiles across members around the mean."""
    member_predictions = np.asarray(member_predictions)
    k = member_predictions.shape[0]
    if k < 1:
        raise ParameterError("need at least one member prediction")
    mean = member_predictions.mean(axis=0)
    if k == 1:
        nan = np.full_like(mean, np.nan)
        return ForecastBand(origin, mean, nan, nan, has_bands=False)
    lower = np.percentile(member_predictions, 2.5, axis=0)
    upper = np.percentile(member_predictions, 97.5, axis=0)
    return ForecastBand(origin, mean, lower, upper, has_bands=True)


def aggregate_curves(rf: RollingForecast, n_steps: int | None = None):
    """Collapse overlapping origins for display: per absolute time step,
    mean / 2.5% / 97.5% over every (origin, member) sample covering it.

    Returns (times, mean, lower, upper, actual) arrays; NaN where nothing
    covers a step.
    """
    if n_steps is None:
        n_steps = int(rf.origins.max()) + rf.predictions.shape[2]
    t0 = int(rf.origins.min())
    span = n_steps - t0
    buckets: list[list[np.ndarray]] = [[] for _ in range(span)]
    actual = np.full((span, 2), np.nan)
    label_width = rf.predictions.shape[2]
    for i, origin in enumerate(rf.origins):
        for step in range(label_width):
            t = origin + step - t0
            if 0 <= t < span:
                buckets[t].append(rf.predictions[i, :, step, :])
                actual[t] = rf.actuals[i, step, :]
    mean = np.full((span, 2), np.nan)
    lower = np.full((span, 2), np.nan)
    upper = np.full((span, 2), np.nan)
    for t, rows in enumerate(buckets):
        if not rows:
            continue
        samples = np.concatenate(rows, axis=0)
        mean[t] = samples.mean(axis=0)
        if len(samples) > 1:
            lower[t] = np.percentile(samples, 2.5, axis=0)
            upper[t] = np.percentile(samples, 97.5, axis=0)
        else:
            lower[t] = upper[t] = samples[0]
    times = np.arange(t0, n_steps)
    return times, mean, lower, upper, actual


def max_scour_distribution(
    member_predictions: np.ndarray, datum: float, sonar_channel: int = 0
) -> np.ndarray:
    """One max-scour-depth sample per member: datum minus the member's
    minimum predicted bed elevation over the forecast window."""
    member_predictions = np.asarray(member_predictions)
    return datum - member_predictions[:, :, sonar_channel].min(axis=1)


def exceedance(samples: np.ndarray, threshold: float) -> float:
    """Fraction of samples strictly greater than the threshold."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ParameterError("empty distribution")
    return float(np.mean(samples > threshold))


@dataclass
class AlertReport:
    origin: int
    window: tuple[int, int]
    datum: float
    samples: np.ndarray  # max scour depth per member, m
    thresholds: list[float]
    exceedance_probs: list[float]
    target_exceedance: float
    scour_at_target: float
    embedment_m: float
    residual_embedment_m: float
    level: str


def build_alert_report(
    member_predictions: np.ndarray,
    origin: int,
    datum: float,
    embedment_m: float,
    thresholds: list[float],
    target_exceedance: float = 0.10,
    watch_exceedance: float = 0.01,
    alert_threshold_m: float | None = None,
) -> AlertReport:
    """Convert one forecast window's ensemble into an alert decision.

    The alert level compares the probability of scour exceeding the
    (embedment-based) alert threshold against the critical/watch targets.
    Residual embedment subtracts the scour depth at the target exceedance
    probability from the as-built embedment.
    """
    if embedment_m <= 0:
        raise ParameterError("embedment depth must be positive")
    samples = max_scour_distribution(member_predictions, datum)
    label_width = member_predictions.shape[1]
    thresholds = sorted(thresholds)  # so probabilities are monotone by row
    probs = [exceedance(samples, t) for t in thresholds]
    scour_at_target = float(np.percentile(samples, 100.0 * (1.0 - target_exceedance)))
    threshold = alert_threshold_m if alert_threshold_m is not None else embedment_m
    p_alert = exceedance(samples, threshold)
    if p_alert >= target_exceedance:
        level = "critical"
    elif p_alert >= watch_exceedance:
        level = "watch"
    else:
        level = "normal"
    return AlertReport(
        origin=origin,
        window=(origin, origin + label_width - 1),
        datum=datum,
        samples=samples,
        thresholds=list(thresholds),
        exceedance_probs=probs,
        target_exceedance=target_exceedance,
        scour_at_target=scour_at_target,
        embedment_m=embedment_m,
        residual_embedment_m=embedment_m - scour_at_target,
        level=level,
    )


def scour_error_percent(sonar_mae: float, max_scour_depth: float) -> float:
    if max_scour_depth <= 0:
        raise ParameterError("max scour depth must be positive")
    return 100.0 * sonar_mae / max_scour_depth


@dataclass
class ErrorSummary:
    sonar_mae: float
    stage_mae: float
    max_scour_depth: float
    scour_error_pct: float
    trough_mean_error: float  # max |mean - actual| over scour troughs
    trough_lb_error: float
    peak_mean_error: float  # max |mean - actual| over filling peaks
    peak_ub_error: float
    n_troughs: int
    n_peaks: int


def summarize_errors(
    mean_curve: np.ndarray,
    lower_curve: np.ndarray,
    upper_curve: np.ndarray,
    actual_curve: np.ndarray,
    max_scour_depth: float | None = None,
    extremum_separation: int = 168,
) -> ErrorSummary:
    """Summary metrics over aligned aggregated curves ([T, 2], sonar first).

    Scour troughs / filling peaks are local extrema of the actual bed
    elevation separated by at least `extremum_separation` steps (7 days on
    the hourly grid). NaN steps (uncovered by any forecast) are ignored.
    """
    covered = ~np.isnan(mean_curve[:, 0]) & ~np.isnan(actual_curve[:, 0])
    if not covered.any():
        raise ParameterError("no covered steps to summarize")
    err = mean_curve[covered] - actual_curve[covered]
    sonar_mae = float(np.mean(np.abs(err[:, 0])))
    stage_mae = float(np.mean(np.abs(err[:, 1])))
    actual_sonar = actual_curve[:, 0].copy()
    if max_scour_depth is None:
        lo = np.nanmin(actual_sonar)
        hi = np.nanmax(actual_sonar)
        max_scour_depth = float(hi - lo)
    filled = np.where(np.isnan(actual_sonar), np.nanmean(actual_sonar), actual_sonar)
    troughs, _ = find_peaks(-filled, distance=extremum_separation)
    peaks, _ = find_peaks(filled, distance=extremum_separation)
    troughs = [t for t in troughs if covered[t]]
    peaks = [t for t in peaks if covered[t]]

    def _max_err(indices, curve):
        vals = [
            abs(curve[t, 0] - actual_sonar[t])
            for t in indices
            if not np.isnan(curve[t, 0])
        ]
        return float(max(vals)) if vals else 0.0

    return ErrorSummary(
        sonar_mae=sonar_mae,
        stage_mae=stage_mae,
        max_scour_depth=max_scour_depth,
        scour_error_pct=scour_error_percent(sonar_mae, max_scour_depth),
        trough_mean_error=_max_err(troughs, mean_curve),
        trough_lb_error=_max_err(troughs, lower_curve),
        peak_mean_error=_max_err(peaks, mean_curve),
        peak_ub_error=_max_err(peaks, upper_curve),
        n_troughs=len(troughs),
        n_peaks=len(peaks),
    )
