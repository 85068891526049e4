"""Synthetic bridge-monitoring data with known ground truth.

Stage follows a seasonal cycle plus two seeded flood pulses per year
(midsummer and early fall); bed elevation scours toward the fixed-point
surrogate target during high flow and relaxes back (filling) afterwards.
The raw output adds noise, outliers, random dropouts, and frozen-season
blackouts; the ground truth stays clean and gap-free so every downstream
stage can be scored.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .dataset import year_fraction
from .earlywarn import P_EXPONENT
from .errors import ParameterError
from .ingest import STEP_SECONDS, RawReading, UniformSeries

FROZEN_MONTHS = (11, 12, 1, 2, 3)  # Nov 1 - Mar 31


@dataclass(frozen=True)
class SynthSpec:
    years: int = 2
    start_year: int = 2013
    base_bed_m: float = 34.0
    base_stage_m: float = 36.0
    seasonal_amp_m: float = 1.2
    seasonal_peak_tau: float = 0.55  # fraction of year, ~mid July
    flood_center_days: tuple[float, float] = (213.0, 274.0)  # ~Aug 1, ~Oct 1
    flood_magnitude_m: float = 3.0
    flood_duration_days: float = 12.0
    flood_jitter_days: float = 10.0
    eta: float = 2.2
    scour_tau_days: float = 2.0
    fill_tau_days: float = 20.0
    discharge_coeff: float = 8.0
    noise_std_m: float = 0.05
    outlier_rate: float = 0.003
    outlier_mag_m: float = 2.5
    missing_rate: float = 0.005
    frozen: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.years < 1:
            raise ParameterError("years must be >= 1")
        for name in ("seasonal_amp_m", "flood_magnitude_m", "flood_duration_days",
                     "flood_jitter_days", "noise_std_m", "outlier_rate",
                     "outlier_mag_m", "missing_rate", "eta"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")


def hec18_vector(eta: float, spread: np.ndarray) -> np.ndarray:
    """Vectorized fixed point y = eta * (spread - y)^p by bisection."""
    d = np.maximum(np.asarray(spread, dtype=np.float64), 1e-9)
    if eta == 0.0:
        return np.zeros_like(d)
    lo = np.zeros_like(d)
    hi = d.copy()
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        neg = mid - eta * (d - mid) ** P_EXPONENT < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


def _timeline(spec: SynthSpec):
    origin = datetime(spec.start_year, 1, 1, tzinfo=timezone.utc)
    end = datetime(spec.start_year + spec.years, 1, 1, tzinfo=timezone.utc)
    n = int((end - origin).total_seconds() // STEP_SECONDS)
    stamps = [origin + timedelta(seconds=i * STEP_SECONDS) for i in range(n)]
    return origin, stamps


def ground_truth(spec: SynthSpec) -> UniformSeries:
    """Clean, gap-free stage / sonar / discharge series."""
    origin, stamps = _timeline(spec)
    n = len(stamps)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(1)[0])
    tau = np.array([year_fraction(ts) for ts in stamps])
    hours = np.arange(n, dtype=np.float64)

    stage = spec.base_stage_m + spec.seasonal_amp_m * np.cos(
        2.0 * np.pi * (tau - spec.seasonal_peak_tau)
    )
    sigma_h = spec.flood_duration_days * 24.0 / 4.0
    for year in range(spec.years):
        year_start_h = (
            datetime(spec.start_year + year, 1, 1, tzinfo=timezone.utc) - origin
        ).total_seconds() / STEP_SECONDS
        for center_day in spec.flood_center_days:
            jitter = rng.uniform(-spec.flood_jitter_days, spec.flood_jitter_days)
            magnitude = spec.flood_magnitude_m * rng.uniform(0.7, 1.3)
            center_h = year_start_h + (center_day + jitter) * 24.0
            stage += magnitude * np.exp(-0.5 * ((hours - center_h) / sigma_h) ** 2)

    # scour target relative to the low-flow equilibrium depth
    spread = stage - spec.base_bed_m
    ys = hec18_vector(spec.eta, spread)
    ys_ref = hec18_vector(
        spec.eta, np.array([spec.base_stage_m - spec.base_bed_m])
    )[0]
    depth_target = np.maximum(0.0, ys - ys_ref)

    bed = np.empty(n)
    b = spec.base_bed_m
    decay_scour = np.exp(-1.0 / (spec.scour_tau_days * 24.0))
    decay_fill = np.exp(-1.0 / (spec.fill_tau_days * 24.0))
    for t in range(n):
        target = spec.base_bed_m - depth_target[t]
        decay = decay_scour if target < b else decay_fill
        b = target + (b - target) * decay
        bed[t] = b

    discharge = spec.discharge_coeff * np.maximum(stage - bed, 0.1) ** 1.5
    return UniformSeries(
        origin=origin,
        channels={"stage": stage, "sonar": bed, "discharge": discharge},
    )


def _is_frozen(ts: datetime) -> bool:
    return ts.month in FROZEN_MONTHS


def corrupt(clean: UniformSeries, spec: SynthSpec) -> list[RawReading]:
    """Sample raw readings from the clean series: sensor noise, outlier
    spikes on the elevation channels, random dropouts, and frozen-season
    blackouts (no readings at all)."""
    seeds = np.random.SeedSequence(spec.seed).spawn(4)
    noise_rng = np.random.default_rng(seeds[1])
    outlier_rng = np.random.default_rng(seeds[2])
    missing_rng = np.random.default_rng(seeds[3])
    n = clean.n_steps
    stamps = [clean.timestamp_at(i) for i in range(n)]
    frozen = np.array([_is_frozen(ts) for ts in stamps]) if spec.frozen else np.zeros(n, bool)
    readings: list[RawReading] = []
    for name in ("stage", "sonar", "discharge"):
        if name not in clean.channels:
            continue
        values = clean.channels[name].copy()
        if name == "discharge":
            values *= 1.0 + 0.02 * noise_rng.standard_normal(n)
        else:
            values += spec.noise_std_m * noise_rng.standard_normal(n)
            spikes = outlier_rng.random(n) < spec.outlier_rate
            signs = np.where(outlier_rng.random(n) < 0.5, -1.0, 1.0)
            values[spikes] += signs[spikes] * spec.outlier_mag_m
        dropped = missing_rng.random(n) < spec.missing_rate
        for i in range(n):
            if frozen[i] or dropped[i]:
                continue
            readings.append(RawReading(stamps[i], name, float(values[i])))
    readings.sort(key=lambda r: (r.sensor, r.timestamp))
    return readings


def generate(spec: SynthSpec) -> tuple[list[RawReading], UniformSeries]:
    """Raw readings plus the clean ground truth they were sampled from."""
    truth = ground_truth(spec)
    return corrupt(truth, spec), truth


def write_readings_csv(readings: list[RawReading], path) -> None:
    """Pivot readings to the ingest CSV layout (one row per timestamp)."""
    channels = sorted({r.sensor for r in readings})
    order = [c for c in ("stage", "sonar", "discharge") if c in channels]
    by_time: dict[datetime, dict[str, float]] = {}
    for r in readings:
        by_time.setdefault(r.timestamp, {})[r.sensor] = r.value
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp"] + order)
        for ts in sorted(by_time):
            row = [ts.strftime("%Y-%m-%dT%H:%M:%SZ")]
            for name in order:
                v = by_time[ts].get(name)
                row.append("" if v is None else format(v, ".9g"))
            writer.writerow(row)


def spec_echo(spec: SynthSpec) -> str:
    lines = [f"{k} = {v}" for k, v in sorted(vars(spec).items())]
    return "\n".join(lines) + "\n"
