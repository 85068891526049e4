"""Grid-search driver and ensemble trainer.

Every (cell, repetition) gets a stable seed derived from the config code, so
an interrupted grid resumes exactly where it stopped: completed repetitions
are read back from the results CSV and skipped. Statistics per cell are
recomputable from the stored per-repetition rows.
"""

from __future__ import annotations

import csv
import re
import threading
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import WindowFactory, WindowSpec
from .errors import InputError, ParameterError, TrainingDiverged
from .neural.models import ModelConfig
from .neural.train import TrainedModel, train

RESULT_COLUMNS = (
    "config_code",
    "repetition",
    "seed",
    "split",
    "sonar_mae",
    "stage_mae",
    "stopped_epoch",
    "wall_seconds",
)

PAPER_WINDOWS = (WindowSpec(336, 168), WindowSpec(720, 168), WindowSpec(720, 336))


@dataclass(frozen=True)
class GridSpec:
    combos: tuple[str, ...] = ("ss", "ssy")
    variants: tuple[str, ...] = ("ss", "fd", "ss2")
    windows: tuple[WindowSpec, ...] = PAPER_WINDOWS
    units: tuple[int, ...] = (32, 64, 128, 256)
    dropouts: tuple[float, ...] = (0.0, 0.2)
    repetitions: int = 20
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 5

    def __post_init__(self):
        for axis in (self.combos, self.variants, self.windows, self.units, self.dropouts):
            if not axis:
                raise ParameterError("grid axes must be nonempty")
        if self.repetitions < 1:
            raise ParameterError("repetitions must be >= 1")

    def cells(self) -> list[ModelConfig]:
        out = []
        for combo in self.combos:
            for variant in self.variants:
                for window in self.windows:
                    for units in self.units:
                        for dropout in self.dropouts:
                            out.append(
                                ModelConfig(
                                    combo=combo,
                                    variant=variant,
                                    input_width=window.input_width,
                                    label_width=window.label_width,
                                    units=units,
                                    dropout=dropout,
                                    optimizer=self.optimizer,
                                    learning_rate=self.learning_rate,
                                    max_epochs=self.max_epochs,
                                    patience=self.patience,
                                )
                            )
        return out


def encode_config(config: ModelConfig) -> str:
    """[features]-[model]-[window]-[units]-[drop-out], dropout in percent."""
    pct = int(round(config.dropout * 100))
    return (
        f"{config.combo}-{config.variant}-({config.input_width},"
        f"{config.label_width})-{config.units}-{pct}"
    )


_CODE_RE = re.compile(r"^([a-z]+)-([a-z0-9]+)-\((\d+),(\d+)\)-(\d+)-(\d+)$")


def decode_config(code: str, **overrides) -> ModelConfig:
    m = _CODE_RE.match(code)
    if not m:
        raise InputError(f"bad config code {code!r}")
    combo, variant, in_w, out_w, units, pct = m.groups()
    return ModelConfig(
        combo=combo,
        variant=variant,
        input_width=int(in_w),
        label_width=int(out_w),
        units=int(units),
        dropout=int(pct) / 100.0,
        **overrides,
    )


def derive_seed(base_seed: int, code: str, repetition: int, purpose: str = "grid") -> int:
    """Stable per-run seed; independent of execution order."""
    return zlib.crc32(f"{purpose}|{base_seed}|{code}|{repetition}".encode())


@dataclass
class RunRecord:
    config_code: str
    repetition: int
    seed: int
    split: str  # validation | test | failed
    sonar_mae: float
    stage_mae: float
    stopped_epoch: int
    wall_seconds: float


def _summary(values: np.ndarray) -> dict[str, float]:
    if len(values) == 0:
        return {k: float("nan") for k in ("mean", "std", "q25", "q50", "q75")}
    return {
        "mean": float(np.mean(values)),
        "std": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
        "q25": float(np.percentile(values, 25)),
        "q50": float(np.percentile(values, 50)),
        "q75": float(np.percentile(values, 75)),
    }


@dataclass
class CellResult:
    config_code: str
    validation: dict[str, list[float]] = field(
        default_factory=lambda: {"sonar": [], "stage": []}
    )
    test: dict[str, list[float]] = field(
        default_factory=lambda: {"sonar": [], "stage": []}
    )
    failed_runs: int = 0

    @property
    def all_failed(self) -> bool:
        return not self.validation["sonar"] and self.failed_runs > 0

    def stats(self, split: str = "validation", feature: str = "sonar"):
        return _summary(np.asarray(getattr(self, split)[feature]))


def write_results_header(path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(RESULT_COLUMNS)


def append_result(path, record: RunRecord) -> None:
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow(
            [
                record.config_code,
                record.repetition,
                record.seed,
                record.split,
                repr(record.sonar_mae),
                repr(record.stage_mae),
                record.stopped_epoch,
                f"{record.wall_seconds:.3f}",
            ]
        )


def load_results(path) -> list[RunRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_COLUMNS:
            raise InputError(f"{path}: unexpected results header {header}")
        for row in reader:
            records.append(
                RunRecord(
                    row[0], int(row[1]), int(row[2]), row[3],
                    float(row[4]), float(row[5]), int(row[6]), float(row[7]),
                )
            )
    return records


def sort_results_file(path) -> None:
    """Normalize row order so resumed/parallel runs yield identical files."""
    records = load_results(path)
    records.sort(key=lambda r: (r.config_code, r.repetition, r.split))
    write_results_header(path)
    for r in records:
        append_result(path, r)


def collect_cells(records: list[RunRecord], codes=None) -> list[CellResult]:
    by_code: dict[str, CellResult] = {}
    for code in codes or []:
        by_code[code] = CellResult(code)
    for r in records:
        cell = by_code.setdefault(r.config_code, CellResult(r.config_code))
        if r.split == "failed":
            cell.failed_runs += 1
        elif r.split in ("validation", "test"):
            getattr(cell, r.split)["sonar"].append(r.sonar_mae)
            getattr(cell, r.split)["stage"].append(r.stage_mae)
    return list(by_code.values())


def run_one(
    config: ModelConfig,
    factory: WindowFactory,
    seed: int,
    shuffle_seed: int | None = None,
) -> tuple[TrainedModel, dict[str, tuple[float, float]], float]:
    """Train one repetition and evaluate MAE on validation and test."""
    from .neural.train import evaluate

    windows = factory.windows(config.combo, WindowSpec(config.input_width, config.label_width))
    t0 = time.perf_counter()
    trained = train(config.with_seed(seed), windows["train"], windows["validation"],
                    shuffle_seed=shuffle_seed)
    model = trained.build()
    maes = {}
    for split in ("validation", "test"):
        _, mae = evaluate(model, windows[split])
        maes[split] = (float(mae[0]), float(mae[1]))
    trained.norm_channels = factory.stats.channel_names
    trained.norm_mean = factory.stats.mean
    trained.norm_std = factory.stats.std
    return trained, maes, time.perf_counter() - t0


def run_grid(
    grid: GridSpec,
    factory: WindowFactory,
    results_path,
    base_seed: int = 0,
    jobs: int = 1,
    log=None,
) -> list[CellResult]:
    """Train every grid cell x repetition not already in the results file.

    With jobs > 1, repetitions run on a bounded thread pool (each run is
    independently seeded, so scheduling cannot change any result); appends
    go through one lock and the file is re-sorted at the end either way.
    """
    cells = grid.cells()
    codes = [encode_config(c) for c in cells]
    try:
        done = {(r.config_code, r.repetition) for r in load_results(results_path)}
    except FileNotFoundError:
        write_results_header(results_path)
        done = set()
    pending = [
        (config, code, rep)
        for config, code in zip(cells, codes)
        for rep in range(grid.repetitions)
        if (code, rep) not in done
    ]
    write_lock = threading.Lock()

    def work(item):
        config, code, rep = item
        seed = derive_seed(base_seed, code, rep)
        t0 = time.perf_counter()
        try:
            trained, maes, wall = run_one(config, factory, seed)
        except TrainingDiverged as exc:
            with write_lock:
                append_result(
                    results_path,
                    RunRecord(code, rep, seed, "failed", float("nan"),
                              float("nan"), exc.epoch or 0,
                              time.perf_counter() - t0),
                )
            if log:
                log(f"{code} rep {rep}: diverged ({exc.message})")
            return
        with write_lock:
            for split in ("validation", "test"):
                append_result(
                    results_path,
                    RunRecord(code, rep, seed, split, maes[split][0],
                              maes[split][1], trained.stopped_epoch, wall),
                )
        if log:
            log(f"{code} rep {rep}: val sonar MAE {maes['validation'][0]:.4f}")

    if jobs > 1 and len(pending) > 1:
        # warm the window cache up front; it is then shared read-only
        for config in cells:
            factory.windows(config.combo, WindowSpec(config.input_width, config.label_width))
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, pending))
    else:
        for item in pending:
            work(item)
    sort_results_file(results_path)
    return collect_cells(load_results(results_path), codes)


def select_best(results: list[CellResult], split: str = "validation") -> CellResult:
    """Smallest mean sonar MAE; ties by smaller std, then by config code."""
    usable = [r for r in results if getattr(r, split)["sonar"]]
    if not usable:
        raise ParameterError("no successful grid cells to select from")
    means = {r.config_code: r.stats(split, "sonar")["mean"] for r in usable}
    best_mean = min(means.values())
    tied = [r for r in usable if means[r.config_code] <= best_mean + 1e-9]
    tied.sort(key=lambda r: (r.stats(split, "sonar")["std"], r.config_code))
    return tied[0]


@dataclass
class TrainedEnsemble:
    config: ModelConfig
    members: list[TrainedModel]
    member_maes: list[dict[str, tuple[float, float]]]

    def __len__(self) -> int:
        return len(self.members)


def train_ensemble(
    config: ModelConfig,
    factory: WindowFactory,
    k: int,
    base_seed: int = 0,
    shuffle_seed: int | None = None,
    log=None,
) -> TrainedEnsemble:
    """K from-scratch retrainings with distinct derived seeds."""
    if k < 1:
        raise ParameterError("ensemble size must be >= 1")
    code = encode_config(config)
    members = []
    maes = []
    failures = 0
    for i in range(k):
        seed = derive_seed(base_seed, code, i, purpose="ensemble")
        try:
            trained, run_maes, wall = run_one(config, factory, seed,
                                              shuffle_seed=shuffle_seed)
        except TrainingDiverged as exc:
            failures += 1
            if log:
                log(f"ensemble member {i}: diverged ({exc.message})")
            continue
        members.append(trained)
        maes.append(run_maes)
        if log:
            log(f"ensemble member {i}: val sonar MAE {run_maes['validation'][0]:.4f} "
                f"({wall:.1f}s)")
    required = max(2, k // 2) if k >= 2 else 1
    if len(members) < required:
        raise TrainingDiverged(
            f"only {len(members)}/{k} ensemble members trained (need {required})"
        )
    return TrainedEnsemble(config, members, maes)
