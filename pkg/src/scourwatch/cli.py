"""Command-line entry point wiring the five-step early-warning workflow:

    synth -> ingest -> preprocess -> train / gridsearch -> forecast -> alert

plus `report` for figures and the summary table. Every stage reads only
prior-stage artifacts under --out and writes a resolved-config echo next to
its outputs. On error, the first stderr line is machine-parsable:
``error:<code>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from datetime import timezone
from pathlib import Path

import numpy as np

from . import __version__, config as config_mod
from . import earlywarn, harness, ingest, preprocess, synth
from .dataset import FeatureCombo, FeatureMatrix, WindowSpec, add_time_features, make_windows
from .errors import MissingArtifactError, ParameterError, ScourwatchError
from .neural import snapshot
from .neural.train import EpochStats
from .preprocess import NormStats

STAGES = ("synth", "ingest", "preprocess", "train", "gridsearch",
          "forecast", "alert", "report")


def _stage_dir(out: Path, name: str) -> Path:
    d = out / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_echo(stage_dir: Path, cfg) -> None:
    (stage_dir / "config_echo.txt").write_text(cfg.render())


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"run {stage} first (missing {path})")
    return path


def _hour_floor(ts):
    return ts.replace(minute=0, second=0, microsecond=0)


# ---------------------------------------------------------------- stages


def cmd_synth(args, cfg, out: Path) -> int:
    spec = cfg.synth_spec()
    d = _stage_dir(out, "synth")
    readings, truth = synth.generate(spec)
    synth.write_readings_csv(readings, d / "raw.csv")
    ingest.write_uniform_csv(truth, d / "truth.csv")
    (d / "spec_echo.txt").write_text(synth.spec_echo(spec))
    _write_echo(d, cfg)
    print(f"synth: {len(readings)} readings over {truth.n_steps} hourly steps -> {d}")
    return 0


def cmd_ingest(args, cfg, out: Path) -> int:
    src = Path(args.input) if args.input else out / "synth" / "raw.csv"
    _require(src, "synth (or pass --input)")
    units = args.units or cfg.get("ingest", "units")
    readings = ingest.parse_csv(src, units=units)
    if not readings:
        raise ParameterError(f"{src}: no readings")
    bias_path = cfg.get("ingest", "bias_table")
    if bias_path:
        table = ingest.read_bias_table_csv(bias_path)
        readings = ingest.apply_bias_shifts(readings, table)
    first = min(r.timestamp for r in readings)
    last = max(r.timestamp for r in readings)
    origin = _hour_floor(first).astimezone(timezone.utc)
    n_steps = int(math.ceil(((last - origin).total_seconds() + 1) / 3600.0))
    series, skipped = ingest.regrid_hourly(readings, origin, n_steps)
    d = _stage_dir(out, "ingest")
    ingest.write_uniform_csv(series, d / "uniform.csv")
    gaps = {name: int(np.isnan(series.channels[name]).sum()) for name in series.channels}
    (d / "report.txt").write_text(
        f"readings = {len(readings)}\nskipped_outside_grid = {skipped}\n"
        f"steps = {n_steps}\norigin = {origin.isoformat()}\n"
        + "".join(f"gaps_{k} = {v}\n" for k, v in sorted(gaps.items()))
    )
    _write_echo(d, cfg)
    print(f"ingest: {len(readings)} readings -> {n_steps} steps ({skipped} outside grid)")
    return 0


def cmd_preprocess(args, cfg, out: Path) -> int:
    src = _require(out / "ingest" / "uniform.csv", "ingest")
    series = ingest.read_uniform_csv(src)
    proc = preprocess.preprocess_series(
        series,
        cfg.filter_spec(),
        cfg.impute_spec(),
        outlier_report_threshold=cfg.get("preprocess", "outlier_report_threshold"),
    )
    d = _stage_dir(out, "preprocess")
    preprocess.write_processed_csv(proc, d / "clean.csv")
    lines = [f"{k} = {v}" for k, v in proc.report.items()]
    (d / "report.txt").write_text("\n".join(lines) + "\n")
    _write_echo(d, cfg)
    print(f"preprocess: {len(proc.segments)} segments, "
          f"{proc.report['samples_imputed']} samples imputed")
    return 0


def _load_clean(out: Path):
    src = _require(out / "preprocess" / "clean.csv", "preprocess")
    return preprocess.read_processed_csv(src)


def _factory(cfg, series):
    test_steps = int(cfg.get("dataset", "test_span_days") * 24)
    val_steps = int(cfg.get("dataset", "val_span_days") * 24)
    from .dataset import WindowFactory

    return WindowFactory(series, test_steps, val_steps)


def write_history_csv(path, history: list[EpochStats]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_mse", "val_mse", "val_mae_sonar", "val_mae_stage"])
        for h in history:
            w.writerow([h.epoch, repr(float(h.train_mse)), repr(float(h.val_mse)),
                        repr(float(h.val_mae[0])), repr(float(h.val_mae[1]))])


def read_history_csv(path) -> list[EpochStats]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            out.append(EpochStats(int(row[0]), float(row[1]), float(row[2]),
                                  (float(row[3]), float(row[4]))))
    return out


def cmd_train(args, cfg, out: Path) -> int:
    series = _load_clean(out)
    factory = _factory(cfg, series)
    model_config = cfg.model_config()
    k = args.repeats if args.repeats else 1
    shuffle_seed = cfg.get("dataset", "shuffle_seed")
    shuffle_seed = shuffle_seed if shuffle_seed >= 0 else None
    d = _stage_dir(out, "train")
    if k == 1:
        trained, maes, wall = harness.run_one(
            model_config, factory, cfg.seed, shuffle_seed=shuffle_seed
        )
        members, member_maes = [trained], [maes]
    else:
        ensemble = harness.train_ensemble(
            model_config, factory, k, base_seed=cfg.seed,
            shuffle_seed=shuffle_seed, log=print,
        )
        members, member_maes = ensemble.members, ensemble.member_maes
    summary = [f"config = {harness.encode_config(model_config)}",
               f"members = {len(members)}"]
    for i, (member, maes) in enumerate(zip(members, member_maes)):
        snapshot.save_model(member, d / f"member_{i:03d}.model")
        write_history_csv(d / f"history_{i:03d}.csv", member.history)
        summary.append(
            f"member_{i:03d}: stopped_epoch={member.stopped_epoch} "
            f"restored_epoch={member.restored_epoch} "
            f"val_sonar_mae={maes['validation'][0]:.6f} "
            f"test_sonar_mae={maes['test'][0]:.6f}"
        )
    (d / "summary.txt").write_text("\n".join(summary) + "\n")
    _write_echo(d, cfg)
    print(f"train: {len(members)} model(s) -> {d}")
    return 0


def cmd_gridsearch(args, cfg, out: Path) -> int:
    series = _load_clean(out)
    factory = _factory(cfg, series)
    grid = cfg.grid_spec()
    d = _stage_dir(out, "gridsearch")
    results = harness.run_grid(
        grid, factory, d / "results.csv", base_seed=cfg.seed,
        jobs=args.jobs, log=print,
    )
    best = harness.select_best(results)
    (d / "best.txt").write_text(best.config_code + "\n")
    from . import svgplot

    usable = [r for r in results if r.validation["sonar"]]
    labels = [r.config_code for r in usable]
    for feature in ("sonar", "stage"):
        svgplot.save_boxplots(
            d / f"boxplot_{feature}.svg",
            labels,
            [r.validation[feature] for r in usable],
            title=f"validation {feature} MAE per configuration",
        )
    _write_echo(d, cfg)
    print(f"gridsearch: {len(results)} cells, best {best.config_code}")
    return 0


def _load_members(out: Path):
    d = _require(out / "train", "train")
    paths = sorted(d.glob("member_*.model"))
    if not paths:
        raise MissingArtifactError(f"run train first (no snapshots in {d})")
    members = [snapshot.load_model(p) for p in paths]
    first = members[0]
    for m in members[1:]:
        if m.config.with_seed(0) != first.config.with_seed(0):
            raise ParameterError("snapshot configs differ; retrain the ensemble")
    if first.norm_channels is None:
        raise ParameterError("snapshots lack normalization stats")
    return members


def _physical_value(series, index: int, channel: str) -> float:
    ci = series.channel_index(channel)
    for seg in series.segments:
        if seg.start <= index < seg.end:
            return float(seg.values[index - seg.start, ci])
    raise ParameterError(f"grid index {index} not covered by any segment")


def cmd_forecast(args, cfg, out: Path) -> int:
    members = _load_members(out)
    first = members[0]
    series = _load_clean(out)
    stats = NormStats(first.norm_channels, first.norm_mean, first.norm_std)
    normalized = add_time_features(preprocess.normalize_series(series, stats))
    combo = FeatureCombo(first.config.combo)
    matrix = FeatureMatrix(normalized, combo)
    test_steps = int(cfg.get("dataset", "test_span_days") * 24)
    val_steps = int(cfg.get("dataset", "val_span_days") * 24)
    from .dataset import chronological_split

    ranges = chronological_split(series.n_steps, test_steps, val_steps)
    spec = WindowSpec(first.config.input_width, first.config.label_width)
    windows = make_windows(matrix, spec, ranges)["test"]
    if len(windows) == 0:
        raise ParameterError("test split yields no forecast windows")
    models = [m.build() for m in members]
    rf = earlywarn.rolling_forecast(
        models, windows, stats,
        origin_stride=cfg.get("earlywarn", "origin_stride"),
    )
    d = _stage_dir(out, "forecast")
    with open(d / "forecast.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["origin", "step", "feature", "mean_m", "lb_m", "ub_m", "actual_m"])
        for i, origin in enumerate(rf.origins):
            fb = earlywarn.band(rf.predictions[i], origin=int(origin))
            for step in range(rf.predictions.shape[2]):
                for ci, name in enumerate(rf.channels):
                    w.writerow([
                        int(origin), step, name,
                        repr(float(fb.mean[step, ci])),
                        repr(float(fb.lower[step, ci])),
                        repr(float(fb.upper[step, ci])),
                        repr(float(rf.actuals[i, step, ci])),
                    ])
    # the latest forecast window, member-resolved, for the alert stage
    last = len(rf.origins) - 1
    alert_origin = int(rf.origins[last])
    datum = cfg.get("earlywarn", "datum_m") or None  # fixed survey datum
    if datum is None:
        datum = _physical_value(series, alert_origin - 1, "sonar")
    with open(d / "alert_window.csv", "w", newline="") as fh:
        fh.write(f"# origin={alert_origin}\n# datum_m={datum!r}\n")
        w = csv.writer(fh)
        w.writerow(["member", "step", "feature", "value_m"])
        for mi in range(rf.predictions.shape[1]):
            for step in range(rf.predictions.shape[2]):
                for ci, name in enumerate(rf.channels):
                    w.writerow([mi, step, name,
                                repr(float(rf.predictions[last, mi, step, ci]))])
    from . import svgplot

    times, mean, lower, upper, actual = earlywarn.aggregate_curves(rf)
    svgplot.save_forecast_band(d / "bands.svg", times, mean, lower, upper,
                               actual, channels=rf.channels)
    _write_echo(d, cfg)
    print(f"forecast: {len(rf.origins)} origins x {rf.predictions.shape[1]} members -> {d}")
    return 0


def read_alert_window(path):
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            else:
                rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if header != ["member", "step", "feature", "value_m"]:
        raise ParameterError(f"{path}: bad alert window header {header}")
    records = [(int(r[0]), int(r[1]), r[2], float(r[3])) for r in reader]
    members = 1 + max(r[0] for r in records)
    steps = 1 + max(r[1] for r in records)
    names = []
    for r in records:
        if r[2] not in names:
            names.append(r[2])
    preds = np.empty((members, steps, len(names)))
    for m, s, f, v in records:
        preds[m, s, names.index(f)] = v
    return int(meta["origin"]), float(meta["datum_m"]), preds, names


def cmd_alert(args, cfg, out: Path) -> int:
    src = _require(out / "forecast" / "alert_window.csv", "forecast")
    origin, datum, preds, names = read_alert_window(src)
    if names[0] != "sonar":
        raise ParameterError("alert window must have sonar as the first feature")
    alert_threshold = cfg.get("earlywarn", "alert_threshold_m") or None
    report = earlywarn.build_alert_report(
        preds,
        origin=origin,
        datum=datum,
        embedment_m=cfg.get("earlywarn", "embedment_m"),
        thresholds=list(cfg.get("earlywarn", "thresholds_m")),
        target_exceedance=cfg.get("earlywarn", "target_exceedance"),
        watch_exceedance=cfg.get("earlywarn", "watch_exceedance"),
        alert_threshold_m=alert_threshold,
    )
    d = _stage_dir(out, "alert")
    text = [
        f"alert level: {report.level}",
        f"forecast window: grid steps {report.window[0]}..{report.window[1]}",
        f"datum (bed at origin): {report.datum:.3f} m",
        f"ensemble members: {len(report.samples)}",
        f"max scour depth: mean {report.samples.mean():.3f} m, "
        f"min {report.samples.min():.3f}, max {report.samples.max():.3f}",
        f"scour depth at {report.target_exceedance:.0%} exceedance: "
        f"{report.scour_at_target:.3f} m",
        f"as-built embedment: {report.embedment_m:.3f} m",
        f"residual embedment: {report.residual_embedment_m:.3f} m",
        "exceedance probabilities:",
    ]
    for t, p in zip(report.thresholds, report.exceedance_probs):
        text.append(f"  P(scour > {t:.2f} m) = {p:.3f}")
    (d / "alert.txt").write_text("\n".join(text) + "\n")
    with open(d / "alert.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold_m", "exceedance_probability"])
        for t, p in zip(report.thresholds, report.exceedance_probs):
            w.writerow([repr(float(t)), repr(float(p))])
        w.writerow(["level", report.level])
        w.writerow(["residual_embedment_m", repr(report.residual_embedment_m)])
    _write_echo(d, cfg)
    print(f"alert: level={report.level} "
          f"residual_embedment={report.residual_embedment_m:.2f} m")
    return 0


def _read_forecast_csv(path):
    by_origin: dict[int, dict] = {}
    names: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            origin, step, name = int(row[0]), int(row[1]), row[2]
            if name not in names:
                names.append(name)
            rec = by_origin.setdefault(origin, {})
            rec[(step, name)] = tuple(float(v) for v in row[3:])
    return by_origin, names


def cmd_report(args, cfg, out: Path) -> int:
    from . import svgplot

    d = _stage_dir(out, "report")
    wrote = []
    uniform_path = out / "ingest" / "uniform.csv"
    clean_path = out / "preprocess" / "clean.csv"
    if uniform_path.exists() and clean_path.exists():
        uniform = ingest.read_uniform_csv(uniform_path)
        proc = preprocess.read_processed_csv(clean_path)
        raw = {}
        processed = {}
        t = np.arange(uniform.n_steps)
        for ci, name in enumerate(proc.channel_names):
            values = uniform.channels[name]
            ok = ~np.isnan(values)
            raw[name] = (t[ok], values[ok])
            processed[name] = [
                (np.arange(seg.start, seg.end), seg.values[:, ci])
                for seg in proc.segments
            ]
        svgplot.save_series_overlay(d / "series_overlay.svg", t, raw, processed,
                                    title="raw vs processed sensor series")
        wrote.append("series_overlay.svg")
    train_dir = out / "train"
    histories = {}
    for p in sorted(train_dir.glob("history_*.csv")) if train_dir.exists() else []:
        histories[p.stem.replace("history_", "member ")] = read_history_csv(p)
    if histories:
        svgplot.save_training_history(d / "training_history.svg", histories)
        wrote.append("training_history.svg")
    results_path = out / "gridsearch" / "results.csv"
    if results_path.exists():
        cells = harness.collect_cells(harness.load_results(results_path))
        usable = [c for c in cells if c.validation["sonar"]]
        if usable:
            for feature in ("sonar", "stage"):
                svgplot.save_boxplots(
                    d / f"grid_boxplot_{feature}.svg",
                    [c.config_code for c in usable],
                    [c.validation[feature] for c in usable],
                    title=f"validation {feature} MAE per configuration",
                )
            wrote.append("grid_boxplot_*.svg")
    forecast_path = out / "forecast" / "forecast.csv"
    if forecast_path.exists():
        by_origin, names = _read_forecast_csv(forecast_path)
        origins = sorted(by_origin)
        steps = 1 + max(s for (s, _) in by_origin[origins[0]])
        span_end = max(origins) + steps
        t0 = min(origins)
        shape = (span_end - t0, 2)
        mean = np.full(shape, np.nan)
        lower = np.full(shape, np.nan)
        upper = np.full(shape, np.nan)
        actual = np.full(shape, np.nan)
        for origin in origins:  # later origins overwrite: freshest forecast
            for (step, name), vals in by_origin[origin].items():
                ci = names.index(name)
                row = origin + step - t0
                mean[row, ci], lower[row, ci], upper[row, ci], actual[row, ci] = vals
        times = np.arange(t0, span_end)
        svgplot.save_forecast_band(d / "forecast_bands.svg", times, mean, lower,
                                   upper, actual, channels=tuple(names))
        wrote.append("forecast_bands.svg")
        summary = earlywarn.summarize_errors(mean, lower, upper, actual)
        lines = [
            "dataset  sonar_mae_m  stage_mae_m  max_scour_depth_m  scour_error_pct",
            f"synthetic  {summary.sonar_mae:.3f}  {summary.stage_mae:.3f}  "
            f"{summary.max_scour_depth:.2f}  {summary.scour_error_pct:.1f}",
            "",
            f"max trough error (mean): {summary.trough_mean_error:.3f} m "
            f"over {summary.n_troughs} troughs",
            f"max trough error (LB):   {summary.trough_lb_error:.3f} m",
            f"max peak error (mean):   {summary.peak_mean_error:.3f} m "
            f"over {summary.n_peaks} peaks",
            f"max peak error (UB):     {summary.peak_ub_error:.3f} m",
        ]
        (d / "summary.txt").write_text("\n".join(lines) + "\n")
        wrote.append("summary.txt")
    if not wrote:
        raise MissingArtifactError(
            "nothing to report: run preprocess/train/forecast first"
        )
    _write_echo(d, cfg)
    print(f"report: wrote {', '.join(wrote)} -> {d}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "gridsearch": cmd_gridsearch,
    "forecast": cmd_forecast,
    "alert": cmd_alert,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="config file (key = value sections)")
    common.add_argument("--seed", type=int, default=None, help="override run seed")
    common.add_argument("--out", default="scourwatch_out", help="workspace directory")
    common.add_argument("--jobs", type=int, default=1, help="worker pool size")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value")
    parser = argparse.ArgumentParser(
        prog="scourwatch",
        description="bridge-scour early-warning pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate synthetic raw + ground-truth sensor data",
        "ingest": "parse raw CSV, apply bias shifts, regrid hourly",
        "preprocess": "clean, impute, and segment the gridded series",
        "train": "train forecast model(s) on the processed series",
        "gridsearch": "exhaustive hyperparameter grid with repetitions",
        "forecast": "rolling ensemble forecast over the test range",
        "alert": "turn the latest forecast window into an alert report",
        "report": "render SVG figures and the summary table",
    }
    for name in STAGES:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "ingest":
            p.add_argument("--input", default=None, help="raw sensor CSV path")
            p.add_argument("--units", choices=("m", "ft"), default=None)
        if name == "train":
            p.add_argument("--repeats", type=int, default=1,
                           help="ensemble size (independent retrainings)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load_config(args.config)
        if args.seed is not None:
            cfg.set("run", "seed", str(args.seed))
        config_mod.apply_overrides(cfg, args.set)
        out = Path(args.out)
        return COMMANDS[args.command](args, cfg, out)
    except ScourwatchError as exc:
        print(f"error:{exc.code}: {exc.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
