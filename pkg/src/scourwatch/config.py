"""Run configuration: plain-text sections of ``key = value``.

Unknown sections or keys are rejected, every value is type-checked against
the schema below, and each pipeline stage writes a resolved echo of the
config it actually used next to its outputs.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Any

from .dataset import WindowSpec
from .errors import ConfigError
from .harness import GridSpec
from .neural.models import ModelConfig
from .preprocess import FilterSpec, ImputeSpec
from .synth import SynthSpec


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in _str_list(text))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(s) for s in _str_list(text))


def _window_list(text: str) -> tuple[WindowSpec, ...]:
    out = []
    for part in text.replace(" ", "").split(";"):
        if not part:
            continue
        if not (part.startswith("(") and part.endswith(")")):
            raise ValueError(f"window must look like (336,168), got {part!r}")
        a, b = part[1:-1].split(",")
        out.append(WindowSpec(int(a), int(b)))
    return tuple(out)


# section -> key -> (converter, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "seed": (int, 42),
    },
    "synth": {
        "years": (int, 2),
        "start_year": (int, 2013),
        "base_bed_m": (float, 34.0),
        "base_stage_m": (float, 36.0),
        "seasonal_amp_m": (float, 1.2),
        "seasonal_peak_tau": (float, 0.55),
        "flood_magnitude_m": (float, 3.0),
        "flood_duration_days": (float, 12.0),
        "flood_jitter_days": (float, 10.0),
        "eta": (float, 2.2),
        "scour_tau_days": (float, 2.0),
        "fill_tau_days": (float, 20.0),
        "discharge_coeff": (float, 8.0),
        "noise_std_m": (float, 0.05),
        "outlier_rate": (float, 0.003),
        "outlier_mag_m": (float, 2.5),
        "missing_rate": (float, 0.005),
        "frozen": (_bool, True),
    },
    "ingest": {
        "units": (str, "m"),
        "bias_table": (str, ""),
    },
    "preprocess": {
        "median_window": (int, 5),
        "ma_window": (int, 6),
        "lowpass_cutoff": (float, 1.0 / 24.0),
        "lowpass_order": (int, 2),
        "short_gap_max": (int, 6),
        "poly_degree": (int, 3),
        "gp_length_scale": (float, 48.0),
        "gp_signal_variance": (float, 1.0),
        "gp_noise_variance": (float, 1e-4),
        "gp_context": (int, 72),
        "max_gap_days": (float, 60.0),
        "outlier_report_threshold": (float, 0.1),
    },
    "dataset": {
        "feature_combo": (str, "ss"),
        "input_width": (int, 336),
        "label_width": (int, 168),
        "test_span_days": (float, 365.0),
        "val_span_days": (float, 365.0),
        "batch_size": (int, 32),
        "shuffle_seed": (int, -1),  # -1: derive from run seed
    },
    "neural": {
        "variant": (str, "ss"),
        "units": (int, 128),
        "dropout": (float, 0.0),
        "optimizer": (str, "adam"),
        "learning_rate": (float, 1e-3),
        "max_epochs": (int, 100),
        "patience": (int, 5),
        "clip_norm": (float, 5.0),
        "output_activation": (str, "linear"),
    },
    "harness": {
        "combos": (_str_list, ("ss", "ssy")),
        "variants": (_str_list, ("ss", "fd", "ss2")),
        "windows": (_window_list, _window_list("(336,168);(720,168);(720,336)")),
        "units": (_int_list, (32, 64, 128, 256)),
        "dropouts": (_float_list, (0.0, 0.2)),
        "repetitions": (int, 20),
    },
    "earlywarn": {
        "ensemble_k": (int, 20),
        "embedment_m": (float, 3.0),
        "thresholds_m": (_float_list, (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)),
        "target_exceedance": (float, 0.10),
        "watch_exceedance": (float, 0.01),
        "alert_threshold_m": (float, 0.0),  # 0: use embedment_m
        "datum_m": (float, 0.0),  # 0: bed elevation at the forecast origin
        "origin_stride": (int, 1),
    },
}


@dataclass
class RunConfig:
    values: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        for section, keys in SCHEMA.items():
            sec = self.values.setdefault(section, {})
            for key, (_, default) in keys.items():
                sec.setdefault(key, default)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        conv = SCHEMA[section][key][0]
        try:
            self.values[section][key] = conv(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from None

    # -- domain objects -------------------------------------------------

    @property
    def seed(self) -> int:
        return self.get("run", "seed")

    def synth_spec(self) -> SynthSpec:
        s = self.values["synth"]
        return SynthSpec(seed=self.seed, **s)

    def filter_spec(self) -> FilterSpec:
        p = self.values["preprocess"]
        return FilterSpec(
            median_window=p["median_window"],
            ma_window=p["ma_window"],
            lowpass_cutoff=p["lowpass_cutoff"],
            lowpass_order=p["lowpass_order"],
        )

    def impute_spec(self) -> ImputeSpec:
        p = self.values["preprocess"]
        return ImputeSpec(
            short_gap_max=p["short_gap_max"],
            poly_degree=p["poly_degree"],
            gp_length_scale=p["gp_length_scale"],
            gp_signal_variance=p["gp_signal_variance"],
            gp_noise_variance=p["gp_noise_variance"],
            gp_context=p["gp_context"],
            max_gap_samples=int(p["max_gap_days"] * 24),
        )

    def model_config(self) -> ModelConfig:
        n = self.values["neural"]
        d = self.values["dataset"]
        return ModelConfig(
            combo=d["feature_combo"],
            variant=n["variant"],
            input_width=d["input_width"],
            label_width=d["label_width"],
            units=n["units"],
            dropout=n["dropout"],
            optimizer=n["optimizer"],
            learning_rate=n["learning_rate"],
            max_epochs=n["max_epochs"],
            patience=n["patience"],
            seed=self.seed,
            clip_norm=n["clip_norm"],
            output_activation=n["output_activation"],
        )

    def grid_spec(self) -> GridSpec:
        h = self.values["harness"]
        n = self.values["neural"]
        return GridSpec(
            combos=h["combos"],
            variants=h["variants"],
            windows=h["windows"],
            units=h["units"],
            dropouts=h["dropouts"],
            repetitions=h["repetitions"],
            optimizer=n["optimizer"],
            learning_rate=n["learning_rate"],
            max_epochs=n["max_epochs"],
            patience=n["patience"],
        )

    def render(self) -> str:
        """Resolved-config echo: sorted, normalized, byte-stable."""
        lines = []
        for section in sorted(self.values):
            lines.append(f"[{section}]")
            for key in sorted(self.values[section]):
                value = self.values[section][key]
                if isinstance(value, tuple):
                    if value and isinstance(value[0], WindowSpec):
                        text = ";".join(f"({w.input_width},{w.label_width})" for w in value)
                    else:
                        text = ",".join(str(v) for v in value)
                else:
                    text = str(value)
                lines.append(f"{key} = {text}")
            lines.append("")
        return "\n".join(lines)


def load_config(path=None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown config section [{section}]")
        for key, raw in parser.items(section):
            cfg.set(section, key, raw)
    return cfg


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> None:
    """--set section.key=value pairs."""
    for text in overrides:
        head, sep, raw = text.partition("=")
        if not sep or "." not in head:
            raise ConfigError(f"--set expects section.key=value, got {text!r}")
        section, _, key = head.strip().partition(".")
        cfg.set(section, key.strip(), raw.strip())
