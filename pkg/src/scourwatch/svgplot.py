"""Static SVG figures: series overlays, training histories, grid box plots,
forecast bands. Rendered headless; output is byte-stable (fixed hash salt,
no embedded date) so report reruns are reproducible."""

from __future__ import annotations

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("svg", force=False)
    matplotlib.rcParams["svg.hashsalt"] = "scourwatch"
    import matplotlib.pyplot as plt

    return plt


_METADATA = {"Date": None}


def _finish(fig, path):
    fig.savefig(path, format="svg", metadata=_METADATA)
    import matplotlib.pyplot as plt

    plt.close(fig)


def save_series_overlay(path, times, raw: dict, processed: dict, title: str = ""):
    """Raw readings (dots) vs processed series (lines), one panel per channel."""
    plt = _plt()
    names = list(processed)
    fig, axes = plt.subplots(len(names), 1, figsize=(10, 2.4 * len(names)),
                             sharex=True, squeeze=False)
    for ax, name in zip(axes[:, 0], names):
        if name in raw:
            rt, rv = raw[name]
            ax.plot(rt, rv, ".", ms=1.5, color="0.6", label="raw")
        for seg_times, seg_values in processed[name]:
            ax.plot(seg_times, seg_values, lw=1.0, color="tab:blue")
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[0, 0].set_title(title or "sensor series")
    axes[-1, 0].set_xlabel("hours since origin")
    fig.tight_layout()
    _finish(fig, path)


def save_training_history(path, histories: dict, title: str = ""):
    """Per-epoch train/validation curves; one line pair per model."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, history in histories.items():
        epochs = [h.epoch for h in history]
        ax.plot(epochs, [h.train_mse for h in history], "--", label=f"{label} train")
        ax.plot(epochs, [h.val_mse for h in history], "-", label=f"{label} val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (normalized)")
    ax.set_title(title or "training history")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _finish(fig, path)


def save_boxplots(path, labels, samples, title: str = "", highlight: int = 3):
    """MAE distribution box plot per configuration; best medians highlighted."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(labels)), 4.5))
    ax.boxplot(samples, tick_labels=labels)
    medians = [np.median(s) if len(s) else np.inf for s in samples]
    for rank, idx in enumerate(np.argsort(medians)[:highlight]):
        if np.isfinite(medians[idx]):
            ax.plot(idx + 1, medians[idx], "r*", ms=10,
                    label="top 3" if rank == 0 else None)
    ax.set_ylabel("MAE (normalized)")
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=90, labelsize=6)
    if any(np.isfinite(m) for m in medians):
        ax.legend(fontsize=7)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    _finish(fig, path)


def save_forecast_band(path, times, mean, lower, upper, actual,
                       channels=("sonar", "stage"), title: str = ""):
    """Aggregated ensemble mean with 95% band against the actual series."""
    plt = _plt()
    fig, axes = plt.subplots(len(channels), 1, figsize=(10, 2.8 * len(channels)),
                             sharex=True, squeeze=False)
    for ci, (ax, name) in enumerate(zip(axes[:, 0], channels)):
        ok = ~np.isnan(lower[:, ci])
        ax.fill_between(times[ok], lower[ok, ci], upper[ok, ci],
                        color="tab:blue", alpha=0.3, label="95% band")
        ax.plot(times, mean[:, ci], color="tab:blue", lw=1.0, label="ensemble mean")
        ax.plot(times, actual[:, ci], color="k", lw=0.8, label="actual")
        ax.set_ylabel(f"{name} (m)")
        ax.grid(alpha=0.3)
        if ci == 0:
            ax.legend(fontsize=7)
    axes[0, 0].set_title(title or "rolling forecast")
    axes[-1, 0].set_xlabel("hours since origin")
    fig.tight_layout()
    _finish(fig, path)
