"""Training loop: seeded init, per-epoch shuffled batches, validation-loss
early stopping with best-epoch restoration, optional gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import WindowSet, batches
from ..errors import ParameterError, TrainingDiverged
from . import optim
from .models import Model, ModelConfig, build_model, loss_gradient

BATCH_SIZE = 32


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float
    val_mae: tuple[float, float]  # per label feature


@dataclass
class TrainedModel:
    config: ModelConfig
    n_features: int
    params: dict[str, np.ndarray]
    history: list[EpochStats] = field(default_factory=list)
    stopped_epoch: int = 0
    restored_epoch: int = 0
    restored_best: bool = False
    norm_channels: tuple[str, ...] | None = None
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    def build(self) -> Model:
        model = build_model(self.config, self.n_features)
        model.params = {k: v.copy() for k, v in self.params.items()}
        return model


def evaluate(model: Model, windows: WindowSet, batch_size: int = BATCH_SIZE):
    """Deterministic full pass: joint MSE plus per-feature MAE."""
    sq_sum = 0.0
    abs_sum = np.zeros(2)
    count = 0
    for X, Y, exo in batches(windows, batch_size):
        pred = model.forward(X, exo=exo, training=False)
        err = pred - Y
        sq_sum += float(np.sum(err * err))
        abs_sum += np.sum(np.abs(err), axis=(0, 1))
        count += err.shape[0] * err.shape[1]
    if count == 0:
        raise ParameterError("cannot evaluate on an empty window set")
    return sq_sum / (count * 2), abs_sum / count


def train(
    config: ModelConfig,
    train_windows: WindowSet,
    val_windows: WindowSet,
    batch_size: int = BATCH_SIZE,
    early_stopping: bool = True,
    shuffle_seed: int | None = None,
    val_loss_override=None,
    epoch_callback=None,
) -> TrainedModel:
    """Train one model; returns the best-validation-epoch parameters.

    Per-epoch batch shuffling derives from `shuffle_seed` when given,
    otherwise from the config seed. `val_loss_override(epoch)` replaces the
    measured validation loss (test seam for the stopping schedule);
    `epoch_callback(epoch, params, stats)` observes each epoch. Stops after
    `patience` consecutive epochs without strict validation improvement,
    then restores the best epoch's weights.
    """
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise ParameterError("train and validation window sets must be nonempty")
    n_features = train_windows.matrix.n_features
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    model = build_model(config, n_features, rng=np.random.default_rng(seeds[0]))
    dropout_rng = np.random.default_rng(seeds[1])
    shuffle_root = (
        np.random.SeedSequence(shuffle_seed) if shuffle_seed is not None else seeds[2]
    )

    if not model.params:  # baseline: nothing to fit
        val_mse, val_mae = evaluate(model, val_windows, batch_size)
        stats = EpochStats(1, val_mse, val_mse, (float(val_mae[0]), float(val_mae[1])))
        return TrainedModel(config, n_features, {}, [stats], 1, 1, True)

    opt = optim.make_optimizer(config.optimizer, config.learning_rate)
    history: list[EpochStats] = []
    best_val = np.inf
    best_epoch = 0
    best_params: dict[str, np.ndarray] = {}
    bad_streak = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        epoch_seed = np.random.SeedSequence(
            entropy=shuffle_root.entropy,
            spawn_key=tuple(shuffle_root.spawn_key) + (epoch,),
        ).generate_state(1)[0]
        sq_sum = 0.0
        count = 0
        for X, Y, exo in batches(train_windows, batch_size, shuffle_seed=epoch_seed):
            pred = model.forward(X, exo=exo, training=True, rng=dropout_rng)
            err = pred - Y
            batch_sq = float(np.sum(err * err))
            if not np.isfinite(batch_sq):
                raise TrainingDiverged(f"loss diverged at epoch {epoch}", epoch=epoch)
            sq_sum += batch_sq
            count += err.size
            grads = model.backward(loss_gradient(pred, Y))
            if config.clip_norm:
                optim.clip_global_norm(grads, config.clip_norm)
            opt.step(model.params, grads)
        train_mse = sq_sum / count
        val_mse, val_mae = evaluate(model, val_windows, batch_size)
        if val_loss_override is not None:
            val_mse = float(val_loss_override(epoch))
        if not np.isfinite(val_mse):
            raise TrainingDiverged(f"validation loss diverged at epoch {epoch}", epoch=epoch)
        stats = EpochStats(epoch, train_mse, val_mse, (float(val_mae[0]), float(val_mae[1])))
        history.append(stats)
        if epoch_callback is not None:
            epoch_callback(epoch, model.params, stats)
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
            bad_streak = 0
        else:
            bad_streak += 1
            if early_stopping and bad_streak >= config.patience:
                break
    model.params = best_params
    return TrainedModel(
        config=config,
        n_features=n_features,
        params=best_params,
        history=history,
        stopped_epoch=epoch,
        restored_epoch=best_epoch,
        restored_best=True,
    )
