"""Model zoo: the three LSTM forecaster variants plus the persistence
baseline and the dense reference model.

All models map an input block [batch, input_width, n_features] to a
prediction block [batch, label_width, 2] (the two label channels). Exact
gradients are implemented next to each forward pass; `backward` must be
called right after the `forward(training=True)` whose cache it consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ParameterError
from . import kernels
from ..dataset import N_LABEL_FEATURES

VARIANTS = ("ss", "fd", "ss2", "baseline", "dense")
OPTIMIZERS = ("adam", "sgdm", "rmsprop")


@dataclass(frozen=True)
class ModelConfig:
    combo: str = "ss"
    variant: str = "ss"
    input_width: int = 336
    label_width: int = 168
    units: int = 128
    dropout: float = 0.0
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0
    clip_norm: float = 5.0  # 0 disables clipping
    output_activation: str = "linear"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.units < 1:
            raise ParameterError("units must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError("dropout must be in [0, 1)")
        if self.input_width < 1 or self.label_width < 1:
            raise ParameterError("window widths must be >= 1")
        if self.output_activation not in ("linear", "relu"):
            raise ParameterError("output_activation must be linear or relu")

    def with_seed(self, seed: int) -> "ModelConfig":
        return replace(self, seed=seed)


def glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def lstm_param_block(rng, n_in: int, units: int, prefix: str) -> dict:
    b = np.zeros(4 * units)
    b[units : 2 * units] = 1.0  # forget-gate bias keeps early memory alive
    return {
        f"{prefix}.W": glorot(rng, (n_in, 4 * units)),
        f"{prefix}.U": glorot(rng, (units, 4 * units)),
        f"{prefix}.b": b,
    }


def param_shapes(config: ModelConfig, n_features: int) -> dict[str, tuple]:
    """Expected parameter shapes, in snapshot order."""
    h = config.units
    out = config.label_width * N_LABEL_FEATURES
    if config.variant == "baseline":
        return {}
    if config.variant == "dense":
        return {
            "hidden.W": (n_features, h),
            "hidden.b": (h,),
            "head.W": (h, out),
            "head.b": (out,),
        }
    shapes = {
        "lstm.W": (n_features, 4 * h),
        "lstm.U": (h, 4 * h),
        "lstm.b": (4 * h,),
    }
    if config.variant == "ss2":
        shapes = {
            "lstm1.W": (n_features, 4 * h),
            "lstm1.U": (h, 4 * h),
            "lstm1.b": (4 * h,),
            "lstm2.W": (h, 4 * h),
            "lstm2.U": (h, 4 * h),
            "lstm2.b": (4 * h,),
        }
    if config.variant == "fd":
        shapes.update({"head.W": (h, N_LABEL_FEATURES), "head.b": (N_LABEL_FEATURES,)})
    else:
        shapes.update({"head.W": (h, out), "head.b": (out,)})
    return shapes


class Model:
    """Common plumbing: parameter dict, config, input validation."""

    def __init__(self, config: ModelConfig, n_features: int):
        self.config = config
        self.n_features = n_features
        self.params: dict[str, np.ndarray] = {}
        self._cache = None

    def init_params(self, rng) -> None:
        raise NotImplementedError

    def forward(self, X, exo=None, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dPred) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _check_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1] != self.config.input_width \
                or X.shape[2] != self.n_features:
            raise ParameterError(
                f"input block {X.shape} does not match "
                f"(batch, {self.config.input_width}, {self.n_features})"
            )
        return X

    def _head_act(self, z):
        if self.config.output_activation == "relu":
            return np.maximum(z, 0.0)
        return z

    def _head_act_grad(self, z, dz):
        if self.config.output_activation == "relu":
            return dz * (z > 0)
        return dz


class BaselineModel(Model):
    """Persistence: every forecast step repeats the last observed labels."""

    def init_params(self, rng):
        pass

    def forward(self, X, exo=None, training=False, rng=None):
        X = self._check_input(X)
        last = X[:, -1, :N_LABEL_FEATURES]
        return np.repeat(last[:, None, :], self.config.label_width, axis=1)

    def backward(self, dPred):
        return {}


class DenseModel(Model):
    """Last input step -> hidden ReLU layer -> linear projection."""

    def init_params(self, rng):
        h = self.config.units
        out = self.config.label_width * N_LABEL_FEATURES
        self.params = {
            "hidden.W": glorot(rng, (self.n_features, h)),
            "hidden.b": np.zeros(h),
            "head.W": glorot(rng, (h, out)),
            "head.b": np.zeros(out),
        }

    def forward(self, X, exo=None, training=False, rng=None):
        X = self._check_input(X)
        x = X[:, -1, :]
        z1 = x @ self.params["hidden.W"] + self.params["hidden.b"]
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.params["head.W"] + self.params["head.b"]
        a2 = self._head_act(z2)
        self._cache = (x, z1, a1, z2)
        return a2.reshape(len(X), self.config.label_width, N_LABEL_FEATURES)

    def backward(self, dPred):
        x, z1, a1, z2 = self._cache
        dz2 = self._head_act_grad(z2, dPred.reshape(len(x), -1))
        da1 = dz2 @ self.params["head.W"].T
        dz1 = da1 * (z1 > 0)
        return {
            "hidden.W": x.T @ dz1,
            "hidden.b": dz1.sum(axis=0),
            "head.W": a1.T @ dz2,
            "head.b": dz2.sum(axis=0),
        }


class SingleShotModel(Model):
    """One LSTM layer; a dense head emits the whole label block at once."""

    def init_params(self, rng):
        h = self.config.units
        out = self.config.label_width * N_LABEL_FEATURES
        self.params = {
            **lstm_param_block(rng, self.n_features, h, "lstm"),
            "head.W": glorot(rng, (h, out)),
            "head.b": np.zeros(out),
        }

    def forward(self, X, exo=None, training=False, rng=None):
        X = self._check_input(X)
        p = self.params
        mx = mh = None
        if training and self.config.dropout > 0.0:
            mx, mh = kernels.dropout_masks(
                rng, self.config.dropout, len(X), self.n_features, self.config.units
            )
        _, (hT, _), cache = kernels.lstm_forward(
            X, p["lstm.W"], p["lstm.U"], p["lstm.b"], mx=mx, mh=mh
        )
        z = hT @ p["head.W"] + p["head.b"]
        a = self._head_act(z)
        self._cache = (cache, hT, z)
        return a.reshape(len(X), self.config.label_width, N_LABEL_FEATURES)

    def backward(self, dPred):
        cache, hT, z = self._cache
        B, T = dPred.shape[0], self.config.input_width
        dz = self._head_act_grad(z, dPred.reshape(B, -1))
        dhT = dz @ self.params["head.W"].T
        dHseq = np.zeros((B, T, self.config.units))
        dHseq[:, -1, :] = dhT
        _, dW, dU, db, _, _ = kernels.lstm_backward(cache, dHseq)
        return {
            "lstm.W": dW, "lstm.U": dU, "lstm.b": db,
            "head.W": hT.T @ dz, "head.b": dz.sum(axis=0),
        }


class TwoLayerModel(Model):
    """Two stacked LSTM layers, single-shot head on the top layer."""

    def init_params(self, rng):
        h = self.config.units
        out = self.config.label_width * N_LABEL_FEATURES
        self.params = {
            **lstm_param_block(rng, self.n_features, h, "lstm1"),
            **lstm_param_block(rng, h, h, "lstm2"),
            "head.W": glorot(rng, (h, out)),
            "head.b": np.zeros(out),
        }

    def forward(self, X, exo=None, training=False, rng=None):
        X = self._check_input(X)
        p = self.params
        h = self.config.units
        mx1 = mh1 = mx2 = mh2 = None
        if training and self.config.dropout > 0.0:
            mx1, mh1 = kernels.dropout_masks(
                rng, self.config.dropout, len(X), self.n_features, h
            )
            mx2, mh2 = kernels.dropout_masks(rng, self.config.dropout, len(X), h, h)
        H1, _, cache1 = kernels.lstm_forward(
            X, p["lstm1.W"], p["lstm1.U"], p["lstm1.b"], mx=mx1, mh=mh1
        )
        _, (hT2, _), cache2 = kernels.lstm_forward(
            H1, p["lstm2.W"], p["lstm2.U"], p["lstm2.b"], mx=mx2, mh=mh2
        )
        z = hT2 @ p["head.W"] + p["head.b"]
        a = self._head_act(z)
        self._cache = (cache1, cache2, hT2, z)
        return a.reshape(len(X), self.config.label_width, N_LABEL_FEATURES)

    def backward(self, dPred):
        cache1, cache2, hT2, z = self._cache
        B, T = dPred.shape[0], self.config.input_width
        dz = self._head_act_grad(z, dPred.reshape(B, -1))
        dhT2 = dz @ self.params["head.W"].T
        dH2 = np.zeros((B, T, self.config.units))
        dH2[:, -1, :] = dhT2
        dH1, dW2, dU2, db2, _, _ = kernels.lstm_backward(cache2, dH2)
        _, dW1, dU1, db1, _, _ = kernels.lstm_backward(cache1, dH1)
        return {
            "lstm1.W": dW1, "lstm1.U": dU1, "lstm1.b": db1,
            "lstm2.W": dW2, "lstm2.U": dU2, "lstm2.b": db2,
            "head.W": hT2.T @ dz, "head.b": dz.sum(axis=0),
        }


class FeedbackModel(Model):
    """Autoregressive decoder: one step at a time, predictions fed back.

    Non-label input channels during decoding come from the `exo` block the
    dataset assembles (exact time features, persisted discharge). The
    horizon is unbounded: past the provided exo block the last row repeats.
    """

    def init_params(self, rng):
        h = self.config.units
        self.params = {
            **lstm_param_block(rng, self.n_features, h, "lstm"),
            "head.W": glorot(rng, (h, N_LABEL_FEATURES)),
            "head.b": np.zeros(N_LABEL_FEATURES),
        }

    def _exo_row(self, exo, step: int, batch: int):
        n_exo = self.n_features - N_LABEL_FEATURES
        if n_exo == 0:
            return np.zeros((batch, 0))
        if exo is None:
            raise ParameterError(
                f"feedback model with combo width {self.n_features} needs an exo block"
            )
        return exo[:, min(step, exo.shape[1] - 1), :]

    def forward(self, X, exo=None, training=False, rng=None, horizon=None):
        X = self._check_input(X)
        p = self.params
        B = len(X)
        horizon = horizon or self.config.label_width
        mx = mh = None
        if training and self.config.dropout > 0.0:
            mx, mh = kernels.dropout_masks(
                rng, self.config.dropout, B, self.n_features, self.config.units
            )
        _, (h, c), warm_cache = kernels.lstm_forward(
            X, p["lstm.W"], p["lstm.U"], p["lstm.b"], mx=mx, mh=mh
        )
        preds = [h @ p["head.W"] + p["head.b"]]
        heads_h = [h]
        step_caches = []
        for n in range(1, horizon):
            x_n = np.concatenate([preds[-1], self._exo_row(exo, n - 1, B)], axis=1)
            _, (h, c), cache = kernels.lstm_forward(
                x_n[:, None, :], p["lstm.W"], p["lstm.U"], p["lstm.b"],
                h0=h, c0=c, mx=mx, mh=mh,
            )
            step_caches.append(cache)
            heads_h.append(h)
            preds.append(h @ p["head.W"] + p["head.b"])
        self._cache = (warm_cache, step_caches, heads_h, preds)
        return np.stack(preds, axis=1)

    def backward(self, dPred):
        warm_cache, step_caches, heads_h, preds = self._cache
        p = self.params
        B, horizon, _ = dPred.shape
        H = self.config.units
        acc = {k: np.zeros_like(v) for k, v in p.items()}
        d_feedback = np.zeros((B, N_LABEL_FEATURES))
        dh_carry = np.zeros((B, H))
        dc_carry = np.zeros((B, H))
        for n in range(horizon - 1, 0, -1):
            dp = dPred[:, n, :] + d_feedback
            acc["head.W"] += heads_h[n].T @ dp
            acc["head.b"] += dp.sum(axis=0)
            dh = dp @ p["head.W"].T + dh_carry
            dX, dW, dU, db, dh_carry, dc_carry = kernels.lstm_backward(
                step_caches[n - 1], dh[:, None, :], dc_carry
            )
            acc["lstm.W"] += dW
            acc["lstm.U"] += dU
            acc["lstm.b"] += db
            d_feedback = dX[:, 0, :N_LABEL_FEATURES]
        dp = dPred[:, 0, :] + d_feedback
        acc["head.W"] += heads_h[0].T @ dp
        acc["head.b"] += dp.sum(axis=0)
        dh_last = dp @ p["head.W"].T + dh_carry
        dHseq = np.zeros((B, self.config.input_width, H))
        dHseq[:, -1, :] = dh_last
        _, dW, dU, db, _, _ = kernels.lstm_backward(warm_cache, dHseq, dc_carry)
        acc["lstm.W"] += dW
        acc["lstm.U"] += dU
        acc["lstm.b"] += db
        return acc


_MODEL_CLASSES = {
    "ss": SingleShotModel,
    "fd": FeedbackModel,
    "ss2": TwoLayerModel,
    "baseline": BaselineModel,
    "dense": DenseModel,
}


def build_model(config: ModelConfig, n_features: int, rng=None) -> Model:
    model = _MODEL_CLASSES[config.variant](config, n_features)
    model.init_params(rng if rng is not None else np.random.default_rng(config.seed))
    return model


def loss_and_metrics(pred, label):
    """MSE over both label features jointly; MAE separately per feature."""
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ParameterError(f"shape mismatch {pred.shape} vs {label.shape}")
    err = pred - label
    mse = float(np.mean(err * err))
    mae = np.mean(np.abs(err), axis=tuple(range(err.ndim - 1)))
    return mse, mae


def loss_gradient(pred, label):
    return 2.0 * (np.asarray(pred) - np.asarray(label)) / np.asarray(pred).size
