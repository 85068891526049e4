"""First-order optimizers over named parameter dicts: Adam (bias-corrected),
SGD with momentum, and RMSProp."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError, TrainingDiverged


class Optimizer:
    def __init__(self, lr: float):
        if lr <= 0:
            raise ParameterError("learning rate must be > 0")
        self.lr = lr
        self.state: dict[str, dict] = {}

    def step(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite gradient for {name}")
            self._update(name, params[name], g)

    def _update(self, name, p, g):
        raise NotImplementedError


class Adam(Optimizer):
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def _update(self, name, p, g):
        s = self.state.setdefault(
            name, {"m": np.zeros_like(p), "v": np.zeros_like(p), "t": 0}
        )
        s["t"] += 1
        s["m"] = self.beta1 * s["m"] + (1 - self.beta1) * g
        s["v"] = self.beta2 * s["v"] + (1 - self.beta2) * g * g
        m_hat = s["m"] / (1 - self.beta1 ** s["t"])
        v_hat = s["v"] / (1 - self.beta2 ** s["t"])
        p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgdm(Optimizer):
    def __init__(self, lr=1e-3, momentum=0.9):
        super().__init__(lr)
        self.momentum = momentum

    def _update(self, name, p, g):
        s = self.state.setdefault(name, {"v": np.zeros_like(p)})
        s["v"] = self.momentum * s["v"] + g
        p -= self.lr * s["v"]


class RmsProp(Optimizer):
    def __init__(self, lr=1e-3, rho=0.9, eps=1e-8):
        super().__init__(lr)
        self.rho, self.eps = rho, eps

    def _update(self, name, p, g):
        s = self.state.setdefault(name, {"v": np.zeros_like(p)})
        s["v"] = self.rho * s["v"] + (1 - self.rho) * g * g
        p -= self.lr * g / (np.sqrt(s["v"]) + self.eps)


def make_optimizer(algo: str, lr: float) -> Optimizer:
    try:
        cls = {"adam": Adam, "sgdm": Sgdm, "rmsprop": RmsProp}[algo]
    except KeyError:
        raise ParameterError(f"unknown optimizer {algo!r}") from None
    return cls(lr=lr)


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
