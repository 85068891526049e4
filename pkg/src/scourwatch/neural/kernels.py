"""LSTM layer forward/backward built on swappable time-loop backends.

The compiled extension is used when present; the NumPy loops otherwise.
Override with SCOURWATCH_BACKEND={auto,compiled,python}. Both backends share
this wrapper, which does the input projection, the weight-gradient
reductions, and dropout-mask bookkeeping as whole-sequence matrix products.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import ParameterError, TrainingDiverged
from . import kernels_py


def _select():
    choice = os.environ.get("SCOURWATCH_BACKEND", "auto")
    if choice not in ("auto", "compiled", "python"):
        raise ParameterError(f"SCOURWATCH_BACKEND must be auto|compiled|python, got {choice!r}")
    if choice in ("auto", "compiled"):
        try:
            from . import _core  # type: ignore[attr-defined]

            return _core
        except ImportError:
            if choice == "compiled":
                raise ParameterError(
                    "compiled backend requested but scourwatch.neural._core is not built"
                ) from None
    return kernels_py


_impl = _select()


def backend_name() -> str:
    return _impl.NAME


def get_backends() -> dict[str, object]:
    """All available time-loop implementations, keyed by name."""
    out = {kernels_py.NAME: kernels_py}
    try:
        from . import _core  # type: ignore[attr-defined]

        out[_core.NAME] = _core
    except ImportError:
        pass
    return out


def dropout_masks(rng, rate: float, batch: int, n_in: int, n_hidden: int):
    """Per-sequence inverted-dropout masks for gate inputs (x and h)."""
    if rate <= 0.0:
        return None, None
    keep = 1.0 - rate
    mx = (rng.random((batch, n_in)) < keep) / keep
    mh = (rng.random((batch, n_hidden)) < keep) / keep
    return mx, mh


def lstm_forward(X, W, U, b, h0=None, c0=None, mx=None, mh=None, impl=None):
    """Run one LSTM layer over a [batch, time, features] block.

    Returns (Hseq, (hT, cT), cache). Masks are per-sequence inverted-dropout
    masks ([B, D] and [B, H]) or None.
    """
    impl = impl or _impl
    X = np.ascontiguousarray(X, dtype=np.float64)
    B, T, D = X.shape
    H = U.shape[0]
    if W.shape != (D, 4 * H):
        raise ParameterError(f"W shape {W.shape} does not match input dim {D}, H {H}")
    if h0 is None:
        h0 = np.zeros((B, H))
    if c0 is None:
        c0 = np.zeros((B, H))
    Xm = X if mx is None else X * mx[:, None, :]
    G = (Xm.reshape(B * T, D) @ W + b).reshape(B, T, 4 * H)
    G = np.ascontiguousarray(G)
    C = np.empty((B, T, H))
    Hseq = np.empty((B, T, H))
    ones_h = mh if mh is not None else np.ones((B, H))
    impl.forward_loop(G, U, np.ascontiguousarray(h0), np.ascontiguousarray(c0),
                      np.ascontiguousarray(ones_h), C, Hseq)
    if not np.isfinite(Hseq[:, -1, :]).all():
        raise TrainingDiverged("non-finite LSTM activation")
    cache = {
        "Xm": Xm, "G": G, "C": C, "Hseq": Hseq,
        "h0": np.ascontiguousarray(h0), "c0": np.ascontiguousarray(c0),
        "W": W, "U": U, "mx": mx, "mh": ones_h, "impl": impl,
    }
    return Hseq, (Hseq[:, -1, :].copy(), C[:, -1, :].copy()), cache


def lstm_backward(cache, dHseq, dcT=None):
    """Backprop through one layer given per-step hidden-output grads.

    Returns (dX, dW, dU, db, dh0, dc0).
    """
    G, C, Hseq = cache["G"], cache["C"], cache["Hseq"]
    W, U = cache["W"], cache["U"]
    B, T, H = Hseq.shape
    D = W.shape[0]
    if dcT is None:
        dcT = np.zeros((B, H))
    dZ = np.empty((B, T, 4 * H))
    dh0 = np.empty((B, H))
    dc0 = np.empty((B, H))
    cache["impl"].backward_loop(
        G, C, Hseq, cache["h0"], cache["c0"], U, cache["mh"],
        np.ascontiguousarray(dHseq), np.ascontiguousarray(dcT), dZ, dh0, dc0,
    )
    dZ_flat = dZ.reshape(B * T, 4 * H)
    dW = cache["Xm"].reshape(B * T, D).T @ dZ_flat
    Hprev = np.concatenate([cache["h0"][:, None, :], Hseq[:, :-1, :]], axis=1)
    Hprev = Hprev * cache["mh"][:, None, :]
    dU = Hprev.reshape(B * T, H).T @ dZ_flat
    db = dZ_flat.sum(axis=0)
    dX = (dZ_flat @ W.T).reshape(B, T, D)
    if cache["mx"] is not None:
        dX = dX * cache["mx"][:, None, :]
    return dX, dW, dU, db, dh0, dc0
