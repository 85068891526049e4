"""Model snapshot file format.

Layout: an ASCII header followed by raw tensor data.

    SCOURLSTM1\n
    key=value lines (model config, stop info, normalization stats)\n
    tensor=<name>:<d0>x<d1>... one line per parameter, in storage order\n
    end_header\n
    <tensor data: little-endian IEEE-754 float64, concatenated in the
     declared order, C row-major within each tensor>

The tensor order is the parameter-dict order of the model variant (see
models.param_shapes). The loader validates every declared shape against the
config before reading data.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from .models import ModelConfig, param_shapes
from .train import TrainedModel

MAGIC = "SCOURLSTM1"

_CONFIG_FIELDS = [
    ("combo", str),
    ("variant", str),
    ("input_width", int),
    ("label_width", int),
    ("units", int),
    ("dropout", float),
    ("optimizer", str),
    ("learning_rate", float),
    ("max_epochs", int),
    ("patience", int),
    ("seed", int),
    ("clip_norm", float),
    ("output_activation", str),
]


def save_model(model: TrainedModel, path) -> None:
    lines = [MAGIC]
    for name, _ in _CONFIG_FIELDS:
        lines.append(f"{name}={getattr(model.config, name)}")  # str(float) round-trips
    lines.append(f"n_features={model.n_features}")
    lines.append(f"stopped_epoch={model.stopped_epoch}")
    lines.append(f"restored_epoch={model.restored_epoch}")
    lines.append(f"restored_best={int(model.restored_best)}")
    if model.norm_channels is not None:
        lines.append("norm_channels=" + ",".join(model.norm_channels))
        lines.append("norm_mean=" + ",".join(repr(float(v)) for v in model.norm_mean))
        lines.append("norm_std=" + ",".join(repr(float(v)) for v in model.norm_std))
    blobs = []
    for name, tensor in model.params.items():
        shape = "x".join(str(d) for d in tensor.shape)
        lines.append(f"tensor={name}:{shape}")
        blobs.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    lines.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for blob in blobs:
            fh.write(blob)


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    head_end = raw.find(b"end_header\n")
    if head_end < 0 or not raw.startswith(MAGIC.encode()):
        raise InputError(f"{path}: not a {MAGIC} snapshot")
    header = raw[:head_end].decode("ascii").splitlines()[1:]
    data = raw[head_end + len(b"end_header\n") :]
    fields: dict[str, str] = {}
    tensors: list[tuple[str, tuple[int, ...]]] = []
    for line in header:
        key, _, value = line.partition("=")
        if key == "tensor":
            name, _, shape_s = value.partition(":")
            tensors.append((name, tuple(int(d) for d in shape_s.split("x"))))
        else:
            fields[key] = value
    try:
        kwargs = {name: typ(fields[name]) for name, typ in _CONFIG_FIELDS}
        config = ModelConfig(**kwargs)
        n_features = int(fields["n_features"])
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path}: bad snapshot header ({exc})") from None
    expected = param_shapes(config, n_features)
    declared = dict(tensors)
    if list(declared) != list(expected) or any(
        declared[k] != expected[k] for k in expected
    ):
        raise InputError(
            f"{path}: tensor table {declared} does not match config-expected {expected}"
        )
    params: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in tensors:
        n = int(np.prod(shape))
        chunk = data[offset * 8 : (offset + n) * 8]
        if len(chunk) != n * 8:
            raise InputError(f"{path}: truncated tensor data for {name}")
        params[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += n
    model = TrainedModel(
        config=config,
        n_features=n_features,
        params=params,
        stopped_epoch=int(fields.get("stopped_epoch", 0)),
        restored_epoch=int(fields.get("restored_epoch", 0)),
        restored_best=bool(int(fields.get("restored_best", 0))),
    )
    if "norm_channels" in fields:
        model.norm_channels = tuple(fields["norm_channels"].split(","))
        model.norm_mean = np.array([float(v) for v in fields["norm_mean"].split(",")])
        model.norm_std = np.array([float(v) for v in fields["norm_std"].split(",")])
    return model
