"""Layer stack, parameter trees, forward/backward passes.

Activations are channels-last: a batch of windows is ``(B, T, C)``. An
architecture is an ordered list of plain-dict layer descriptors so it can be
stored verbatim in checkpoint headers::

    {"kind": "conv1d", "filters": 32, "kernel": 5}
    {"kind": "relu"}
    {"kind": "maxpool1d", "width": 2}
    {"kind": "gap"}
    {"kind": "dense", "units": 10}
    {"kind": "dropout", "rate": 0.1}
    {"kind": "softmax"}

When the stack ends in dense + softmax, that dense layer is the
classification head and everything before it is the feature extractor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..seeding import rng_for
from . import kernels

EXTRACTOR = "extractor"
HEAD = "head"
LAYER_KINDS = ("conv1d", "relu", "maxpool1d", "gap", "dense", "dropout", "softmax")


@dataclass(frozen=True)
class ArchSpec:
    layers: tuple = ()
    input_shape: tuple = (128, 6)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(dict(l) for l in self.layers))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))

    def to_json(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [dict(l) for l in self.layers]}

    @classmethod
    def from_json(cls, doc: dict) -> "ArchSpec":
        return cls(tuple(doc["layers"]), tuple(doc["input_shape"]))

    @property
    def head_index(self) -> int | None:
        """Index of the head dense layer, if the stack ends in dense + softmax."""
        ls = self.layers
        if len(ls) >= 2 and ls[-1]["kind"] == "softmax" and ls[-2]["kind"] == "dense":
            return len(ls) - 2
        return None

    @property
    def n_classes(self) -> int | None:
        h = self.head_index
        return None if h is None else int(self.layers[h]["units"])

    def with_head(self, n_classes: int) -> "ArchSpec":
        """Same extractor, head resized to ``n_classes`` outputs."""
        h = self.head_index
        if h is None:
            raise ShapeError("architecture has no dense + softmax head")
        layers = list(self.layers)
        layers[h] = dict(layers[h], units=int(n_classes))
        return ArchSpec(tuple(layers), self.input_shape)

    def shapes(self) -> list[tuple]:
        """Per-sample output shape of every layer; raises ShapeError naming the layer."""
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            kind = layer.get("kind")
            where = f"layer {i} ({kind})"
            if kind not in LAYER_KINDS:
                raise ShapeError(f"{where}: unknown layer kind")
            if kind == "conv1d":
                if len(shape) != 2:
                    raise ShapeError(f"{where}: needs (T, C) input, got {shape}")
                if int(layer.get("stride", 1)) != 1:
                    raise ShapeError(f"{where}: only stride 1 is supported")
                shape = (shape[0], int(layer["filters"]))
            elif kind == "maxpool1d":
                if len(shape) != 2 or shape[0] < 2:
                    raise ShapeError(f"{where}: needs (T >= 2, C) input, got {shape}")
                if int(layer.get("width", 2)) != 2:
                    raise ShapeError(f"{where}: only width 2 is supported")
                shape = (shape[0] // 2, shape[1])
            elif kind == "gap":
                if len(shape) != 2:
                    raise ShapeError(f"{where}: needs (T, C) input, got {shape}")
                shape = (shape[1],)
            elif kind == "dense":
                shape = (int(layer["units"]),)
            elif kind == "softmax":
                if len(shape) != 1:
                    raise ShapeError(f"{where}: needs a flat input, got {shape}")
            elif kind == "dropout":
                if not 0 <= float(layer.get("rate", 0.0)) < 1:
                    raise ShapeError(f"{where}: rate must be in [0, 1)")
            out.append(shape)
        return out

    def validate(self) -> "ArchSpec":
        self.shapes()
        if self.head_index is None:
            raise ShapeError("final layers must be dense + softmax")
        return self


def conv_ref(n_classes: int, input_shape=(128, 6)) -> ArchSpec:
    """Three conv blocks (32/64/128 filters, kernel 5), global average pool, softmax head."""
    layers = []
    for filters in (32, 64, 128):
        layers += [
            {"kind": "conv1d", "filters": filters, "kernel": 5},
            {"kind": "relu"},
            {"kind": "maxpool1d", "width": 2},
        ]
    layers += [{"kind": "gap"}, {"kind": "dense", "units": int(n_classes)}, {"kind": "softmax"}]
    return ArchSpec(tuple(layers), tuple(input_shape))


# -- parameters --------------------------------------------------------------


@dataclass
class ParamTree:
    """Named arrays, each tagged as feature extractor or classification head."""

    arrays: dict = field(default_factory=dict)
    tags: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.arrays)

    def __getitem__(self, name):
        return self.arrays[name]

    def __len__(self):
        return len(self.arrays)

    def items(self):
        return self.arrays.items()

    def names(self, part: str | None = None) -> list[str]:
        return [n for n in self.arrays if part is None or self.tags[n] == part]

    def copy(self) -> "ParamTree":
        return ParamTree({k: v.copy() for k, v in self.arrays.items()}, dict(self.tags))

    def astype(self, dtype) -> "ParamTree":
        return ParamTree({k: v.astype(dtype) for k, v in self.arrays.items()}, dict(self.tags))

    def zeros_like(self) -> "ParamTree":
        return ParamTree({k: np.zeros_like(v) for k, v in self.arrays.items()}, dict(self.tags))

    def count(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))

    @property
    def dtype(self):
        for v in self.arrays.values():
            return v.dtype
        return np.dtype(np.float64)


def param_specs(arch: ArchSpec) -> list[tuple[str, tuple, str, int, int]]:
    """``(name, shape, tag, fan_in, fan_out)`` for every parameter, in order."""
    shapes = arch.shapes()
    head = arch.head_index
    prev = arch.input_shape
    out = []
    for i, layer in enumerate(arch.layers):
        kind = layer["kind"]
        tag = HEAD if i == head else EXTRACTOR
        if kind == "conv1d":
            k, c, f = int(layer["kernel"]), prev[1], int(layer["filters"])
            out.append((f"{i}.conv1d.w", (k, c, f), tag, k * c, k * f))
            out.append((f"{i}.conv1d.b", (f,), tag, 0, 0))
        elif kind == "dense":
            n_in, n_out = int(np.prod(prev)), int(layer["units"])
            out.append((f"{i}.dense.w", (n_in, n_out), tag, n_in, n_out))
            out.append((f"{i}.dense.b", (n_out,), tag, 0, 0))
        prev = shapes[i]
    return out


def init_params(arch: ArchSpec, seed: int, dtype=np.float64, part: str | None = None) -> ParamTree:
    """Glorot-uniform weights and zero biases; every array has its own seeded stream.

    With ``part`` set, only parameters carrying that tag are created.
    """
    arrays, tags = {}, {}
    for name, shape, tag, fan_in, fan_out in param_specs(arch):
        if part is not None and tag != part:
            continue
        if fan_in:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            arr = rng_for(seed, "init", name).uniform(-limit, limit, size=shape)
        else:
            arr = np.zeros(shape)
        arrays[name] = arr.astype(dtype)
        tags[name] = tag
    return ParamTree(arrays, tags)


def describe(arch: ArchSpec) -> tuple[int, int]:
    """``(parameter_count, flops)``; flops are 2x the multiply-accumulates of one forward pass."""
    shapes = arch.shapes()
    params = sum(int(np.prod(s)) for _, s, *_ in param_specs(arch))
    flops = 0
    prev = arch.input_shape
    for i, layer in enumerate(arch.layers):
        if layer["kind"] == "conv1d":
            flops += 2 * shapes[i][0] * int(layer["kernel"]) * prev[1] * int(layer["filters"])
        elif layer["kind"] == "dense":
            flops += 2 * int(np.prod(prev)) * int(layer["units"])
        prev = shapes[i]
    return params, flops


# -- single-layer passes -----------------------------------------------------


def layer_forward(layer: dict, p: dict, x: np.ndarray, training: bool = False,
                  rng: np.random.Generator | None = None):
    """Return ``(y, cache)`` for one layer; ``p`` holds its ``w``/``b`` if any."""
    kind = layer["kind"]
    if kind == "conv1d":
        x = np.ascontiguousarray(x)
        return kernels.conv1d_forward(x, p["w"], p["b"]), x
    if kind == "relu":
        return np.maximum(x, 0), x
    if kind == "maxpool1d":
        x = np.ascontiguousarray(x)
        return kernels.maxpool2_forward(x), x
    if kind == "gap":
        return x.mean(axis=1), x.shape
    if kind == "dense":
        flat = x.reshape(len(x), -1)
        return flat @ p["w"] + p["b"], (flat, x.shape)
    if kind == "dropout":
        rate = float(layer.get("rate", 0.0))
        if not training or rate == 0:
            return x, None
        mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
        return x * mask, mask
    if kind == "softmax":
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
        return y, y
    raise ShapeError(f"unknown layer kind {kind!r}")


def layer_backward(layer: dict, p: dict, cache, dy: np.ndarray, need_dx: bool = True):
    """Return ``(dx, grads)`` where grads maps ``w``/``b`` to arrays."""
    kind = layer["kind"]
    if kind == "conv1d":
        dx, dw, db = kernels.conv1d_backward(cache, p["w"], np.ascontiguousarray(dy), need_dx)
        return dx, {"w": dw, "b": db}
    if kind == "relu":
        return dy * (cache > 0), {}
    if kind == "maxpool1d":
        return kernels.maxpool2_backward(cache, np.ascontiguousarray(dy)), {}
    if kind == "gap":
        shape = cache
        return np.broadcast_to(dy[:, None, :] / shape[1], shape).copy(), {}
    if kind == "dense":
        flat, shape = cache
        grads = {"w": flat.T @ dy, "b": dy.sum(axis=0)}
        return (dy @ p["w"].T).reshape(shape) if need_dx else None, grads
    if kind == "dropout":
        return (dy if cache is None else dy * cache), {}
    if kind == "softmax":
        y = cache
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True)), {}
    raise ShapeError(f"unknown layer kind {kind!r}")


def _layer_params(params: ParamTree, i: int, layer: dict) -> dict:
    kind = layer["kind"]
    if kind in ("conv1d", "dense"):
        return {"w": params[f"{i}.{kind}.w"], "b": params[f"{i}.{kind}.b"]}
    return {}


def _check_input(arch: ArchSpec, batch: np.ndarray):
    if batch.shape[1:] != arch.input_shape:
        raise ShapeError(f"layer 0: input shape {batch.shape[1:]} does not match "
                         f"architecture input {arch.input_shape}")


# -- network passes ----------------------------------------------------------


def forward(arch: ArchSpec, params: ParamTree, batch, training: bool = False,
            dropout_seed: int = 0, stop: int | None = None):
    """Run layers ``[0, stop)``; return ``(output, caches)``.

    With the default ``stop`` this yields class probabilities ``(B, C)``.
    """
    x = np.asarray(batch, dtype=params.dtype)
    _check_input(arch, x)
    caches = []
    layers = arch.layers if stop is None else arch.layers[:stop]
    for i, layer in enumerate(layers):
        rng = rng_for(dropout_seed, "dropout", i) if layer["kind"] == "dropout" and training else None
        x, cache = layer_forward(layer, _layer_params(params, i, layer), x, training, rng)
        caches.append(cache)
    return x, caches


def backward(arch: ArchSpec, params: ParamTree, caches, dout, start: int | None = None) -> ParamTree:
    """Backpropagate ``dout`` (gradient of the output of layer ``start - 1``)."""
    n = len(caches) if start is None else start
    grads = {}
    dy = dout
    for i in range(n - 1, -1, -1):
        layer = arch.layers[i]
        dx, g = layer_backward(layer, _layer_params(params, i, layer), caches[i], dy,
                               need_dx=i > 0)
        for k, v in g.items():
            grads[f"{i}.{layer['kind']}.{k}"] = v
        dy = dx
    return ParamTree({k: grads[k] for k in params.arrays}, dict(params.tags))


def loss_and_grad(arch: ArchSpec, params: ParamTree, batch, labels, training: bool = True,
                  dropout_seed: int = 0):
    """Mean cross-entropy of the softmax output and its gradient tree."""
    head = arch.head_index
    if head is None:
        raise ShapeError("loss needs a dense + softmax head")
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(arch.layers[head]["units"])
    if len(labels) and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must be in [0, {n_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    logits, caches = forward(arch, params, batch, training, dropout_seed, stop=len(arch.layers) - 1)
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(labels))
    loss = float(np.mean(logsum - z[rows, labels]))
    probs = np.exp(z - logsum[:, None])
    dlogits = probs
    dlogits[rows, labels] -= 1
    dlogits /= len(labels)
    return loss, backward(arch, params, caches, dlogits)


def predict_proba(arch: ArchSpec, params: ParamTree, X, batch_size: int = 256) -> np.ndarray:
    out = []
    for s in range(0, len(X), batch_size):
        out.append(forward(arch, params, X[s:s + batch_size])[0])
    if not out:
        return np.zeros((0, arch.n_classes or 0), dtype=params.dtype)
    return np.concatenate(out)


def predict(arch: ArchSpec, params: ParamTree, X, batch_size: int = 256) -> np.ndarray:
    """Arg-max class per window; ties go to the lowest index."""
    return predict_proba(arch, params, X, batch_size).argmax(axis=1)


def embed(arch: ArchSpec, params: ParamTree, X, batch_size: int = 256) -> np.ndarray:
    """Feature-extractor output (the head's input) per window."""
    head = arch.head_index
    if head is None:
        raise ShapeError("architecture has no head to split at")
    out = [forward(arch, params, X[s:s + batch_size], stop=head)[0].reshape(
        len(X[s:s + batch_size]), -1) for s in range(0, len(X), batch_size)]
    width = int(np.prod(arch.shapes()[head - 1])) if head else int(np.prod(arch.input_shape))
    return np.concatenate(out) if out else np.zeros((0, width), dtype=params.dtype)


def head_forward(arch: ArchSpec, params: ParamTree, features) -> np.ndarray:
    """Class probabilities from exported features (head dense + softmax only)."""
    head = arch.head_index
    x = np.asarray(features, dtype=params.dtype)
    for i in range(head, len(arch.layers)):
        x, _ = layer_forward(arch.layers[i], _layer_params(params, i, arch.layers[i]), x)
    return x
