"""Fully connected ReLU network with hand-written backpropagation."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"SSKM"
VERSION = 1


@dataclass
class Mlp:
    """Affine layers with ReLU between them and an identity head.

    ``weights[l]`` has shape ``(dims[l], dims[l+1])`` so a batch is
    propagated as ``x @ W + b``.
    """

    weights: list
    biases: list

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params) -> "Mlp":
        return Mlp(list(params[0::2]), list(params[1::2]))

    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "Mlp":
        return self.with_params([p.copy() for p in self.params()])


def init(dims, seed: int = 0) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"need at least an input and an output dimension, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def forward(mlp: Mlp, x):
    """Returns ``(outputs, cache)``; ``cache`` holds every layer input and pre-activation."""
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != mlp.weights[0].shape[0]:
        raise ValueError(f"expected a (batch, {mlp.weights[0].shape[0]}) input, got {h.shape}")
    inputs, pre = [], []
    last = len(mlp.weights) - 1
    for l, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if l < last else z
    return h, (inputs, pre)


def backward(mlp: Mlp, cache, grad_out):
    """Returns ``(param_grads, grad_x)`` with ``param_grads`` ordered like ``mlp.params()``."""
    inputs, pre = cache
    if len(inputs) != len(mlp.weights):
        raise ValueError("cache does not match this model")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != pre[-1].shape:
        raise ValueError(f"grad_out shape {g.shape} does not match output shape {pre[-1].shape}")
    grads = [None] * (2 * len(mlp.weights))
    for l in range(len(mlp.weights) - 1, -1, -1):
        if l < len(mlp.weights) - 1:
            g = g * (pre[l] > 0)  # ReLU'(0) := 0
        grads[2 * l] = inputs[l].T @ g
        grads[2 * l + 1] = g.sum(axis=0)
        g = g @ mlp.weights[l].T
    return grads, g


def save(mlp: Mlp, path) -> None:
    dims = mlp.dims
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(f"<II{len(dims)}I", VERSION, len(mlp.weights), *dims))
        for p in mlp.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load(path) -> Mlp:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic {blob[:4]!r})")
    version, layers = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    dims = list(struct.unpack_from(f"<{layers + 1}I", blob, off))
    off += 4 * (layers + 1)
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            if off + 8 * count > len(blob):
                raise ValueError(f"{path}: truncated checkpoint")
            params.append(np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy())
            off += 8 * count
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes after parameters")
    return Mlp(params[0::2], params[1::2])
