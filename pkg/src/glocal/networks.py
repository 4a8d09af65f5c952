"""Fixed seeded convolution stacks standing in for trained networks.

Weights are drawn once from a seeded generator (or loaded from GLT1
files) and never updated.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .io import load_tensor, save_tensor

ACTIVATIONS = {
    "linear": lambda x: x,
    "relu": lambda x: np.maximum(x, 0.0),
    "leaky_relu": lambda x: np.where(x > 0, x, 0.2 * x),
    "tanh": np.tanh,
    "sigmoid": lambda x: 0.5 * (1.0 + np.tanh(0.5 * x)),
}


def conv2d(x, weight, bias=None, stride: int = 1) -> np.ndarray:
    """Zero-padded 'same'-style convolution of a C x H x W map (float64)."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    O, I, kh, kw = weight.shape
    if x.shape[0] != I:
        raise ShapeError(f"conv expects {I} input channels, got {x.shape[0]}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    out = np.tensordot(weight, win, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[:, None, None]
    return out


@dataclass
class ConvLayer:
    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    activation: str = "linear"

    def __call__(self, x):
        return ACTIVATIONS[self.activation](conv2d(x, self.weight, self.bias, self.stride))


class ConvStack:
    """Sequential conv layers; ``features(x)`` returns every layer's output."""

    def __init__(self, layers):
        self.layers = list(layers)

    @classmethod
    def seeded(cls, shapes, seed: int) -> "ConvStack":
        """Build from ``[(in, out, kernel, stride, activation), ...]``.

        Weights are normal with variance ``2 / fan_in``; biases are small.
        """
        rng = np.random.default_rng(seed)
        layers = []
        for c_in, c_out, k, stride, act in shapes:
            fan_in = c_in * k * k
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, k, k))
            b = rng.normal(0.0, 0.05, c_out)
            layers.append(ConvLayer(w.astype(np.float32), b.astype(np.float32), stride, act))
        return cls(layers)

    def features(self, x) -> list[np.ndarray]:
        out = []
        h = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            h = layer(h)
            out.append(h)
        return out

    def __call__(self, x) -> np.ndarray:
        return self.features(x)[-1]

    def save(self, directory, prefix: str) -> None:
        for i, layer in enumerate(self.layers):
            save_tensor(os.path.join(directory, f"{prefix}.{i}.weight.glt"), layer.weight)
            save_tensor(os.path.join(directory, f"{prefix}.{i}.bias.glt"), layer.bias)

    def load(self, directory, prefix: str) -> None:
        """Replace weights from files written by :meth:`save`; shapes must match."""
        for i, layer in enumerate(self.layers):
            w = load_tensor(os.path.join(directory, f"{prefix}.{i}.weight.glt"))
            b = load_tensor(os.path.join(directory, f"{prefix}.{i}.bias.glt"))
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ShapeError(f"{prefix}.{i}: loaded shapes {w.shape}/{b.shape} do not match")
            layer.weight, layer.bias = w, b
