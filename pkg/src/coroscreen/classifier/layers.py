"""Dense and convolutional layers with exact backprop gradients.

All layers run in float64.  forward(x, train, rng) caches what backward
needs; backward(grad) returns the input gradient and fills self.grads
keyed like self.params.
"""

from __future__ import annotations

import numpy as np


class Layer:
    params: dict[str, np.ndarray] = {}
    grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2D(Layer):
    """Same-padded k x k convolution on NHWC blocks."""

    def __init__(self, in_ch: int, out_ch: int, rng, kernel: int = 3):
        if kernel % 2 != 1:
            raise ValueError("kernel must be odd for same padding")
        fan_in = kernel * kernel * in_ch
        self.kernel = kernel
        self.params = {
            "w": rng.normal(0.0, np.sqrt(2.0 / fan_in), (kernel, kernel, in_ch, out_ch)),
            "b": np.zeros(out_ch),
        }
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False, rng=None):
        k = self.kernel
        pad = k // 2
        n, h, w, c = x.shape
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
        patches = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, k * k * c)
        wmat = self.params["w"].reshape(k * k * c, -1)
        out = patches @ wmat + self.params["b"]
        self._cache = (patches, x.shape)
        return out.reshape(n, h, w, -1)

    def backward(self, grad):
        patches, (n, h, w, c) = self._cache
        k = self.kernel
        pad = k // 2
        gflat = grad.reshape(n * h * w, -1)
        wmat = self.params["w"].reshape(k * k * c, -1)
        self.grads = {
            "w": (patches.T @ gflat).reshape(self.params["w"].shape),
            "b": gflat.sum(axis=0),
        }
        dpatch = (gflat @ wmat.T).reshape(n, h, w, k, k, c)
        dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c))
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + h, j:j + w, :] += dpatch[:, :, :, i, j, :]
        return dxp[:, pad:pad + h, pad:pad + w, :]


class ReLU(Layer):
    def __init__(self):
        self.params, self.grads = {}, {}
        self._mask = None

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)


class MaxPool2D(Layer):
    """2x2 max pooling; trailing odd rows/columns are dropped."""

    def __init__(self):
        self.params, self.grads = {}, {}
        self._cache = None

    def forward(self, x, train=False, rng=None):
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        if h2 == 0 or w2 == 0:
            raise ValueError(f"input {x.shape} too small to pool")
        tiles = (x[:, :h2 * 2, :w2 * 2, :]
                 .reshape(n, h2, 2, w2, 2, c)
                 .transpose(0, 1, 3, 5, 2, 4)
                 .reshape(n, h2, w2, c, 4))
        idx = tiles.argmax(axis=-1)
        out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape)
        return out

    def backward(self, grad):
        idx, (n, h, w, c) = self._cache
        h2, w2 = h // 2, w // 2
        scattered = np.zeros((n, h2, w2, c, 4))
        np.put_along_axis(scattered, idx[..., None], grad[..., None], axis=-1)
        dx = np.zeros((n, h, w, c))
        dx[:, :h2 * 2, :w2 * 2, :] = (scattered
                                      .reshape(n, h2, w2, c, 2, 2)
                                      .transpose(0, 1, 4, 2, 5, 3)
                                      .reshape(n, h2 * 2, w2 * 2, c))
        return dx


class Flatten(Layer):
    def __init__(self):
        self.params, self.grads = {}, {}
        self._shape = None

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng):
        self.params = {
            "w": rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_out)),
            "b": np.zeros(n_out),
        }
        self.grads = {}
        self._x = None

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, grad):
        self.grads = {"w": self._x.T @ grad, "b": grad.sum(axis=0)}
        return grad @ self.params["w"].T


class Dropout(Layer):
    """Inverted dropout; identity when not training."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability {p} outside [0, 1)")
        self.p = p
        self.params, self.grads = {}, {}
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        self._mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask


def sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on raw logits and its logit gradient."""
    z = logits.reshape(-1)
    y = np.asarray(targets, dtype=float).reshape(-1)
    loss = np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z))))
    dz = (sigmoid(z) - y) / len(z)
    return float(loss), dz.reshape(logits.shape)
