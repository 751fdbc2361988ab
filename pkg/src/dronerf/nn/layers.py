"""Layers with explicit forward/backward passes.

Activations are channels-last (``[B, H, W, C]``).  Each layer keeps what its
backward pass needs from the most recent training-mode forward call.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


def kaiming(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv3x3(Layer):
    """3x3 convolution, stride 1, zero padding 1; weight layout ``[3, 3, C_in, C_out]``."""

    def __init__(self, c_in, c_out, rng, dtype=np.float32):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.params["weight"] = kaiming(rng, (3, 3, c_in, c_out), 9 * c_in, dtype)
        self.params["bias"] = np.zeros(c_out, dtype)
        self.zero_grad()
        self._cols = None
        # the network's first conv skips the (unused) input gradient
        self.input_grad = True

    def forward(self, x, train=False):
        B, H, W, C = x.shape
        if C != self.c_in:
            raise InvalidInputError(f"conv expects {self.c_in} channels, got {C}")
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        cols = np.concatenate([xp[:, i : i + H, j : j + W, :] for i in range(3) for j in range(3)], axis=-1)
        w = self.params["weight"].reshape(9 * C, self.c_out)
        y = cols.reshape(-1, 9 * C) @ w + self.params["bias"]
        if train:
            self._cols = cols
            self._shape = x.shape
        return y.reshape(B, H, W, self.c_out)

    def backward(self, dy):
        B, H, W, C = self._shape
        dyf = dy.reshape(-1, self.c_out)
        cols = self._cols.reshape(-1, 9 * C)
        self.grads["weight"] += (cols.T @ dyf).reshape(3, 3, C, self.c_out)
        self.grads["bias"] += dyf.sum(axis=0)
        if not self.input_grad:
            return None
        w = self.params["weight"].reshape(9 * C, self.c_out)
        dcols = (dyf @ w.T).reshape(B, H, W, 9 * C)
        dxp = np.zeros((B, H + 2, W + 2, C), dtype=dy.dtype)
        k = 0
        for i in range(3):
            for j in range(3):
                dxp[:, i : i + H, j : j + W, :] += dcols[..., k * C : (k + 1) * C]
                k += 1
        return dxp[:, 1:-1, 1:-1, :]


class BatchNorm(Layer):
    """Per-channel batch normalisation over all leading axes."""

    def __init__(self, channels, dtype=np.float32, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(channels, dtype)
        self.params["beta"] = np.zeros(channels, dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype)
        self.buffers["running_var"] = np.ones(channels, dtype)
        self.zero_grad()

    def forward(self, x, train=False):
        C = x.shape[-1]
        flat = x.reshape(-1, C)
        if train:
            n = flat.shape[0]
            mu = flat.mean(axis=0)
            xc = flat - mu
            var = np.einsum("ij,ij->j", xc, xc) / n
            m = self.momentum
            unbiased = var * n / max(n - 1, 1)
            self.buffers["running_mean"] = ((1 - m) * self.buffers["running_mean"] + m * mu).astype(x.dtype)
            self.buffers["running_var"] = ((1 - m) * self.buffers["running_var"] + m * unbiased).astype(x.dtype)
        else:
            mu = self.buffers["running_mean"]
            var = self.buffers["running_var"]
            xc = flat - mu
        inv = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        xhat = xc * inv
        if train:
            self._xhat, self._inv = xhat, inv
        return (xhat * self.params["gamma"] + self.params["beta"]).reshape(x.shape)

    def backward(self, dy):
        C = dy.shape[-1]
        d = dy.reshape(-1, C)
        xhat, inv = self._xhat, self._inv
        n = d.shape[0]
        self.grads["gamma"] += np.einsum("ij,ij->j", d, xhat)
        self.grads["beta"] += d.sum(axis=0)
        dxhat = d * self.params["gamma"]
        s1 = dxhat.sum(axis=0)
        s2 = np.einsum("ij,ij->j", dxhat, xhat)
        return ((inv / n) * (n * dxhat - s1 - xhat * s2)).reshape(dy.shape)


class ReLU(Layer):
    def forward(self, x, train=False):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._mask


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; the first maximum of a window receives the gradient."""

    def forward(self, x, train=False):
        B, H, W, C = x.shape
        if H % 2 or W % 2:
            raise InvalidInputError(f"max-pool needs even spatial size, got {H}x{W}")
        q = (x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2])
        out = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
        if train:
            taken = np.zeros(out.shape, dtype=bool)
            masks = []
            for v in q:
                hit = (v == out) & ~taken
                taken |= hit
                masks.append(hit)
            self._masks, self._shape = masks, x.shape
        return out

    def backward(self, dy):
        dx = np.zeros(self._shape, dtype=dy.dtype)
        m = self._masks
        dx[:, 0::2, 0::2] = dy * m[0]
        dx[:, 0::2, 1::2] = dy * m[1]
        dx[:, 1::2, 0::2] = dy * m[2]
        dx[:, 1::2, 1::2] = dy * m[3]
        return dx


class GlobalAvgPool(Layer):
    def forward(self, x, train=False):
        if train:
            self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dy):
        B, H, W, C = self._shape
        return np.broadcast_to(dy[:, None, None, :] / (H * W), self._shape).astype(dy.dtype)


class Dense(Layer):
    def __init__(self, d_in, d_out, rng, dtype=np.float32):
        super().__init__()
        self.params["weight"] = kaiming(rng, (d_in, d_out), d_in, dtype)
        self.params["bias"] = np.zeros(d_out, dtype)
        self.zero_grad()

    def forward(self, x, train=False):
        if x.shape[-1] != self.params["weight"].shape[0]:
            raise InvalidInputError("dense input width mismatch")
        if train:
            self._x = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, dy):
        self.grads["weight"] += self._x.T @ dy
        self.grads["bias"] += dy.sum(axis=0)
        return dy @ self.params["weight"].T
