"""Layer implementations with analytic backward passes.

Tensors are NCHW. Each layer caches what its backward pass needs during
``forward`` and writes parameter gradients into ``self.grads`` (same keys as
``self.params``) during ``backward``.

Convolution is cross-correlation: the kernel is not flipped.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


class Layer:
    kind = "layer"
    params: dict
    buffers: dict

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self.needs_input_grad = True
        self.name = self.kind

    def init_params(self, rng, dtype):
        pass

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _expect_ndim(self, x, ndim):
        if x.ndim != ndim:
            raise ShapeError(f"{self.name}: expected {ndim}-d input, got shape {x.shape}")


def _he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, in_ch, out_ch, k, stride=1, pad=0):
        super().__init__()
        self.in_ch, self.out_ch, self.k, self.stride, self.pad = in_ch, out_ch, k, stride, pad

    def init_params(self, rng, dtype):
        fan_in = self.in_ch * self.k * self.k
        self.params["weight"] = _he_normal(rng, (self.out_ch, self.in_ch, self.k, self.k), fan_in, dtype)
        self.params["bias"] = np.zeros(self.out_ch, dtype=dtype)

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_ch:
            raise ShapeError(f"{self.name}: expected {self.in_ch} input channels, got {c}")
        ho = (h + 2 * self.pad - self.k) // self.stride + 1
        wo = (w + 2 * self.pad - self.k) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"{self.name}: kernel {self.k} larger than padded input {h}x{w}")
        return (self.out_ch, ho, wo)

    def forward(self, x, train=False, rng=None):
        self._expect_ndim(x, 4)
        n, c = x.shape[:2]
        _, ho, wo = self.output_shape(x.shape[1:])
        p, s, k = self.pad, self.stride, self.k
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        # Channel-major im2col: rows (C, ki, kj), columns (N, Ho, Wo).
        xt = xp.transpose(1, 0, 2, 3)
        cols = np.empty((c, k, k, n, ho, wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, i, j] = xt[:, :, i : i + s * ho : s, j : j + s * wo : s]
        cols = cols.reshape(c * k * k, -1)
        out = self.params["weight"].reshape(self.out_ch, -1) @ cols + self.params["bias"][:, None]
        self._cache = (cols, xp.shape, ho, wo)
        return np.ascontiguousarray(out.reshape(self.out_ch, n, ho, wo).transpose(1, 0, 2, 3))

    def backward(self, dout):
        cols, xp_shape, ho, wo = self._cache
        n = dout.shape[0]
        d2 = dout.transpose(1, 0, 2, 3).reshape(self.out_ch, -1)
        w2 = self.params["weight"].reshape(self.out_ch, -1)
        self.grads["weight"] = (d2 @ cols.T).reshape(self.params["weight"].shape)
        self.grads["bias"] = d2.sum(axis=1)
        if not self.needs_input_grad:
            return None
        k, s, p = self.k, self.stride, self.pad
        dcols = (w2.T @ d2).reshape(self.in_ch, k, k, n, ho, wo)
        dxp = np.zeros((self.in_ch, n) + tuple(xp_shape[2:]), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[:, i, j]
        dxp = dxp.transpose(1, 0, 2, 3)
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return np.ascontiguousarray(dxp)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class MaxPool2D(Layer):
    """Max pooling; gradient goes to the first maximal element of each window."""

    kind = "maxpool"

    def __init__(self, k=2, stride=None):
        super().__init__()
        self.k = k
        self.stride = stride if stride is not None else k

    def output_shape(self, in_shape):
        c, h, w = in_shape
        ho = (h - self.k) // self.stride + 1
        wo = (w - self.k) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"{self.name}: window {self.k} larger than input {h}x{w}")
        return (c, ho, wo)

    def _windows(self, a, ho, wo):
        k, s = self.k, self.stride
        for i in range(k):
            for j in range(k):
                yield (slice(None), slice(None), slice(i, i + s * ho, s), slice(j, j + s * wo, s))

    def forward(self, x, train=False, rng=None):
        self._expect_ndim(x, 4)
        _, ho, wo = self.output_shape(x.shape[1:])
        out = None
        for sl in self._windows(x, ho, wo):
            if out is None:
                out = x[sl].copy()
            else:
                np.maximum(out, x[sl], out=out)
        self._cache = (x, out, ho, wo)
        return out

    def backward(self, dout):
        x, out, ho, wo = self._cache
        dx = np.zeros(x.shape, dtype=dout.dtype)
        taken = np.zeros(out.shape, dtype=bool)
        for sl in self._windows(x, ho, wo):
            hit = (x[sl] == out) & ~taken
            dx[sl] += dout * hit
            taken |= hit
        return dx


class BatchNorm(Layer):
    """Batch normalization over channels (4-d input) or features (2-d input).

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``.
    """

    kind = "batchnorm"

    def __init__(self, n_features, momentum=0.9, eps=1e-5):
        super().__init__()
        self.n_features, self.momentum, self.eps = n_features, momentum, eps

    def init_params(self, rng, dtype):
        self.params["gamma"] = np.ones(self.n_features, dtype=dtype)
        self.params["beta"] = np.zeros(self.n_features, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(self.n_features, dtype=dtype)
        self.buffers["running_var"] = np.ones(self.n_features, dtype=dtype)

    def output_shape(self, in_shape):
        if in_shape[0] != self.n_features:
            raise ShapeError(f"{self.name}: expected {self.n_features} features, got {in_shape[0]}")
        return in_shape

    def _axes_and_view(self, x):
        if x.ndim == 4:
            return (0, 2, 3), (1, -1, 1, 1)
        if x.ndim == 2:
            return (0,), (1, -1)
        raise ShapeError(f"{self.name}: expected 2-d or 4-d input, got shape {x.shape}")

    @staticmethod
    def _sum(a, axes):
        # Reduce the contiguous spatial axes first; much faster than a joint reduction.
        if len(axes) == 3:
            return a.reshape(a.shape[0], a.shape[1], -1).sum(axis=2).sum(axis=0)
        return a.sum(axis=0)

    def forward(self, x, train=False, rng=None):
        axes, view = self._axes_and_view(x)
        if x.shape[1] != self.n_features:
            raise ShapeError(f"{self.name}: expected {self.n_features} features, got {x.shape[1]}")
        gamma = self.params["gamma"].reshape(view)
        beta = self.params["beta"].reshape(view)
        if not train:
            mean = self.buffers["running_mean"].reshape(view)
            var = self.buffers["running_var"].reshape(view)
            return (x - mean) / np.sqrt(var + self.eps) * gamma + beta
        count = x.size // self.n_features
        mean = self._sum(x, axes) / count
        xc = x - mean.reshape(view)
        var = self._sum(xc * xc, axes) / count
        m = self.momentum
        dtype = self.buffers["running_mean"].dtype
        self.buffers["running_mean"] = (m * self.buffers["running_mean"] + (1 - m) * mean).astype(dtype)
        self.buffers["running_var"] = (m * self.buffers["running_var"] + (1 - m) * var).astype(dtype)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = xc
        xhat *= inv_std.reshape(view)
        self._cache = (xhat, inv_std, axes, view)
        return xhat * gamma + beta

    def backward(self, dout):
        xhat, inv_std, axes, view = self._cache
        count = dout.size // self.n_features
        dxhat_sum = self._sum(dout, axes)
        dxhat_dot = self._sum(dout * xhat, axes)
        self.grads["gamma"] = dxhat_dot
        self.grads["beta"] = dxhat_sum
        gamma = self.params["gamma"]
        dxhat = dout * gamma.reshape(view)
        s1 = (dxhat_sum * gamma).reshape(view)
        s2 = (dxhat_dot * gamma).reshape(view)
        return (inv_std.reshape(view) / count) * (count * dxhat - s1 - xhat * s2)


class Dropout(Layer):
    """Inverted dropout: scaled at train time, identity at eval time."""

    kind = "dropout"

    def __init__(self, rate=0.5):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs a random generator")
        keep = rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim, out_dim):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim

    def init_params(self, rng, dtype):
        self.params["weight"] = _he_normal(rng, (self.in_dim, self.out_dim), self.in_dim, dtype)
        self.params["bias"] = np.zeros(self.out_dim, dtype=dtype)

    def output_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_dim:
            raise ShapeError(f"{self.name}: expected flat input of {self.in_dim}, got {in_shape}")
        return (self.out_dim,)

    def forward(self, x, train=False, rng=None):
        self._expect_ndim(x, 2)
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"{self.name}: expected {self.in_dim} inputs, got {x.shape[1]}")
        self._x = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, dout):
        self.grads["weight"] = self._x.T @ dout
        self.grads["bias"] = dout.sum(axis=0)
        if not self.needs_input_grad:
            return None
        return dout @ self.params["weight"].T


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
