"""Minimal layers with explicit forward/backward passes (float64 unless cast).

Images are NHWC.  Every layer caches what its backward pass needs during
``forward``; ``backward`` takes dL/d(output), stores parameter gradients in
``grads`` and returns dL/d(input).
"""

from __future__ import annotations

import copy

import numpy as np


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def describe(self) -> str:
        return self.kind

    def output_shape(self, shape: tuple) -> tuple:
        return shape


class Dense(Layer):
    kind = "dense"

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        w = glorot(rng, (d_in, d_out), d_in, d_out) if rng is not None else np.zeros((d_in, d_out))
        self.params = {"W": w, "b": np.zeros(d_out)}

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ValueError(f"dense layer expects (batch, {self.d_in}) input, got {x.shape}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T

    def describe(self):
        return f"dense:{self.d_out}"

    def output_shape(self, shape):
        return (self.d_out,)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class GlobalAvgPool(Layer):
    kind = "gap"

    def forward(self, x):
        if x.ndim != 4:
            raise ValueError(f"global average pool expects NHWC input, got {x.shape}")
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dy):
        B, H, W, C = self._shape
        return np.broadcast_to(dy[:, None, None, :] / (H * W), self._shape).copy()

    def output_shape(self, shape):
        return (shape[2],)


class Conv2d(Layer):
    """3x3 convolution, stride 2, zero padding 1 (so H -> ceil(H / 2))."""

    kind = "conv"
    k, stride, pad = 3, 2, 1

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        fan_in, fan_out = 9 * c_in, 9 * c_out
        w = glorot(rng, (9 * c_in, c_out), fan_in, fan_out) if rng is not None else np.zeros((9 * c_in, c_out))
        self.params = {"W": w, "b": np.zeros(c_out)}

    def _out_hw(self, H, W):
        return (H + 2 * self.pad - self.k) // self.stride + 1, (W + 2 * self.pad - self.k) // self.stride + 1

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.c_in:
            raise ValueError(f"conv layer expects (batch, H, W, {self.c_in}) input, got {x.shape}")
        B, H, W, C = x.shape
        Ho, Wo = self._out_hw(H, W)
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        s = self.stride
        cols = np.empty((B, Ho, Wo, 9, C), dtype=np.result_type(x, self.params["W"]))
        for ky in range(3):
            for kx in range(3):
                cols[:, :, :, 3 * ky + kx, :] = xp[:, ky:ky + s * Ho:s, kx:kx + s * Wo:s, :]
        cols = cols.reshape(B * Ho * Wo, 9 * C)
        self._cols, self._shape = cols, (B, H, W, C, Ho, Wo)
        out = cols @ self.params["W"] + self.params["b"]
        return out.reshape(B, Ho, Wo, self.c_out)

    def backward(self, dy):
        B, H, W, C, Ho, Wo = self._shape
        d2 = dy.reshape(-1, self.c_out)
        self.grads["W"] = self._cols.T @ d2
        self.grads["b"] = d2.sum(axis=0)
        dcols = (d2 @ self.params["W"].T).reshape(B, Ho, Wo, 9, C)
        dxp = np.zeros((B, H + 2, W + 2, C), dtype=dcols.dtype)
        s = self.stride
        for ky in range(3):
            for kx in range(3):
                dxp[:, ky:ky + s * Ho:s, kx:kx + s * Wo:s, :] += dcols[:, :, :, 3 * ky + kx, :]
        return dxp[:, 1:-1, 1:-1, :]

    def describe(self):
        return f"conv:{self.c_out}"

    def output_shape(self, shape):
        H, W, _ = shape
        return (*self._out_hw(H, W), self.c_out)


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def parameters(self):
        """(layer index, name, array) for every parameter, in a fixed order."""
        return [(i, name, arr) for i, layer in enumerate(self.layers) for name, arr in sorted(layer.params.items())]

    def relu_masks(self) -> list[np.ndarray]:
        """Activation patterns from the most recent forward pass."""
        return [layer._mask for layer in self.layers if isinstance(layer, ReLU)]

    def astype(self, convert) -> "Sequential":
        """Deep copy with every parameter passed through ``convert`` (a dtype
        or a callable mapping arrays to arrays)."""
        if not callable(convert) or isinstance(convert, type):
            dtype = convert
            convert = lambda a: a.astype(dtype)  # noqa: E731
        clone = copy.deepcopy(self)
        for layer in clone.layers:
            layer.params = {k: convert(v) for k, v in layer.params.items()}
            layer.grads = {}
        return clone

    def gradients(self):
        return [self.layers[i].grads[name] for i, name, _ in self.parameters()]

    def n_params(self) -> int:
        return sum(a.size for _, _, a in self.parameters())


def build_network(input_shape: tuple, layers, out_dim: int | None, rng: np.random.Generator | None) -> Sequential:
    """Instantiate layers from tokens like ``conv:8``, ``relu``, ``gap``,
    ``dense:64``; a final ``dense:out_dim`` is appended when ``out_dim`` is
    given.  ``rng=None`` builds an all-zero network."""
    tokens = list(layers) + ([f"dense:{out_dim}"] if out_dim is not None else [])
    shape = tuple(input_shape)
    built: list[Layer] = []
    for tok in tokens:
        kind, _, arg = tok.partition(":")
        if kind == "conv":
            if len(shape) != 3:
                raise ValueError(f"conv layer needs an image input, current shape {shape}")
            layer = Conv2d(shape[2], int(arg), rng)
        elif kind == "dense":
            if len(shape) != 1:
                raise ValueError(f"dense layer needs a vector input, current shape {shape}; add 'gap' first")
            layer = Dense(shape[0], int(arg), rng)
        elif kind == "relu":
            layer = ReLU()
        elif kind == "gap":
            if len(shape) != 3:
                raise ValueError("gap needs an image-shaped input")
            layer = GlobalAvgPool()
        else:
            raise ValueError(f"unknown layer token {tok!r}")
        shape = layer.output_shape(shape)
        built.append(layer)
    return Sequential(built)


# --- optimizers -------------------------------------------------------------

class SGD:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-2, momentum: float = 0.9):
        self.params, self.lr, self.momentum = params, lr, momentum
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        for p, g, v in zip(self.params, grads, self.v):
            v *= self.momentum
            v -= self.lr * g
            p += v


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params, self.lr, self.b1, self.b2, self.eps = params, lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg, params):
    if cfg.optimizer == "adam":
        return Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.lr, cfg.momentum)
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


# --- supervised losses ------------------------------------------------------

def softmax_cross_entropy(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    B = logits.shape[0]
    loss = -logp[np.arange(B), y].mean()
    g = np.exp(logp)
    g[np.arange(B), y] -= 1.0
    return float(loss), g / B


def mean_squared_error(pred: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    r = pred - y.reshape(pred.shape)
    return float(np.mean(r * r)), 2.0 * r / r.size
