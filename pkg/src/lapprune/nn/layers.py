"""Layer kinds of the feed-forward engine.

Every layer maps a batch (leading axis N) to a batch and exposes
``forward(x, training) -> (out, cache)`` and ``backward(dout, cache) -> (dx, grads)``.
Parameters live in ``layer.params`` (name -> float64 array).
"""

from __future__ import annotations

import numpy as np

from ..tensor import PADDING_MODES, im2col, pad2d, unpad2d_grad

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}

    def output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, x, training=False, update_stats=False):
        raise NotImplementedError

    def backward(self, dout, cache, need_dx=True):
        raise NotImplementedError

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def __repr__(self):
        shapes = ", ".join(f"{k}={v.shape}" for k, v in self.params.items())
        return f"{type(self).__name__}({shapes})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, W, b=None):
        super().__init__()
        W = np.asarray(W, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError(f"dense weight must be (out, in), got {W.shape}")
        b = np.zeros(W.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
        self.params = {"W": W, "b": b}

    @property
    def weight(self):
        return self.params["W"]

    def output_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.weight.shape[1]:
            raise ValueError(f"dense layer expects input ({self.weight.shape[1]},), got {in_shape}")
        return (self.weight.shape[0],)

    def forward(self, x, training=False, update_stats=False):
        return x @ self.params["W"].T + self.params["b"], x

    def backward(self, dout, x, need_dx=True):
        grads = {"W": dout.T @ x, "b": dout.sum(axis=0)}
        return (dout @ self.params["W"] if need_dx else None), grads

    def weight_grad_sq(self, dout, x):
        # sum over samples of the squared per-sample weight gradient outer(dout_n, x_n)
        return (dout * dout).T @ (x * x)


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, K, b=None, padding="same-zero"):
        super().__init__()
        K = np.asarray(K, dtype=np.float64)
        if K.ndim != 4:
            raise ValueError(f"conv kernel must be (out_ch, in_ch, kh, kw), got {K.shape}")
        if padding not in PADDING_MODES:
            raise ValueError(f"unknown padding mode {padding!r}")
        b = np.zeros(K.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
        self.params = {"W": K, "b": b}
        self.padding = padding

    @property
    def weight(self):
        return self.params["W"]

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.weight.shape[1]:
            raise ValueError(f"conv layer expects ({self.weight.shape[1]}, H, W), got {in_shape}")
        return (self.weight.shape[0],) + tuple(in_shape[1:])

    def forward(self, x, training=False, update_stats=False):
        K = self.params["W"]
        N, _, H, W = x.shape
        O, _, kh, kw = K.shape
        cols = im2col(x, kh, kw, self.padding)
        out = cols @ K.reshape(O, -1).T + self.params["b"]
        return out.transpose(0, 2, 1).reshape(N, O, H, W), (x.shape, cols)

    def backward(self, dout, cache, need_dx=True):
        x_shape, cols = cache
        K = self.params["W"]
        N, C, H, W = x_shape
        O, _, kh, kw = K.shape
        d = dout.reshape(N, O, H * W)
        dK = np.einsum("nop,npk->ok", d, cols).reshape(K.shape)
        grads = {"W": dK, "b": d.sum(axis=(0, 2))}
        if not need_dx:
            return None, grads
        # scatter column gradients back onto the padded input
        dcols = np.einsum("nop,ok->npk", d, K.reshape(O, -1)).reshape(N, H, W, C, kh, kw)
        Hp, Wp = H + kh - 1, W + kw - 1
        dxp = np.zeros((N, C, Hp, Wp))
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + H, j:j + W] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return unpad2d_grad(dxp, kh, kw, self.padding), grads

    def weight_grad_sq(self, dout, cache):
        _, cols = cache
        N, O = dout.shape[:2]
        d = dout.reshape(N, O, -1)
        per_sample = np.einsum("nop,npk->nok", d, cols)
        return (per_sample ** 2).sum(axis=0).reshape(self.weight.shape)


class BatchNorm(Layer):
    """Per-feature (dense) or per-channel (conv) normalisation."""

    kind = "batchnorm"

    def __init__(self, gamma, beta=None, running_mean=None, running_var=None,
                 eps=1e-5, momentum=0.9):
        super().__init__()
        gamma = np.asarray(gamma, dtype=np.float64)
        n = gamma.shape[0]
        self.params = {
            "gamma": gamma,
            "beta": np.zeros(n) if beta is None else np.asarray(beta, dtype=np.float64),
        }
        self.running_mean = np.zeros(n) if running_mean is None else np.asarray(running_mean, dtype=np.float64)
        self.running_var = np.ones(n) if running_var is None else np.asarray(running_var, dtype=np.float64)
        if eps <= 0:
            raise ValueError("batchnorm eps must be positive")
        if np.any(self.running_var < 0):
            raise ValueError("batchnorm running variance must be nonnegative")
        self.eps = float(eps)
        self.momentum = float(momentum)

    def copy(self):
        new = super().copy()
        new.running_mean = self.running_mean.copy()
        new.running_var = self.running_var.copy()
        return new

    @property
    def size(self):
        return self.params["gamma"].shape[0]

    def effective_scale(self) -> np.ndarray:
        """Per-unit slope of the eval-mode affine map ``x -> a*x + b``."""
        return self.params["gamma"] / np.sqrt(self.running_var + self.eps)

    def output_shape(self, in_shape):
        if in_shape[0] != self.size:
            raise ValueError(f"batchnorm over {self.size} units got input {in_shape}")
        return in_shape

    @staticmethod
    def _axes(x):
        return (0,) if x.ndim == 2 else (0, 2, 3)

    def _bcast(self, v, x):
        return v if x.ndim == 2 else v[None, :, None, None]

    def forward(self, x, training=False, update_stats=False):
        g, b = self.params["gamma"], self.params["beta"]
        if training:
            axes = self._axes(x)
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if update_stats:
                m = self.momentum
                self.running_mean = m * self.running_mean + (1 - m) * mean
                self.running_var = m * self.running_var + (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._bcast(mean, x)) * self._bcast(inv, x)
        out = xhat * self._bcast(g, x) + self._bcast(b, x)
        return out, (xhat, inv, training)

    def backward(self, dout, cache, need_dx=True):
        xhat, inv, training = cache
        axes = self._axes(dout)
        g = self._bcast(self.params["gamma"], dout)
        grads = {"gamma": (dout * xhat).sum(axis=axes), "beta": dout.sum(axis=axes)}
        dxhat = dout * g
        if not training:
            return dxhat * self._bcast(inv, dout), grads
        m = dout.size / dout.shape[1]
        mean_d = self._bcast(dxhat.sum(axis=axes) / m, dout)
        mean_dx = self._bcast((dxhat * xhat).sum(axis=axes) / m, dout)
        dx = (dxhat - mean_d - xhat * mean_dx) * self._bcast(inv, dout)
        return dx, grads


class Activation(Layer):
    kind = "activation"

    def __init__(self, fn="relu"):
        super().__init__()
        if fn not in ACTIVATIONS:
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn

    def __repr__(self):
        return f"Activation({self.fn})"

    def forward(self, x, training=False, update_stats=False):
        if self.fn == "relu":
            out = np.maximum(x, 0.0)
        elif self.fn == "sigmoid":
            out = 0.5 * (1.0 + np.tanh(0.5 * x))
        elif self.fn == "tanh":
            out = np.tanh(x)
        else:
            out = x
        return out, (x, out)

    def backward(self, dout, cache, need_dx=True):
        x, out = cache
        if self.fn == "relu":
            return dout * (x > 0), {}
        if self.fn == "sigmoid":
            return dout * out * (1.0 - out), {}
        if self.fn == "tanh":
            return dout * (1.0 - out * out), {}
        return dout, {}


class MaxPool2d(Layer):
    """2x2 window, stride 2."""

    kind = "maxpool2d"

    def __repr__(self):
        return "MaxPool2d(2)"

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[1] % 2 or in_shape[2] % 2:
            raise ValueError(f"maxpool needs (C, H, W) with even H, W, got {in_shape}")
        return (in_shape[0], in_shape[1] // 2, in_shape[2] // 2)

    def forward(self, x, training=False, update_stats=False):
        N, C, H, W = x.shape
        win = x.reshape(N, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(N, C, H // 2, W // 2, 4)
        arg = win.argmax(axis=-1)
        out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        return out, (x.shape, arg)

    def backward(self, dout, cache, need_dx=True):
        (N, C, H, W), arg = cache
        dwin = np.zeros((N, C, H // 2, W // 2, 4))
        np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
        dx = dwin.reshape(N, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return dx.reshape(N, C, H, W), {}


class Flatten(Layer):
    kind = "flatten"

    def __repr__(self):
        return "Flatten()"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False, update_stats=False):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, shape, need_dx=True):
        return dout.reshape(shape), {}
