"""Trainable layers with paired hand-derived backward passes.

Every layer works in float64, follows channels-last conventions, and keeps
whatever it needs from the forward pass to push gradients back. There is no
autodiff: each backward is written out and checked against central finite
differences in the test suite.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, DomainError, ShapeError

_sigmoid = lambda z: 1.0 / (1.0 + np.exp(-z))


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Base layer: ``build`` allocates parameters and chains shapes (no batch dim)."""

    param_order: tuple[str, ...] = ()
    buffer_order: tuple[str, ...] = ()

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.rng: np.random.Generator | None = None

    def build(self, in_shape: tuple, rng: np.random.Generator) -> tuple:
        raise NotImplementedError

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _relu(self, y: np.ndarray) -> np.ndarray:
        self._relu_mask = y > 0
        return np.maximum(y, 0.0)

    def _relu_back(self, g: np.ndarray) -> np.ndarray:
        return g * self._relu_mask


class Dense(Layer):
    """Affine map on the last axis; shared across any leading time/space axes."""

    param_order = ("W", "b")

    def __init__(self, units: int, activation: str | None = None):
        super().__init__()
        if activation not in (None, "relu"):
            raise ConfigurationError(f"unsupported dense activation {activation!r}")
        self.units = units
        self.activation = activation

    def build(self, in_shape, rng):
        fan_in = in_shape[-1]
        self.params["W"] = glorot_uniform(rng, (fan_in, self.units), fan_in, self.units)
        self.params["b"] = np.zeros(self.units)
        return (*in_shape[:-1], self.units)

    def forward(self, x, train):
        self._x = x
        y = x @ self.params["W"] + self.params["b"]
        return self._relu(y) if self.activation == "relu" else y

    def backward(self, g):
        if self.activation == "relu":
            g = self._relu_back(g)
        x2 = self._x.reshape(-1, self._x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        self.grads["W"] = x2.T @ g2
        self.grads["b"] = g2.sum(axis=0)
        return g @ self.params["W"].T


class Relu(Layer):
    def build(self, in_shape, rng):
        return in_shape

    def forward(self, x, train):
        return self._relu(x)

    def backward(self, g):
        return self._relu_back(g)


class Flatten(Layer):
    def build(self, in_shape, rng):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._shape)


def _pad_amounts(size: int, kernel: int) -> tuple[int, int]:
    # stride-1 'same': total pad kernel-1, extra on the right
    total = kernel - 1
    return total // 2, total - total // 2


class Conv1D(Layer):
    """Valid or same cross-correlation along time; features are channels."""

    param_order = ("W", "b")

    def __init__(self, filters: int, kernel_size: int, activation: str | None = None, padding: str = "valid"):
        super().__init__()
        if padding not in ("valid", "same"):
            raise ConfigurationError(f"conv padding must be valid|same, got {padding!r}")
        if activation not in (None, "relu"):
            raise ConfigurationError(f"unsupported conv activation {activation!r}")
        self.filters = filters
        self.kernel_size = kernel_size
        self.activation = activation
        self.padding = padding

    def build(self, in_shape, rng):
        if len(in_shape) != 2:
            raise ShapeError(f"conv1d expects (time, channels), got {in_shape}")
        t, c = in_shape
        k = self.kernel_size
        t_eff = t + (k - 1 if self.padding == "same" else 0)
        if t_eff < k:
            raise ShapeError(f"conv1d kernel {k} longer than time axis {t}")
        self.params["W"] = glorot_uniform(rng, (k, c, self.filters), k * c, k * self.filters)
        self.params["b"] = np.zeros(self.filters)
        return (t_eff - k + 1, self.filters)

    def _wmat(self):
        # (k, C, F) -> (C*k, F) matching the im2col column order (c, d)
        k, c, f = self.params["W"].shape
        return self.params["W"].transpose(1, 0, 2).reshape(c * k, f)

    def forward(self, x, train):
        k = self.kernel_size
        if self.padding == "same":
            lo, hi = _pad_amounts(x.shape[1], k)
            x = np.pad(x, ((0, 0), (lo, hi), (0, 0)))
        self._xp = x
        t_out = x.shape[1] - k + 1
        c = x.shape[2]
        # few input channels: one im2col GEMM; many: one GEMM per kernel offset
        # (an im2col copy of a wide column matrix costs more than it saves)
        if c * k <= 160:
            cols = np.empty((x.shape[0], t_out, c, k))
            for d in range(k):
                cols[:, :, :, d] = x[:, d:d + t_out, :]
            self._cols = cols.reshape(x.shape[0] * t_out, c * k)
            y = (self._cols @ self._wmat() + self.params["b"]).reshape(
                x.shape[0], t_out, self.filters
            )
        else:
            self._cols = None
            y = np.zeros((x.shape[0], t_out, self.filters)) + self.params["b"]
            for d in range(k):
                y += x[:, d:d + t_out, :] @ self.params["W"][d]
        return self._relu(y) if self.activation == "relu" else y

    def backward(self, g):
        if self.activation == "relu":
            g = self._relu_back(g)
        k = self.kernel_size
        xp = self._xp
        b, tp, c = xp.shape
        t_out = g.shape[1]
        dxp = np.zeros_like(xp)
        if self._cols is not None:
            g2 = g.reshape(b * t_out, self.filters)
            dwmat = self._cols.T @ g2
            self.grads["W"] = np.ascontiguousarray(
                dwmat.reshape(c, k, self.filters).transpose(1, 0, 2)
            )
            self.grads["b"] = g2.sum(axis=0)
            dcols = (g2 @ self._wmat().T).reshape(b, t_out, c, k)
            for d in range(k):
                dxp[:, d:d + t_out, :] += dcols[:, :, :, d]
        else:
            dW = np.empty_like(self.params["W"])
            for d in range(k):
                xs = xp[:, d:d + t_out, :]
                dW[d] = np.tensordot(xs, g, axes=([0, 1], [0, 1]))
                dxp[:, d:d + t_out, :] += g @ self.params["W"][d].T
            self.grads["W"] = dW
            self.grads["b"] = g.sum(axis=(0, 1))
        if self.padding == "same":
            t_in = tp - (k - 1)
            lo, _ = _pad_amounts(t_in, k)
            return dxp[:, lo:lo + t_in]
        return dxp


class Conv2D(Layer):
    """Valid or same 2-D cross-correlation over (height, width, channels)."""

    param_order = ("W", "b")

    def __init__(self, filters: int, kernel_size, activation: str | None = None, padding: str = "valid"):
        super().__init__()
        if padding not in ("valid", "same"):
            raise ConfigurationError(f"conv padding must be valid|same, got {padding!r}")
        if activation not in (None, "relu"):
            raise ConfigurationError(f"unsupported conv activation {activation!r}")
        kh, kw = (kernel_size, kernel_size) if np.isscalar(kernel_size) else kernel_size
        self.filters = filters
        self.kh, self.kw = int(kh), int(kw)
        self.activation = activation
        self.padding = padding

    def build(self, in_shape, rng):
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d expects (h, w, channels), got {in_shape}")
        h, w, c = in_shape
        h_eff = h + (self.kh - 1 if self.padding == "same" else 0)
        w_eff = w + (self.kw - 1 if self.padding == "same" else 0)
        if h_eff < self.kh or w_eff < self.kw:
            raise ShapeError(f"conv2d kernel ({self.kh},{self.kw}) larger than input ({h},{w})")
        fan_in = self.kh * self.kw * c
        fan_out = self.kh * self.kw * self.filters
        self.params["W"] = glorot_uniform(rng, (self.kh, self.kw, c, self.filters), fan_in, fan_out)
        self.params["b"] = np.zeros(self.filters)
        return (h_eff - self.kh + 1, w_eff - self.kw + 1, self.filters)

    def _wmat(self):
        # (kh, kw, C, F) -> (C*kh*kw, F) matching the im2col column order (c, i, j)
        kh, kw, c, f = self.params["W"].shape
        return self.params["W"].transpose(2, 0, 1, 3).reshape(c * kh * kw, f)

    def forward(self, x, train):
        if self.padding == "same":
            hlo, hhi = _pad_amounts(x.shape[1], self.kh)
            wlo, whi = _pad_amounts(x.shape[2], self.kw)
            x = np.pad(x, ((0, 0), (hlo, hhi), (wlo, whi), (0, 0)))
        self._xp = x
        h_out = x.shape[1] - self.kh + 1
        w_out = x.shape[2] - self.kw + 1
        b, c = x.shape[0], x.shape[3]
        if c * self.kh * self.kw <= 160:
            cols = np.empty((b, h_out, w_out, c, self.kh, self.kw))
            for i in range(self.kh):
                for j in range(self.kw):
                    cols[:, :, :, :, i, j] = x[:, i:i + h_out, j:j + w_out, :]
            self._cols = cols.reshape(b * h_out * w_out, c * self.kh * self.kw)
            y = (self._cols @ self._wmat() + self.params["b"]).reshape(
                b, h_out, w_out, self.filters
            )
        else:
            self._cols = None
            y = np.zeros((b, h_out, w_out, self.filters)) + self.params["b"]
            for i in range(self.kh):
                for j in range(self.kw):
                    y += x[:, i:i + h_out, j:j + w_out, :] @ self.params["W"][i, j]
        return self._relu(y) if self.activation == "relu" else y

    def backward(self, g):
        if self.activation == "relu":
            g = self._relu_back(g)
        xp = self._xp
        b, hp, wp, c = xp.shape
        h_out, w_out = g.shape[1], g.shape[2]
        dxp = np.zeros_like(xp)
        if self._cols is not None:
            g2 = g.reshape(b * h_out * w_out, self.filters)
            dwmat = self._cols.T @ g2
            self.grads["W"] = np.ascontiguousarray(
                dwmat.reshape(c, self.kh, self.kw, self.filters).transpose(1, 2, 0, 3)
            )
            self.grads["b"] = g2.sum(axis=0)
            dcols = (g2 @ self._wmat().T).reshape(b, h_out, w_out, c, self.kh, self.kw)
            for i in range(self.kh):
                for j in range(self.kw):
                    dxp[:, i:i + h_out, j:j + w_out, :] += dcols[:, :, :, :, i, j]
        else:
            dW = np.empty_like(self.params["W"])
            for i in range(self.kh):
                for j in range(self.kw):
                    xs = xp[:, i:i + h_out, j:j + w_out, :]
                    dW[i, j] = np.tensordot(xs, g, axes=([0, 1, 2], [0, 1, 2]))
                    dxp[:, i:i + h_out, j:j + w_out, :] += g @ self.params["W"][i, j].T
            self.grads["W"] = dW
            self.grads["b"] = g.sum(axis=(0, 1, 2))
        if self.padding == "same":
            h_in = hp - (self.kh - 1)
            w_in = wp - (self.kw - 1)
            hlo, _ = _pad_amounts(h_in, self.kh)
            wlo, _ = _pad_amounts(w_in, self.kw)
            return dxp[:, hlo:hlo + h_in, wlo:wlo + w_in]
        return dxp


def _axis_pool_forward(x, pool, axis):
    """Stride-1 'same' sliding max along one axis; strict > keeps the earliest index on ties."""
    size = x.shape[axis]
    lo, hi = _pad_amounts(size, pool)
    padspec = [(0, 0)] * x.ndim
    padspec[axis] = (lo, hi)
    xp = np.pad(x, padspec, constant_values=-np.inf)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(0, size)
    best = xp[tuple(sl)].copy()
    amax = np.zeros(best.shape, dtype=np.int8)
    for p in range(1, pool):
        sl[axis] = slice(p, p + size)
        cand = xp[tuple(sl)]
        better = cand > best
        np.copyto(best, cand, where=better)
        np.copyto(amax, np.int8(p), where=better)
    return best, amax, lo


def _axis_pool_backward(g, amax, pool, lo, axis, in_size):
    """Scatter gradients to their argmax positions along ``axis`` (bincount-based)."""
    gm = np.ascontiguousarray(np.moveaxis(g, axis, 1))
    am = np.ascontiguousarray(np.moveaxis(amax, axis, 1))
    lead, t = gm.shape[0], gm.shape[1]
    rest_shape = gm.shape[2:]
    rest = int(np.prod(rest_shape)) if rest_shape else 1
    g3 = gm.reshape(lead, t, rest)
    a3 = am.reshape(lead, t, rest)
    tp = in_size + pool - 1
    rows = np.arange(lead)[:, None, None] * tp + np.arange(t)[None, :, None] + a3
    lin = rows * rest + np.arange(rest)[None, None, :]
    dxp = np.bincount(lin.ravel(), weights=g3.ravel(), minlength=lead * tp * rest)
    dx3 = dxp.reshape(lead, tp, rest)[:, lo:lo + in_size]
    return np.moveaxis(dx3.reshape(lead, in_size, *rest_shape), 1, axis)


class MaxPool1D(Layer):
    """Stride-1 sliding max with 'same' edge padding by -inf; ties route to the earliest index."""

    def __init__(self, pool: int, stride: int = 1, padding: str = "same"):
        super().__init__()
        if pool < 1:
            raise ConfigurationError(f"pool size must be >= 1, got {pool}")
        if stride != 1 or padding != "same":
            raise ConfigurationError("only stride 1 with 'same' padding is supported")
        self.pool = pool

    def build(self, in_shape, rng):
        if len(in_shape) != 2:
            raise ShapeError(f"maxpool1d expects (time, channels), got {in_shape}")
        return in_shape

    def forward(self, x, train):
        best, self._amax, self._lo = _axis_pool_forward(x, self.pool, axis=1)
        self._size = x.shape[1]
        return best

    def backward(self, g):
        return _axis_pool_backward(g, self._amax, self.pool, self._lo, axis=1, in_size=self._size)


class MaxPool2D(Layer):
    """Separable 2-D sliding max (stride 1, 'same'): a width pass then a height pass.

    Routing picks the lexicographically earliest (row, col) among tied maxima,
    matching the 1-D earliest-index rule applied per axis.
    """

    def __init__(self, pool, stride: int = 1, padding: str = "same"):
        super().__init__()
        ph, pw = (pool, pool) if np.isscalar(pool) else pool
        if ph < 1 or pw < 1:
            raise ConfigurationError(f"pool size must be >= 1, got {pool}")
        if stride != 1 or padding != "same":
            raise ConfigurationError("only stride 1 with 'same' padding is supported")
        self.ph, self.pw = int(ph), int(pw)

    def build(self, in_shape, rng):
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool2d expects (h, w, channels), got {in_shape}")
        return in_shape

    def forward(self, x, train):
        rowpool, self._amax_w, self._wlo = _axis_pool_forward(x, self.pw, axis=2)
        best, self._amax_h, self._hlo = _axis_pool_forward(rowpool, self.ph, axis=1)
        self._h, self._w = x.shape[1], x.shape[2]
        return best

    def backward(self, g):
        g_row = _axis_pool_backward(g, self._amax_h, self.ph, self._hlo, axis=1, in_size=self._h)
        return _axis_pool_backward(g_row, self._amax_w, self.pw, self._wlo, axis=2, in_size=self._w)


class BatchNorm(Layer):
    """Per-channel (last axis) batch normalization with running statistics."""

    param_order = ("gamma", "beta")
    buffer_order = ("running_mean", "running_var")

    def __init__(self, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps

    def build(self, in_shape, rng):
        c = in_shape[-1]
        self.params["gamma"] = np.ones(c)
        self.params["beta"] = np.zeros(c)
        self.buffers["running_mean"] = np.zeros(c)
        self.buffers["running_var"] = np.ones(c)
        return in_shape

    def forward(self, x, train):
        axes = tuple(range(x.ndim - 1))
        if train:
            if x.shape[0] < 2:
                raise DomainError("batchnorm needs a batch of at least 2 in train mode")
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.buffers["running_mean"] = self.momentum * self.buffers["running_mean"] + (1 - self.momentum) * mu
            self.buffers["running_var"] = self.momentum * self.buffers["running_var"] + (1 - self.momentum) * var
        else:
            mu = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        ivar = 1.0 / np.sqrt(var + self.eps)
        if train:
            xhat = (x - mu) * ivar
            self._xhat = xhat
            self._ivar = ivar
            self._m = int(np.prod([x.shape[a] for a in axes]))
            return self.params["gamma"] * xhat + self.params["beta"]
        # inference: single fused affine pass
        scale = self.params["gamma"] * ivar
        return x * scale + (self.params["beta"] - mu * scale)

    def backward(self, g):
        axes = tuple(range(g.ndim - 1))
        xhat, ivar, m = self._xhat, self._ivar, self._m
        self.grads["gamma"] = (g * xhat).sum(axis=axes)
        self.grads["beta"] = g.sum(axis=axes)
        term = m * g - self.grads["beta"] - xhat * self.grads["gamma"]
        return (self.params["gamma"] * ivar / m) * term


class Dropout(Layer):
    """Inverted dropout: scales survivors by 1/(1-rate) in train mode, identity at inference."""

    def __init__(self, rate: float):
        super().__init__()
        if not (0.0 <= rate < 1.0):
            raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def build(self, in_shape, rng):
        self.rng = rng
        return in_shape

    def forward(self, x, train):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, g):
        return g if self._mask is None else g * self._mask


class GlobalAvgPool2D(Layer):
    def build(self, in_shape, rng):
        if len(in_shape) != 3:
            raise ShapeError(f"global average pooling expects (h, w, channels), got {in_shape}")
        return (in_shape[-1],)

    def forward(self, x, train):
        self._hw = x.shape[1] * x.shape[2]
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, g):
        b, h, w, c = self._shape
        return np.broadcast_to(g[:, None, None, :] / self._hw, (b, h, w, c)).copy()


class LSTM(Layer):
    """Standard LSTM cell (gate order i, f, g, o), h0 = c0 = 0, forget bias 1."""

    param_order = ("Wx", "Wh", "b")

    def __init__(self, units: int, return_sequences: bool = False):
        super().__init__()
        self.units = units
        self.return_sequences = return_sequences

    def build(self, in_shape, rng):
        if len(in_shape) != 2:
            raise ShapeError(f"lstm expects (time, features), got {in_shape}")
        t, f = in_shape
        u = self.units
        self.params["Wx"] = glorot_uniform(rng, (f, 4 * u), f, 4 * u)
        self.params["Wh"] = glorot_uniform(rng, (u, 4 * u), u, 4 * u)
        b = np.zeros(4 * u)
        b[u:2 * u] = 1.0
        self.params["b"] = b
        return (t, u) if self.return_sequences else (u,)

    def forward(self, x, train):
        b, t, _ = x.shape
        u = self.units
        xw = x @ self.params["Wx"] + self.params["b"]
        h = np.zeros((b, u))
        c = np.zeros((b, u))
        self._x = x
        self._cache = []
        hs = np.empty((t, b, u))
        for step in range(t):
            z = xw[:, step] + h @ self.params["Wh"]
            i = _sigmoid(z[:, :u])
            f = _sigmoid(z[:, u:2 * u])
            g = np.tanh(z[:, 2 * u:3 * u])
            o = _sigmoid(z[:, 3 * u:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            ct = np.tanh(c)
            h = o * ct
            hs[step] = h
            self._cache.append((i, f, g, o, c_prev, h_prev, ct))
        self._hs = hs
        return hs.transpose(1, 0, 2) if self.return_sequences else hs[-1]

    def backward(self, grad):
        x = self._x
        b, t, f_in = x.shape
        u = self.units
        Wx, Wh = self.params["Wx"], self.params["Wh"]
        dWx = np.zeros_like(Wx)
        dWh = np.zeros_like(Wh)
        db = np.zeros(4 * u)
        dx = np.empty_like(x)
        dh = np.zeros((b, u))
        dc = np.zeros((b, u))
        if self.return_sequences:
            gseq = grad.transpose(1, 0, 2)
        for step in range(t - 1, -1, -1):
            i, f, g, o, c_prev, h_prev, ct = self._cache[step]
            if self.return_sequences:
                dh = dh + gseq[step]
            elif step == t - 1:
                dh = dh + grad
            do = dh * ct
            dc = dc + dh * o * (1 - ct * ct)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc = dc * f
            dz = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)],
                axis=1,
            )
            dWx += x[:, step].T @ dz
            dWh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, step] = dz @ Wx.T
            dh = dz @ Wh.T
        self.grads["Wx"] = dWx
        self.grads["Wh"] = dWh
        self.grads["b"] = db
        return dx


class Bidirectional(Layer):
    """Runs an LSTM forward and another on reversed time, concatenating channels."""

    def __init__(self, units: int, return_sequences: bool = False):
        super().__init__()
        self.units = units
        self.return_sequences = return_sequences
        self.fwd = LSTM(units, return_sequences)
        self.bwd = LSTM(units, return_sequences)

    @property
    def params(self):
        merged = {f"fwd_{k}": v for k, v in self.fwd.params.items()}
        merged.update({f"bwd_{k}": v for k, v in self.bwd.params.items()})
        return merged

    @params.setter
    def params(self, value):  # Layer.__init__ assigns an empty dict; sublayers own storage
        pass

    @property
    def grads(self):
        merged = {f"fwd_{k}": v for k, v in self.fwd.grads.items()}
        merged.update({f"bwd_{k}": v for k, v in self.bwd.grads.items()})
        return merged

    @grads.setter
    def grads(self, value):
        pass

    @property
    def param_order(self):
        return tuple(f"fwd_{k}" for k in self.fwd.param_order) + tuple(
            f"bwd_{k}" for k in self.bwd.param_order
        )

    def build(self, in_shape, rng):
        t, _ = in_shape
        self.fwd.build(in_shape, rng)
        self.bwd.build(in_shape, rng)
        return (t, 2 * self.units) if self.return_sequences else (2 * self.units,)

    def forward(self, x, train):
        yf = self.fwd.forward(x, train)
        yb = self.bwd.forward(x[:, ::-1], train)
        if self.return_sequences:
            return np.concatenate([yf, yb[:, ::-1]], axis=2)
        return np.concatenate([yf, yb], axis=1)

    def backward(self, g):
        u = self.units
        if self.return_sequences:
            gf, gb = g[:, :, :u], g[:, ::-1, u:]
        else:
            gf, gb = g[:, :u], g[:, u:]
        dxf = self.fwd.backward(np.ascontiguousarray(gf))
        dxb = self.bwd.backward(np.ascontiguousarray(gb))
        return dxf + dxb[:, ::-1]
