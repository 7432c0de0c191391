"""Layers with hand-written backward passes (float64, batch-first).

Every layer keeps its trainable arrays in ``params`` and, after
``backward``, the matching gradients in ``grads``. ``forward`` caches what
``backward`` needs; calling ``backward`` without a preceding ``forward``
raises :class:`ContractError`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractError

GATES = ("f", "i", "o", "c")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def _take_cache(self):
        if self._cache is None:
            raise ContractError(f"{type(self).__name__}.backward called without a cached forward pass")
        cache, self._cache = self._cache, None
        return cache


# ---------------------------------------------------------------- LSTM cell


@dataclass(frozen=True, eq=False)
class LstmCellParams:
    """Gate weights stacked along the last axis in the order f, i, o, c.

    ``W`` is (input_size, 4h), ``U`` is (h, 4h), ``b`` is (4h,).
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h = self.U.shape[0]
        if self.U.shape != (h, 4 * h) or self.W.shape[1] != 4 * h or self.b.shape != (4 * h,):
            raise ContractError(f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W, U, b) slices of one gate, each with rows as outputs."""
        h = self.hidden_size
        k = GATES.index(name)
        sl = slice(k * h, (k + 1) * h)
        return self.W[:, sl].T, self.U[:, sl].T, self.b[sl]

    @classmethod
    def init(cls, input_size, hidden_size, rng, forget_bias=1.0):
        W = _uniform(rng, input_size, (input_size, 4 * hidden_size))
        U = _uniform(rng, hidden_size, (hidden_size, 4 * hidden_size))
        b = np.zeros(4 * hidden_size)
        b[:hidden_size] = forget_bias
        return cls(W, U, b)


def lstm_cell_step(params: LstmCellParams, x_t, h_prev, c_prev):
    """One LSTM update; returns (h_t, c_t, cache). Works on (B, d) or (d,)."""
    if x_t.shape[-1] != params.input_size or h_prev.shape[-1] != params.hidden_size:
        raise ContractError(
            f"cell expects input {params.input_size} / hidden {params.hidden_size}, "
            f"got {x_t.shape[-1]} / {h_prev.shape[-1]}"
        )
    if c_prev.shape != h_prev.shape:
        raise ContractError("h_prev and c_prev shapes differ")
    h = params.hidden_size
    a = x_t @ params.W + h_prev @ params.U + params.b
    f = sigmoid(a[..., :h])
    i = sigmoid(a[..., h : 2 * h])
    o = sigmoid(a[..., 2 * h : 3 * h])
    g = np.tanh(a[..., 3 * h :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h_t = o * tc
    return h_t, c, (x_t, h_prev, c_prev, f, i, o, g, tc)


def lstm_cell_backward(params: LstmCellParams, dh, dc, cache):
    """Backprop through one step given dL/dh_t and dL/dc_t (from later steps).

    Returns (dx, dh_prev, dc_prev, dW, dU, db).
    """
    x_t, h_prev, c_prev, f, i, o, g, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    da = np.concatenate(
        [
            dc * c_prev * f * (1.0 - f),
            dc * g * i * (1.0 - i),
            do * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ],
        axis=-1,
    )
    dx = da @ params.W.T
    dh_prev = da @ params.U.T
    dc_prev = dc * f
    x2 = x_t.reshape(-1, x_t.shape[-1])
    h2 = h_prev.reshape(-1, h_prev.shape[-1])
    da2 = da.reshape(-1, da.shape[-1])
    return dx, dh_prev, dc_prev, x2.T @ da2, h2.T @ da2, da2.sum(axis=0)


class LSTM(Layer):
    """Unidirectional LSTM over (B, T, d) producing every hidden state (B, T, h)."""

    def __init__(self, input_size, hidden_size, rng):
        super().__init__()
        p = LstmCellParams.init(input_size, hidden_size, rng)
        self.params = {"W": p.W, "U": p.U, "b": p.b}

    @property
    def cell(self) -> LstmCellParams:
        return LstmCellParams(self.params["W"], self.params["U"], self.params["b"])

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] < 1:
            raise ContractError(f"LSTM expects a non-empty (B, T, d) sequence, got shape {x.shape}")
        cell = self.cell
        B, T, _ = x.shape
        hdim = cell.hidden_size
        h = np.zeros((B, hdim))
        c = np.zeros((B, hdim))
        out = np.empty((B, T, hdim))
        caches = []
        for t in range(T):
            h, c, cache = lstm_cell_step(cell, x[:, t], h, c)
            out[:, t] = h
            caches.append(cache)
        self._cache = caches
        return out

    def backward(self, dout):
        caches = self._take_cache()
        cell = self.cell
        B, T, hdim = dout.shape
        dx = np.empty((B, T, cell.input_size))
        dW = np.zeros_like(cell.W)
        dU = np.zeros_like(cell.U)
        db = np.zeros_like(cell.b)
        dh_next = np.zeros((B, hdim))
        dc_next = np.zeros((B, hdim))
        for t in reversed(range(T)):
            dx[:, t], dh_next, dc_next, gw, gu, gb = lstm_cell_backward(cell, dout[:, t] + dh_next, dc_next, caches[t])
            dW += gw
            dU += gu
            db += gb
        self.grads = {"W": dW, "U": dU, "b": db}
        return dx


class BiLSTM(Layer):
    """Forward and time-reversed LSTMs whose hidden states are concatenated."""

    def __init__(self, input_size, hidden_size, rng):
        super().__init__()
        self.fwd = LSTM(input_size, hidden_size, rng)
        self.bwd = LSTM(input_size, hidden_size, rng)
        self.hidden_size = hidden_size
        self.params = {**{f"fwd.{k}": v for k, v in self.fwd.params.items()},
                       **{f"bwd.{k}": v for k, v in self.bwd.params.items()}}

    def forward(self, x):
        hf = self.fwd.forward(x)
        hb = self.bwd.forward(x[:, ::-1])[:, ::-1]
        return np.concatenate([hf, hb], axis=-1)

    def backward(self, dout):
        h = self.hidden_size
        dxf = self.fwd.backward(dout[..., :h])
        dxb = self.bwd.backward(np.ascontiguousarray(dout[:, ::-1, h:]))[:, ::-1]
        self.grads = {**{f"fwd.{k}": v for k, v in self.fwd.grads.items()},
                      **{f"bwd.{k}": v for k, v in self.bwd.grads.items()}}
        return dxf + dxb


def bilstm_forward(layer: BiLSTM, sequence):
    """Run ``layer`` over a (T, d) or (B, T, d) sequence."""
    seq = np.asarray(sequence, dtype=float)
    if seq.ndim == 2:
        if seq.shape[0] < 1:
            raise ContractError("empty sequence")
        return layer.forward(seq[None])[0]
    if seq.ndim != 3 or seq.shape[1] < 1:
        raise ContractError(f"empty or malformed sequence of shape {seq.shape}")
    return layer.forward(seq)


# ---------------------------------------------------------------- convolution


class Conv1d(Layer):
    """Cross-correlation over (B, C_in, L) with zero padding and stride."""

    def __init__(self, in_channels, out_channels, kernel_width, rng, stride=1, padding=0):
        super().__init__()
        if kernel_width < 1 or stride < 1 or padding < 0:
            raise ContractError("kernel_width and stride must be >= 1, padding >= 0")
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_width
        self.params = {
            "K": _uniform(rng, fan_in, (out_channels, in_channels, kernel_width)),
            "b": np.zeros(out_channels),
        }

    def out_length(self, length):
        kw = self.params["K"].shape[2]
        if length + 2 * self.padding < kw:
            raise ContractError(f"input of length {length} too short for kernel width {kw}")
        return (length + 2 * self.padding - kw) // self.stride + 1

    def forward(self, x):
        K, b = self.params["K"], self.params["b"]
        if x.ndim != 3 or x.shape[1] != K.shape[1]:
            raise ContractError(f"conv expects (B, {K.shape[1]}, L), got {x.shape}")
        lout = self.out_length(x.shape[2])
        xp = np.pad(x, ((0, 0), (0, 0), (self.padding, self.padding)))
        # (B, C_in, L', kw)
        patches = sliding_window_view(xp, K.shape[2], axis=2)[:, :, : (lout - 1) * self.stride + 1 : self.stride]
        out = np.einsum("bclk,ock->bol", patches, K, optimize=True) + b[None, :, None]
        self._cache = (xp.shape, patches)
        return out

    def backward(self, dout):
        xp_shape, patches = self._take_cache()
        K = self.params["K"]
        kw = K.shape[2]
        lout = dout.shape[2]
        self.grads = {
            "K": np.einsum("bol,bclk->ock", dout, patches, optimize=True),
            "b": dout.sum(axis=(0, 2)),
        }
        dpatch = np.einsum("bol,ock->bclk", dout, K, optimize=True)
        dxp = np.zeros(xp_shape)
        span = (lout - 1) * self.stride + 1
        for k in range(kw):
            dxp[:, :, k : k + span : self.stride] += dpatch[:, :, :, k]
        end = xp_shape[2] - self.padding
        return dxp[:, :, self.padding : end]


def conv1d_forward(layer: Conv1d, x):
    """Apply ``layer`` to a (C_in, L) or (B, C_in, L) input."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return layer.forward(x[None])[0]
    return layer.forward(x)


class MaxPool1d(Layer):
    def __init__(self, width, stride=None):
        super().__init__()
        if width < 1:
            raise ContractError("pool width must be >= 1")
        self.width = width
        self.stride = stride or width

    def forward(self, x):
        if x.shape[2] < self.width:
            raise ContractError("input shorter than pool width")
        win = sliding_window_view(x, self.width, axis=2)[:, :, :: self.stride]
        arg = win.argmax(axis=3)
        self._cache = (x.shape, arg)
        return np.take_along_axis(win, arg[..., None], axis=3)[..., 0]

    def backward(self, dout):
        shape, arg = self._take_cache()
        dx = np.zeros(shape)
        B, C, L = dout.shape
        pos = np.arange(L)[None, None, :] * self.stride + arg
        np.add.at(dx, (np.arange(B)[:, None, None], np.arange(C)[None, :, None], pos), dout)
        return dx


# ---------------------------------------------------------------- dense and activations


class Dense(Layer):
    def __init__(self, in_features, out_features, rng):
        super().__init__()
        self.params = {
            "W": _uniform(rng, in_features, (in_features, out_features)),
            "b": np.zeros(out_features),
        }

    def forward(self, x):
        if x.shape[-1] != self.params["W"].shape[0]:
            raise ContractError(f"dense expects {self.params['W'].shape[0]} inputs, got {x.shape[-1]}")
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x = self._take_cache()
        x2 = x.reshape(-1, x.shape[-1])
        d2 = dout.reshape(-1, dout.shape[-1])
        self.grads = {"W": x2.T @ d2, "b": d2.sum(axis=0)}
        return dout @ self.params["W"].T


class Tanh(Layer):
    def forward(self, x):
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, dout):
        y = self._take_cache()
        return dout * (1.0 - y * y)
