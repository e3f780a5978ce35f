"""Stacked BLSTM with linear heads, hand-differentiated, plus Adam.

Parameters live in a flat ``dict`` of float64 arrays keyed by name::

    lstm{i}.{fw,bw}.W   (4H, D_in)   input weights, gate order i, f, g, o
    lstm{i}.{fw,bw}.U   (4H, H)      recurrent weights
    lstm{i}.{fw,bw}.b   (4H,)        biases (forget slice starts at 1.0)
    {head}.W, {head}.b               one affine map per output head

Inputs are batches of equal-length sequences, shape ``(B, T, D)``.  Both
directions of a layer are advanced together in one time loop.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

DIRECTIONS = ("fw", "bw")


@dataclass(frozen=True)
class NetDims:
    input_dim: int
    hidden: int = 250
    layers: int = 3
    heads: dict = field(default_factory=dict)  # head name -> output width

    def layer_input(self, i: int) -> int:
        return self.input_dim if i == 0 else 2 * self.hidden

    def shapes(self) -> dict:
        out = {}
        H = self.hidden
        for i in range(self.layers):
            for d in DIRECTIONS:
                out[f"lstm{i}.{d}.W"] = (4 * H, self.layer_input(i))
                out[f"lstm{i}.{d}.U"] = (4 * H, H)
                out[f"lstm{i}.{d}.b"] = (4 * H,)
        for name, width in self.heads.items():
            out[f"{name}.W"] = (width, 2 * H)
            out[f"{name}.b"] = (width,)
        return out


def init_scale(shape) -> float:
    fan_out, fan_in = shape
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(dims: NetDims, seed: int) -> dict:
    """Uniform fan-based weights, zero biases, forget-gate bias 1.

    Every tensor draws from its own stream keyed by (seed, name), so adding
    or removing a head leaves the other tensors unchanged.
    """
    params = {}
    H = dims.hidden
    for name, shape in dims.shapes().items():
        if len(shape) == 1:
            b = np.zeros(shape)
            if name.startswith("lstm"):
                b[H:2 * H] = 1.0
            params[name] = b
        else:
            rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
            lim = init_scale(shape)
            params[name] = rng.uniform(-lim, lim, size=shape)
    return params


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def fc_forward(W, b, x):
    return x @ W.T + b


def _stack(params, prefix, key):
    return np.stack([params[f"{prefix}.{d}.{key}"] for d in DIRECTIONS])


def blstm_forward(params, prefix, x):
    """One bidirectional layer.  Returns ``(B, T, 2H)`` output and a cache."""
    W, U, b = (_stack(params, prefix, k) for k in "WUb")
    H = U.shape[2]
    if x.shape[-1] != W.shape[2]:
        raise ValueError(f"{prefix}: input width {x.shape[-1]} != {W.shape[2]}")
    B, T, _ = x.shape
    xs = np.stack([x, x[:, ::-1]])                        # (2, B, T, D)
    zx = (xs.reshape(2, B * T, -1) @ W.transpose(0, 2, 1)).reshape(2, B, T, -1)
    zx += b[:, None, None, :]
    acts = np.empty((2, B, T, 4 * H))
    cells = np.empty((2, B, T, H))
    hs = np.empty((2, B, T, H))
    h = np.zeros((2, B, H))
    c = np.zeros((2, B, H))
    Ut = U.transpose(0, 2, 1)
    for t in range(T):
        z = zx[:, :, t] + h @ Ut
        a = acts[:, :, t]
        a[..., :2 * H] = sigmoid(z[..., :2 * H])
        a[..., 2 * H:3 * H] = np.tanh(z[..., 2 * H:3 * H])
        a[..., 3 * H:] = sigmoid(z[..., 3 * H:])
        c = a[..., H:2 * H] * c + a[..., :H] * a[..., 2 * H:3 * H]
        h = a[..., 3 * H:] * np.tanh(c)
        cells[:, :, t] = c
        hs[:, :, t] = h
    out = np.concatenate([hs[0], hs[1][:, ::-1]], axis=-1)
    return out, (prefix, xs, acts, cells, hs)


def blstm_backward(params, cache, dout):
    """Backprop through one layer; returns ``(dx, grads)``."""
    prefix, xs, acts, cells, hs = cache
    W, U = _stack(params, prefix, "W"), _stack(params, prefix, "U")
    H = U.shape[2]
    _, B, T, _ = xs.shape
    dh_seq = np.stack([dout[..., :H], dout[..., H:][:, ::-1]])  # per-direction time order
    dz_all = np.empty((2, B, T, 4 * H))
    dh_next = np.zeros((2, B, H))
    dc_next = np.zeros((2, B, H))
    dU = np.zeros_like(U)
    zeros = np.zeros((2, B, H))
    for t in range(T - 1, -1, -1):
        a = acts[:, :, t]
        i, f, g, o = a[..., :H], a[..., H:2 * H], a[..., 2 * H:3 * H], a[..., 3 * H:]
        c_prev = cells[:, :, t - 1] if t > 0 else zeros
        h_prev = hs[:, :, t - 1] if t > 0 else zeros
        tc = np.tanh(cells[:, :, t])
        dh = dh_seq[:, :, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dz_all[:, :, t]
        dz[..., :H] = dc * g * i * (1.0 - i)
        dz[..., H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[..., 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[..., 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ U
        if t > 0:
            dU += dz.transpose(0, 2, 1) @ h_prev
    dz_flat = dz_all.reshape(2, B * T, 4 * H)
    dW = dz_flat.transpose(0, 2, 1) @ xs.reshape(2, B * T, -1)
    db = dz_flat.sum(axis=1)
    dxs = (dz_flat @ W).reshape(xs.shape)
    dx = dxs[0] + dxs[1][:, ::-1]
    grads = {}
    for n, d in enumerate(DIRECTIONS):
        grads[f"{prefix}.{d}.W"] = dW[n]
        grads[f"{prefix}.{d}.U"] = dU[n]
        grads[f"{prefix}.{d}.b"] = db[n]
    return dx, grads


class Network:
    """BLSTM stack feeding one or more affine heads."""

    def __init__(self, dims: NetDims, params: dict | None = None, seed: int = 0):
        self.dims = dims
        self.params = params if params is not None else init_params(dims, seed)
        expected = dims.shapes()
        for name, shape in expected.items():
            if name not in self.params or self.params[name].shape != shape:
                raise ValueError(f"parameter {name} missing or not shaped {shape}")

    def forward(self, x):
        """``x``: ``(B, T, D)`` or ``(T, D)``.  Returns ``({head: output}, cache)``."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.shape[-1] != self.dims.input_dim:
            raise ValueError(f"input width {x.shape[-1]} != {self.dims.input_dim}")
        caches = []
        h = x
        for i in range(self.dims.layers):
            h, cache = blstm_forward(self.params, f"lstm{i}", h)
            caches.append(cache)
        outs = {name: fc_forward(self.params[f"{name}.W"], self.params[f"{name}.b"], h)
                for name in self.dims.heads}
        if squeeze:
            outs = {k: v[0] for k, v in outs.items()}
        return outs, (caches, h, squeeze)

    def backward(self, cache, dout: dict) -> dict:
        """Gradients of every parameter given upstream gradients per head."""
        caches, h, squeeze = cache
        grads = {}
        dh = np.zeros_like(h)
        for name in self.dims.heads:
            g = dout.get(name)
            W = self.params[f"{name}.W"]
            if g is None:
                grads[f"{name}.W"] = np.zeros_like(W)
                grads[f"{name}.b"] = np.zeros(W.shape[0])
                continue
            g = np.asarray(g, dtype=np.float64)
            if squeeze:
                g = g[None]
            grads[f"{name}.W"] = g.reshape(-1, g.shape[-1]).T @ h.reshape(-1, h.shape[-1])
            grads[f"{name}.b"] = g.sum(axis=(0, 1))
            dh += g @ W
        for cache_i in reversed(caches):
            dh, g = blstm_backward(self.params, cache_i, dh)
            grads.update(g)
        return {k: grads[k] for k in self.params}

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())


def global_norm(grads: dict) -> float:
    return math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))


def clip_global_norm(grads: dict, max_norm: float = 5.0) -> dict:
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params: dict, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {k}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
