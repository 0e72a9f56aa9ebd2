"""Small trainable function approximators in plain numpy.

Two network kinds share one interface: ``DenseNet`` (feed-forward stack) and
``GruNet`` (stacked GRU cells unrolled over a fixed window with a linear
readout). Both work in a standardised space; ``forward`` maps raw inputs to
raw outputs through the stored standardisers.
"""
from __future__ import annotations

import copy
import json
import struct
from pathlib import Path

import numpy as np

from hemsdr import kernels
from hemsdr.errors import DataError, DomainError, TrainingError

MAGIC = b"HEMSNET\0"
FORMAT_VERSION = 1


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "identity":
        return z
    raise DomainError(f"unknown activation {name!r}")


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class _Net:
    """Shared plumbing: standardisers, Adam state, copying."""

    kind = "base"

    def __init__(self, n_in, n_out, seed):
        self.seed = int(seed)
        self.x_shift = np.zeros(n_in)
        self.x_scale = np.ones(n_in)
        self.y_shift = np.zeros(n_out)
        self.y_scale = np.ones(n_out)
        self.meta = {}
        self.params = []
        self.adam_m = []
        self.adam_v = []
        self.adam_t = 0

    def _init_opt(self):
        self.adam_m = [np.zeros_like(p) for p in self.params]
        self.adam_v = [np.zeros_like(p) for p in self.params]
        self.adam_t = 0

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def copy(self):
        return copy.deepcopy(self)

    def fit_standardizers(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).reshape(len(y), -1)
        axes = tuple(range(x.ndim - 1))
        self.x_shift = np.broadcast_to(x.mean(axis=axes), self.x_shift.shape).copy()
        sd = np.broadcast_to(x.std(axis=axes), self.x_scale.shape).copy()
        self.x_scale = np.where(sd > 1e-12, sd, 1.0)
        self.y_shift = y.mean(axis=0)
        sd = y.std(axis=0)
        self.y_scale = np.where(sd > 1e-12, sd, 1.0)

    def normalize_x(self, x):
        return (np.asarray(x, dtype=np.float64) - self.x_shift) / self.x_scale

    def normalize_y(self, y):
        y = np.asarray(y, dtype=np.float64).reshape(-1, self.y_shift.shape[0])
        return (y - self.y_shift) / self.y_scale

    def predict(self, x):
        """Raw-space outputs for a batch of raw inputs."""
        out = self.forward_core(self.normalize_x(x))
        return out * self.y_scale + self.y_shift

    def loss_and_grads(self, x, y):
        """MSE in standardised space and its gradient w.r.t. every parameter."""
        out, cache = self.forward_core(x, keep=True)
        diff = out - y
        loss = float(np.mean(diff * diff))
        grads, _ = self.backward(cache, 2.0 * diff / diff.size)
        return loss, grads


class DenseNet(_Net):
    kind = "dense"

    def __init__(self, widths, activations, seed=0):
        widths = [int(w) for w in widths]
        if len(widths) < 2:
            raise DomainError("a dense net needs at least input and output widths")
        if isinstance(activations, str):
            activations = [activations] * (len(widths) - 2) + ["identity"]
        if len(activations) != len(widths) - 1:
            raise DomainError("need one activation per layer")
        super().__init__(widths[0], widths[-1], seed)
        self.widths = widths
        self.activations = list(activations)
        rng = np.random.default_rng(self.seed)
        for a, b in zip(widths[:-1], widths[1:]):
            self.params.append(glorot(rng, a, b))
            self.params.append(np.zeros(b))
        self._init_opt()

    @property
    def n_in(self):
        return self.widths[0]

    def forward_core(self, x, keep=False):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.widths[0]:
            raise DomainError(f"expected input width {self.widths[0]}, got {x.shape[1]}")
        cache = [x]
        a = x
        for i, name in enumerate(self.activations):
            z = a @ self.params[2 * i] + self.params[2 * i + 1]
            a = _act(name, z)
            cache.append((z, a))
        if keep:
            return a, cache
        return a[0] if single else a

    def backward(self, cache, grad_out):
        """Gradients for all parameters and for the input, given dL/d(output)."""
        grads = [None] * len(self.params)
        g = grad_out
        for i in range(len(self.activations) - 1, -1, -1):
            z, a = cache[i + 1]
            g = g * _act_grad(self.activations[i], z, a)
            prev = cache[0] if i == 0 else cache[i][1]
            grads[2 * i] = prev.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return grads, g

    def config(self):
        return {"widths": self.widths, "activations": self.activations}


class GruNet(_Net):
    """Stacked GRU over a fixed window, linear readout of the last top state."""

    kind = "gru"

    def __init__(self, input_size=1, hidden_size=64, num_layers=2, window=168,
                 output_size=1, seed=0):
        if window < 1 or num_layers < 1 or hidden_size < 1:
            raise DomainError("window, num_layers and hidden_size must be positive")
        super().__init__(input_size, output_size, seed)
        self.input_size = int(input_size)
        self.hidden_size = int(hidden_size)
        self.num_layers = int(num_layers)
        self.window = int(window)
        self.output_size = int(output_size)
        rng = np.random.default_rng(self.seed)
        h = self.hidden_size
        n_in = self.input_size
        for _ in range(self.num_layers):
            wx = np.hstack([glorot(rng, n_in, h) for _ in range(3)])
            wh = np.hstack([glorot(rng, h, h) for _ in range(3)])
            self.params += [wx, wh, np.zeros(3 * h)]
            n_in = h
        self.params += [glorot(rng, h, self.output_size), np.zeros(self.output_size)]
        self._init_opt()

    def _shape_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.input_size == 1 and x.ndim in (1, 2) and x.shape[-1] == self.window:
            x = x[..., None]
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[1:] != (self.window, self.input_size):
            raise DomainError(
                f"expected window of shape ({self.window}, {self.input_size}), got {x.shape[1:]}"
            )
        return x, single

    def normalize_x(self, x):
        x, single = self._shape_input(x)
        x = (x - self.x_shift) / self.x_scale
        return x[0] if single else x

    def fit_standardizers(self, x, y):
        x, _ = self._shape_input(x)
        super().fit_standardizers(x, y)

    def forward_core(self, x, keep=False):
        x, single = self._shape_input(x)
        seq = np.ascontiguousarray(x.transpose(1, 0, 2))
        batch = seq.shape[1]
        layers = []
        inp = seq
        for layer in range(self.num_layers):
            wx, wh, b = self.params[3 * layer:3 * layer + 3]
            h0 = np.zeros((batch, self.hidden_size))
            hs, gates = kernels.gru_layer_forward(inp, h0, wx, wh, b)
            layers.append((inp, hs, gates))
            inp = np.ascontiguousarray(hs[1:])
        last = inp[-1]
        out = last @ self.params[-2] + self.params[-1]
        if keep:
            return out, (layers, last)
        return out[0] if single else out

    def backward(self, cache, grad_out):
        layers, last = cache
        grads = [None] * len(self.params)
        grads[-2] = last.T @ grad_out
        grads[-1] = grad_out.sum(axis=0)
        steps, batch = self.window, grad_out.shape[0]
        dhs = np.zeros((steps, batch, self.hidden_size))
        dhs[-1] = grad_out @ self.params[-2].T
        dx = None
        for layer in range(self.num_layers - 1, -1, -1):
            inp, hs, gates = layers[layer]
            wx, wh, _ = self.params[3 * layer:3 * layer + 3]
            dxs, dwx, dwh, db, _ = kernels.gru_layer_backward(inp, hs, gates, wx, wh, dhs)
            grads[3 * layer:3 * layer + 3] = [dwx, dwh, db]
            dhs = dxs
            dx = dxs
        return grads, np.ascontiguousarray(dx.transpose(1, 0, 2))

    def config(self):
        return {
            "input_size": self.input_size,
            "hidden_size": self.hidden_size,
            "num_layers": self.num_layers,
            "window": self.window,
            "output_size": self.output_size,
        }


Network = DenseNet | GruNet


def forward(net, x):
    """Raw-space forward pass of ``net`` on one input or a batch."""
    return net.predict(x)


def grad_check(net, x, target, eps=1e-5, floor=1e-7):
    """Largest relative gap between backprop and central-difference gradients.

    Runs in the standardised space the network trains in. The relative
    error of each entry is ``|g - fd| / max(|g|, |fd|, floor)``; ``floor``
    keeps entries whose true gradient is ~0 from dominating. The default
    step balances truncation error against float64 round-off in the loss.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise DomainError("eps must lie in [1e-7, 1e-3]")
    if net.n_params == 0:
        return 0.0
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64).reshape(-1, net.y_shift.shape[0])
    _, grads = net.loss_and_grads(x, y)
    worst = 0.0
    for p, g in zip(net.params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + eps
            lp, _ = _loss_only(net, x, y)
            flat[k] = keep - eps
            lm, _ = _loss_only(net, x, y)
            flat[k] = keep
            fd = (lp - lm) / (2 * eps)
            err = abs(gflat[k] - fd) / max(abs(gflat[k]), abs(fd), floor)
            worst = max(worst, err)
    return worst


def _loss_only(net, x, y):
    out = net.forward_core(x)
    out = out.reshape(y.shape)
    diff = out - y
    return float(np.mean(diff * diff)), out


def adam_step(net, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update applied in place; returns ``net``."""
    if len(grads) != len(net.params):
        raise DomainError("gradient list does not match parameters")
    for p, g in zip(net.params, grads):
        if g.shape != p.shape:
            raise DomainError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
    net.adam_t += 1
    t = net.adam_t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(net.params, grads, net.adam_m, net.adam_v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return net


def train(net, x, y, epochs=100, batch=64, lr=1e-3, seed=0, standardize=True,
          log_every=0, logger=None):
    """Minibatch Adam on MSE. Returns ``(net, per-epoch mean training loss)``.

    Losses are in the standardised target space. With ``standardize`` the
    standardisers are refitted from ``(x, y)`` first.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise DataError("empty training set")
    y = np.asarray(y, dtype=np.float64).reshape(len(x), -1)
    if epochs <= 0:
        return net, []
    if standardize:
        net.fit_standardizers(x, y)
    xn = net.normalize_x(x)
    yn = net.normalize_y(y)
    rng = np.random.default_rng(seed)
    n = len(xn)
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, grads = net.loss_and_grads(xn[idx], yn[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite in epoch {epoch}")
            adam_step(net, grads, lr)
            total += loss * len(idx)
        curve.append(total / n)
        if logger is not None and log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d loss %.6g", epoch + 1, curve[-1])
    return net, curve


def soft_update(target, source, tau):
    """``target <- tau * source + (1 - tau) * target`` parameter-wise."""
    for t, s in zip(target.params, source.params):
        t *= 1.0 - tau
        t += tau * s


# -- serialisation -----------------------------------------------------------

def save(net, path):
    """Write a versioned flat binary file: magic, JSON header, float64 blobs."""
    arrays = {"param": net.params, "adam_m": net.adam_m, "adam_v": net.adam_v}
    header = {
        "format": "hemsdr-net",
        "version": FORMAT_VERSION,
        "kind": net.kind,
        "config": net.config(),
        "seed": net.seed,
        "adam_t": net.adam_t,
        "standardizers": {
            "x_shift": net.x_shift.tolist(),
            "x_scale": net.x_scale.tolist(),
            "y_shift": net.y_shift.tolist(),
            "y_scale": net.y_scale.tolist(),
        },
        "meta": net.meta,
        "arrays": [
            {"group": g, "shape": list(a.shape)} for g, lst in arrays.items() for a in lst
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for lst in arrays.values():
            for a in lst:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load(path):
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise DataError(f"{path}: not a hemsdr network file")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    header = json.loads(data[20:20 + hlen].decode("utf-8"))
    cfg = header["config"]
    if header["kind"] == "dense":
        net = DenseNet(cfg["widths"], cfg["activations"], seed=header["seed"])
    elif header["kind"] == "gru":
        net = GruNet(seed=header["seed"], **cfg)
    else:
        raise DataError(f"{path}: unknown network kind {header['kind']!r}")
    offset = 20 + hlen
    groups = {"param": [], "adam_m": [], "adam_v": []}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(spec["shape"])
        groups[spec["group"]].append(arr.astype(np.float64))
        offset += 8 * count
    net.params = groups["param"]
    net.adam_m = groups["adam_m"]
    net.adam_v = groups["adam_v"]
    net.adam_t = header["adam_t"]
    st = header["standardizers"]
    for key in ("x_shift", "x_scale", "y_shift", "y_scale"):
        setattr(net, key, np.array(st[key], dtype=np.float64))
    net.meta = header["meta"]
    return net
