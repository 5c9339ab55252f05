"""Small dense feed-forward network with hand-written backprop and Adam.

Everything is float64. Inputs may be a single vector ``(n_in,)`` or a batch
``(batch, n_in)``; gradients from a batch are summed over rows.
"""
from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "identity")
_MAGIC = b"JDMLP"
_VERSION = 1


class ShapeError(ValueError):
    pass


@dataclass
class MlpNetwork:
    widths: list[int]
    activations: list[str]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpNetwork":
        return copy.deepcopy(self)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())

    def same_as(self, other: "MlpNetwork") -> bool:
        return (self.widths == other.widths and self.activations == other.activations
                and all(np.array_equal(a, b) for a, b in zip(self.params(), other.params())))


@dataclass
class ParameterGradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def _check_layout(widths, activations):
    if len(widths) < 2:
        raise ShapeError("need at least an input and an output width")
    if len(activations) != len(widths) - 1:
        raise ShapeError(f"{len(widths) - 1} layers but {len(activations)} activations")
    if any(int(w) != w or w < 1 for w in widths):
        raise ShapeError(f"widths must be positive integers: {widths}")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {act!r}")
    if activations[-1] != "identity":
        raise ShapeError("the output layer must be linear (identity)")


def mlp_new(widths, activations=None, init="glorot", rng=None) -> MlpNetwork:
    """Build a network; ``activations`` defaults to relu hidden layers and a linear head.

    ``init`` is ``"glorot"`` (uniform in ``+-sqrt(6 / (fan_in + fan_out))``) or
    ``"zeros"``. Biases start at zero.
    """
    widths = [int(w) for w in widths]
    if activations is None:
        activations = ["relu"] * (len(widths) - 2) + ["identity"]
    activations = list(activations)
    _check_layout(widths, activations)
    rng = rng if rng is not None else np.random.default_rng()
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        if init == "zeros":
            w = np.zeros((fan_out, fan_in))
        elif init == "glorot":
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        else:
            raise ValueError(f"unknown init rule {init!r}")
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpNetwork(widths, activations, weights, biases)


def _as_batch(net: MlpNetwork, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.widths[0]:
        raise ShapeError(f"expected input width {net.widths[0]}, got shape {x.shape}")
    return xb, single


def _forward_cache(net, xb):
    pre, post = [], [xb]
    h = xb
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = h @ w.T + b
        h = np.maximum(z, 0.0) if act == "relu" else z
        pre.append(z)
        post.append(h)
    return pre, post


def forward(net: MlpNetwork, x) -> np.ndarray:
    xb, single = _as_batch(net, x)
    out = _forward_cache(net, xb)[1][-1]
    return out[0] if single else out


def backward(net: MlpNetwork, x, grad_output) -> ParameterGradients:
    """Gradients of ``sum(forward(net, x) * grad_output)`` w.r.t. every parameter."""
    xb, single = _as_batch(net, x)
    g = np.asarray(grad_output, dtype=np.float64)
    g = g[None, :] if single and g.ndim == 1 else g
    if g.shape != (xb.shape[0], net.widths[-1]):
        raise ShapeError(f"grad_output shape {np.shape(grad_output)} does not match output")
    pre, post = _forward_cache(net, xb)
    gw, gb = [None] * len(net.weights), [None] * len(net.weights)
    for i in reversed(range(len(net.weights))):
        if net.activations[i] == "relu":
            g = g * (pre[i] > 0.0)
        gw[i] = g.T @ post[i]
        gb[i] = g.sum(axis=0)
        if i:
            g = g @ net.weights[i]
    return ParameterGradients(gw, gb)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def optimizer_step(net: MlpNetwork, grads: ParameterGradients, state: AdamState):
    """One bias-corrected Adam update, in place. Returns ``(net, state)``."""
    params, gs = net.params(), grads.params()
    if len(params) != len(gs) or any(p.shape != g.shape for p, g in zip(params, gs)):
        raise ShapeError("gradient shapes do not match the network")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state


def numerical_gradients(net: MlpNetwork, x, grad_output, h: float = 1e-5) -> ParameterGradients:
    """Central finite differences of ``sum(forward * grad_output)``; slow, for checking only."""
    probe = net.copy()
    g = np.asarray(grad_output, dtype=np.float64)

    def objective():
        return float(np.sum(forward(probe, x) * g))

    out = []
    for p in probe.params():
        d = np.zeros_like(p)
        flat, dflat = p.reshape(-1), d.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + h
            up = objective()
            flat[j] = keep - h
            down = objective()
            flat[j] = keep
            dflat[j] = (up - down) / (2 * h)
        out.append(d)
    return ParameterGradients(out[0::2], out[1::2])


def max_relative_error(a: ParameterGradients, b: ParameterGradients, floor: float = 1e-6) -> float:
    worst = 0.0
    for x, y in zip(a.params(), b.params()):
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst


# Snapshot layout (all little-endian):
#   magic "JDMLP", u32 version, u32 n_widths, u32 widths[n_widths],
#   u8 activation codes[n_widths - 1] (0 relu, 1 identity),
#   then per layer: float64 weights (out x in, row-major) followed by float64 biases.
def save_snapshot(net: MlpNetwork, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = _MAGIC + struct.pack("<II", _VERSION, len(net.widths))
    head += struct.pack(f"<{len(net.widths)}I", *net.widths)
    head += bytes(ACTIVATIONS.index(a) for a in net.activations)
    body = b"".join(p.astype("<f8").tobytes(order="C") for p in net.params())
    path.write_bytes(head + body)
    return path


def load_snapshot(path) -> MlpNetwork:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path}: not a network snapshot")
    off = len(_MAGIC)
    version, n = struct.unpack_from("<II", data, off)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    off += 8
    widths = list(struct.unpack_from(f"<{n}I", data, off))
    off += 4 * n
    activations = [ACTIVATIONS[c] for c in data[off:off + n - 1]]
    off += n - 1
    _check_layout(widths, activations)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = np.frombuffer(data, "<f8", fan_out * fan_in, off).reshape(fan_out, fan_in).astype(np.float64)
        off += 8 * w.size
        b = np.frombuffer(data, "<f8", fan_out, off).astype(np.float64)
        off += 8 * b.size
        weights.append(w)
        biases.append(b)
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return MlpNetwork(widths, activations, weights, biases)
