"""Small feed-forward networks over flat parameter vectors.

Parameters are laid out layer by layer: the weight matrix of layer ``i``
(``w_i x w_{i-1}``, row-major) followed by its bias. Hidden layers use ReLU or
the linear-threshold activation ``sgn`` (``sgn(t) = 1`` for ``t >= 0``);
the output layer is affine with no activation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .ilp import IlpInstance, encode


@dataclass(frozen=True)
class NetworkArch:
    widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ValueError(f"bad architecture {self.widths}")

    @property
    def L(self) -> int:
        return len(self.widths) - 2

    @property
    def U(self) -> int:
        return sum(self.widths[1:-1])

    @property
    def W(self) -> int:
        w = self.widths
        return sum((w[i - 1] + 1) * w[i] for i in range(1, len(w)))

    @property
    def W_hidden(self) -> int:
        """Parameters feeding hidden layers only (``W'``)."""
        w = self.widths
        return sum((w[i - 1] + 1) * w[i] for i in range(1, len(w) - 1))

    @property
    def d_in(self) -> int:
        return self.widths[0]

    @property
    def d_out(self) -> int:
        return self.widths[-1]

    @cached_property
    def slices(self) -> list[tuple[slice, slice, tuple[int, int]]]:
        out, pos = [], 0
        w = self.widths
        for i in range(1, len(w)):
            shape = (w[i], w[i - 1])
            size = shape[0] * shape[1]
            out.append((slice(pos, pos + size), slice(pos + size, pos + size + w[i]), shape))
            pos += size + w[i]
        return out


@dataclass(frozen=True)
class ParamBox:
    eta: tuple[float, ...]
    tau: tuple[float, ...]

    def __post_init__(self):
        if len(self.eta) != len(self.tau) or any(e > t for e, t in zip(self.eta, self.tau)):
            raise ValueError("need len(eta) == len(tau) and eta <= tau")

    @classmethod
    def unit(cls, ell: int) -> "ParamBox":
        return cls((0.0,) * ell, (1.0,) * ell)


def unflatten(arch: NetworkArch, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    params = np.asarray(params, dtype=float)
    if params.shape != (arch.W,):
        raise ValueError(f"expected {arch.W} parameters, got shape {params.shape}")
    return [(params[ws].reshape(shape), params[bs]) for ws, bs, shape in arch.slices]


def flatten(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([A.ravel(), b]) for A, b in layers])


def init_params(arch: NetworkArch, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    params = np.zeros(arch.W)
    for ws, _, (fan_out, fan_in) in arch.slices:
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        params[ws] = rng.uniform(-lim, lim, size=fan_out * fan_in)
    return params


def relu(t):
    return np.maximum(t, 0.0)


def sgn(t):
    return (np.asarray(t) >= 0).astype(float)


def crelu(t):
    return np.minimum(np.maximum(t, 0.0), 1.0)


def sigmoid(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


_ACT = {"relu": relu, "lt": sgn}


def _forward(arch, params, X, act):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.shape[1] != arch.d_in:
        raise ValueError(f"input has width {X2.shape[1]}, network expects {arch.d_in}")
    layers = unflatten(arch, params)
    pre, post = [], [X2]
    h = X2
    for A, b in layers[:-1]:
        z = h @ A.T + b
        pre.append(z)
        h = act(z)
        post.append(h)
    A, b = layers[-1]
    y = h @ A.T + b
    return (y[0] if single else y), pre, post, layers


def forward_relu(arch: NetworkArch, params, x) -> np.ndarray:
    return _forward(arch, params, x, relu)[0]


def forward_lt(arch: NetworkArch, params, x) -> np.ndarray:
    return _forward(arch, params, x, sgn)[0]


def hidden_patterns(arch: NetworkArch, params, X) -> list[np.ndarray]:
    """0/1 outputs of every hidden layer of the LT network for inputs ``X``."""
    return _forward(arch, params, np.atleast_2d(X), sgn)[2][1:]


def _backward(arch, X, upstream, pre, post, layers, dact):
    """Gradient of ``sum(upstream * y)`` w.r.t. params and inputs."""
    G = np.atleast_2d(np.asarray(upstream, dtype=float))
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        A, _ = layers[i]
        h_in = post[i]
        grads.append((G.T @ h_in, G.sum(axis=0)))
        G = G @ A
        if i > 0:
            G = G * dact(pre[i - 1])
    grads.reverse()
    return flatten(grads), G


def _relu_grad(z):
    # subgradient 0 at the kink
    return (z > 0).astype(float)


def _ste_grad(z):
    return (np.abs(z) <= 1.0).astype(float)


def backprop_relu(arch: NetworkArch, params, x, upstream, return_input_grad: bool = False):
    """Exact gradient of ``upstream^T forward_relu(x)`` w.r.t. the parameters.

    ``x`` may be a batch (rows); gradients are then summed over the batch.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    up = np.atleast_2d(np.asarray(upstream, dtype=float))
    if up.shape != (X.shape[0], arch.d_out):
        raise ValueError(f"upstream has shape {up.shape}, expected {(X.shape[0], arch.d_out)}")
    _, pre, post, layers = _forward(arch, params, X, relu)
    g, gx = _backward(arch, X, up, pre, post, layers, _relu_grad)
    return (g, gx) if return_input_grad else g


def backprop_ste_lt(arch: NetworkArch, params, x, upstream, return_input_grad: bool = False):
    """Straight-through gradient for the LT network: ``sgn'`` replaced by ``1{|t| <= 1}``."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    up = np.atleast_2d(np.asarray(upstream, dtype=float))
    if up.shape != (X.shape[0], arch.d_out):
        raise ValueError(f"upstream has shape {up.shape}, expected {(X.shape[0], arch.d_out)}")
    _, pre, post, layers = _forward(arch, params, X, sgn)
    g, gx = _backward(arch, X, up, pre, post, layers, _ste_grad)
    return (g, gx) if return_input_grad else g


def squeeze(y, box: ParamBox, kind: str = "crelu") -> np.ndarray:
    """Map raw outputs into the box: ``eta + (tau - eta) * s(y)``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != len(box.eta):
        raise ValueError(f"output width {y.shape[-1]} does not match box dimension {len(box.eta)}")
    if kind == "crelu":
        s = crelu(y)
    elif kind == "sigmoid":
        s = sigmoid(y)
    else:
        raise ValueError(f"unknown squeeze kind {kind!r}")
    eta, tau = np.asarray(box.eta), np.asarray(box.tau)
    return np.clip(eta + (tau - eta) * s, eta, tau)


def squeeze_grad(y, box: ParamBox, kind: str = "crelu") -> np.ndarray:
    y = np.asarray(y, dtype=float)
    scale = np.asarray(box.tau) - np.asarray(box.eta)
    if kind == "crelu":
        return scale * ((y > 0) & (y < 1)).astype(float)
    s = sigmoid(y)
    return scale * s * (1.0 - s)


def policy_map(
    inst: IlpInstance, arch: NetworkArch, params, box: ParamBox | None = None,
    kind: str = "crelu", activation: str = "relu",
) -> np.ndarray:
    """Instance -> CG multiplier: ``squeeze(N(encode(inst)))``."""
    x = encode(inst).vec
    if arch.d_in != len(x) or arch.d_out != inst.m:
        raise ValueError(f"network {arch.widths} does not fit an instance with d={len(x)}, m={inst.m}")
    box = box or ParamBox.unit(inst.m)
    fwd = forward_relu if activation == "relu" else forward_lt
    return squeeze(fwd(arch, params, x), box, kind)


# --- checkpoints ------------------------------------------------------------


def save_checkpoint(path, arch: NetworkArch, params) -> None:
    params = np.asarray(params, dtype=float)
    head = "mlp " + " ".join(str(w) for w in arch.widths)
    body = " ".join(repr(float(v)) for v in params)
    Path(path).write_text(f"{head}\n{body}\n")


def load_checkpoint(path) -> tuple[NetworkArch, np.ndarray]:
    text = Path(path).read_text().split("\n", 1)
    head = text[0].split()
    if not head or head[0] != "mlp":
        raise ValueError(f"{path}: expected header 'mlp widths...'")
    arch = NetworkArch(tuple(int(w) for w in head[1:]))
    vals = np.array([float(t) for t in (text[1].split() if len(text) > 1 else [])])
    if vals.shape != (arch.W,):
        raise ValueError(f"{path}: expected {arch.W} parameters, found {len(vals)}")
    return arch, vals


# --- gradient checking ------------------------------------------------------


def relu_gradient_error(arch: NetworkArch, params, x, upstream, h: float = 1e-5) -> tuple[float, int]:
    """Max relative error of ``backprop_relu`` against central differences.

    Coordinates whose ``+-h`` perturbation flips any hidden ReLU on/off are
    skipped (the function is not differentiable across the kink). Returns the
    error and the number of coordinates compared.
    """
    params = np.asarray(params, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    up = np.atleast_2d(np.asarray(upstream, dtype=float))
    g = backprop_relu(arch, params, x, up)

    def value_and_mask(p):
        y, pre, _, _ = _forward(arch, p, x, relu)
        return float(np.sum(up * y)), np.concatenate([(z > 0).ravel() for z in pre] + [np.zeros(0, bool)])

    _, mask0 = value_and_mask(params)
    worst, used = 0.0, 0
    for k in range(arch.W):
        e = np.zeros(arch.W)
        e[k] = h
        fp, mp = value_and_mask(params + e)
        fm, mm = value_and_mask(params - e)
        if not (np.array_equal(mp, mask0) and np.array_equal(mm, mask0)):
            continue
        fd = (fp - fm) / (2 * h)
        worst = max(worst, abs(fd - g[k]) / max(abs(fd), abs(g[k]), 1e-6))
        used += 1
    return worst, used
