"""Small neural-net building blocks on top of the diffcore tape.

Modules are plain classes holding named parameter tensors; ``params()``
returns an ordered name->Tensor mapping used by the optimizer and the
checkpoint container.  Nonlinearity is tanh throughout.
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor


def xavier(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


class Linear:
    def __init__(self, rng, d_in: int, d_out: int, name: str,
                 zero_init: bool = False, bias_init: float = 0.0):
        self.name = name
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = xavier(rng, d_in, d_out)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.full(d_out, bias_init, dtype=np.float64),
                        requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        y = dc.matmul(x, self.w)
        return dc.add(y, dc.broadcast_to(self.b, y.shape))

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}


class MLP:
    """depth hidden tanh layers of uniform width, linear head."""

    def __init__(self, rng, d_in: int, width: int, depth: int, d_out: int,
                 name: str):
        self.layers = []
        d = d_in
        for i in range(depth):
            self.layers.append(Linear(rng, d, width, f"{name}.h{i}"))
            d = width
        self.out = Linear(rng, d, d_out, f"{name}.out")

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = dc.tanh(layer(x))
        return self.out(x)

    def params(self) -> dict[str, Tensor]:
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        out.update(self.out.params())
        return out


class Conv1d:
    """Same-padded temporal convolution over (B, T, C) tensors, odd kernel."""

    def __init__(self, rng, d_in: int, d_out: int, kernel: int, name: str):
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.name = name
        self.kernel = kernel
        self.w = Tensor(
            np.stack([xavier(rng, d_in, d_out) / kernel for _ in range(kernel)]),
            requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        b, t, c = x.shape
        pad = (self.kernel - 1) // 2
        zeros = Tensor(np.zeros((b, pad, c)))
        xp = dc.concat([zeros, x, zeros], axis=1)
        acc = None
        for k in range(self.kernel):
            term = dc.matmul(xp[:, k:k + t, :], self.w[k])
            acc = term if acc is None else dc.add(acc, term)
        return dc.add(acc, dc.broadcast_to(self.b, acc.shape))

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}


def sinusoidal_features(values: np.ndarray, n_bands: int) -> np.ndarray:
    """Positional features [v, sin(2^k pi v), cos(2^k pi v)] for k < n_bands.

    The raw value leads so linear trends don't have to be synthesized from
    low-frequency sinusoids."""
    v = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    freqs = (2.0 ** np.arange(n_bands)) * np.pi
    arg = v * freqs
    return np.concatenate([v, np.sin(arg), np.cos(arg)], axis=1)


def sinusoidal_dim(n_bands: int) -> int:
    return 1 + 2 * n_bands


def cosine_lr(step: int, total: int, base: float, floor_frac: float = 0.1) -> float:
    t = min(max(step, 0), max(total, 1)) / max(total, 1)
    lo = base * floor_frac
    return lo + 0.5 * (base - lo) * (1.0 + np.cos(np.pi * t))


class Adam:
    """Adaptive-moment optimizer over a named parameter dict (in-place)."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None):
        self.t += 1
        lr = self.lr if lr is None else lr
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                continue
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def collect_grads(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    names = list(params)
    gs = dc.backward(loss, [params[n] for n in names])
    return {n: g.data for n, g in zip(names, gs)}
