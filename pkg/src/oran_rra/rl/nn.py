"""Minimal numpy MLP with manual backprop, Adam, finite-difference checks and checkpoints."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

CHECKPOINT_FORMAT = "oran-rra-params/1"


class Mlp:
    """Fully connected net, ReLU on hidden layers, linear output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator | None = None,
                 out_scale: float = 0.01):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        rng = rng or np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(2.0 / a) if i < len(self.sizes) - 2 else out_scale / np.sqrt(a)
            self.params.append(rng.standard_normal((a, b)) * scale)
            self.params.append(np.zeros(b))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray, keep: bool = False):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input dim {x.shape[-1]} != {self.sizes[0]}")
        acts = [x]
        h = x
        for i in range(self.n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ w + b
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts: list[np.ndarray], dout: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        g = dout
        for i in reversed(range(self.n_layers)):
            h_in = acts[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.params[2 * i].T) * (acts[i] > 0)
        return grads

    def copy(self) -> "Mlp":
        out = Mlp.__new__(Mlp)
        out.sizes = self.sizes
        out.params = [p.copy() for p in self.params]
        return out


def flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)


def unflatten(vec: np.ndarray, like: Sequence[np.ndarray]) -> list[np.ndarray]:
    out, i = [], 0
    for a in like:
        out.append(vec[i : i + a.size].reshape(a.shape).copy())
        i += a.size
    if i != vec.size:
        raise ValueError("vector length does not match parameter shapes")
    return out


@dataclass
class OptimizerState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 3e-4, **kw) -> "OptimizerState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params: list[np.ndarray], grads: Sequence[np.ndarray], state: OptimizerState) -> list[np.ndarray]:
    """Bias-corrected Adam update; returns new arrays and advances ``state`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and moments must align")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        out.append(p - state.lr * (state.m[i] / bc1) / (np.sqrt(state.v[i] / bc2) + state.eps))
    return out


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float | None) -> list[np.ndarray]:
    if not max_norm:
        return grads
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total <= max_norm:
        return grads
    return [g * (max_norm / total) for g in grads]


def grad_check(loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]], params: np.ndarray,
               step: float = 1e-5, n_coords: int | None = None, rng: np.random.Generator | None = None,
               floor: float = 1e-8) -> float:
    """Max relative error between the analytic gradient and a central difference.

    ``loss_fn`` maps a flat parameter vector to (loss, gradient).
    """
    x = np.array(params, dtype=float)
    _, analytic = loss_fn(x)
    idx = np.arange(x.size)
    if n_coords is not None and n_coords < x.size:
        idx = (rng or np.random.default_rng(0)).choice(x.size, n_coords, replace=False)
    worst = 0.0
    for i in idx:
        old = x[i]
        x[i] = old + step
        fp, _ = loss_fn(x)
        x[i] = old - step
        fm, _ = loss_fn(x)
        x[i] = old
        num = (fp - fm) / (2.0 * step)
        err = abs(num - analytic[i]) / max(abs(num), abs(analytic[i]), floor)
        worst = max(worst, err)
    return worst


def save_params(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """JSON checkpoint: per tensor a shape header and its row-major values."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "meta": meta or {},
        "tensors": [
            {"name": k, "shape": list(v.shape), "values": np.ravel(v).tolist()} for k, v in tensors.items()
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    tensors = {t["name"]: np.asarray(t["values"], dtype=float).reshape(t["shape"]) for t in doc["tensors"]}
    return tensors, doc.get("meta", {})
