"""Minimal full-batch gradient descent, used only to produce trained fixtures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import Activation
from .errors import InvalidInputError, TrainingError
from .network import Dataset, NetworkSpec, Params, loss_value

DEFAULT_LR = 1e-2
DEFAULT_MAX_ITER = 50_000
DEFAULT_TARGET = 1e-4


def _act_grad(act: Activation, Z: np.ndarray) -> np.ndarray:
    if act.kind == "leaky_relu":
        return np.where(Z >= 0.0, 1.0, act.param)
    if act.kind == "relu":
        return (Z > 0.0).astype(float)
    if act.kind == "elu":
        return np.where(Z >= 0.0, 1.0, act.param * np.exp(np.minimum(Z, 0.0)))
    return np.ones_like(Z)


def _output_grad(spec: NetworkSpec, F: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if spec.loss_kind == "square":
        return F - Y
    P = np.exp(F - F.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    return (P - Y) / F.shape[0]


def gradient(spec: NetworkSpec, params: Params, data: Dataset) -> Params:
    """Backpropagated gradient of the loss, same layout as ``params``."""
    Fs, Zs = [data.X], []
    for i in range(spec.L):
        Z = Fs[-1] @ params.W[i] + params.b[i][None, :]
        Zs.append(Z)
        Fs.append(Z if i == spec.L - 1 else spec.activation(Z))
    G = _output_grad(spec, Fs[-1], data.Y)
    gW, gb = [None] * spec.L, [None] * spec.L
    for i in range(spec.L - 1, -1, -1):
        gW[i] = Fs[i].T @ G
        gb[i] = G.sum(axis=0)
        if i > 0:
            G = (G @ params.W[i].T) * _act_grad(spec.activation, Zs[i - 1])
    return Params(tuple(gW), tuple(gb))


@dataclass
class TrainResult:
    params: Params
    loss: float
    iterations: int
    converged: bool


def train(
    spec: NetworkSpec,
    data: Dataset,
    params: Params,
    lr: float = DEFAULT_LR,
    max_iter: int = DEFAULT_MAX_ITER,
    target: float = DEFAULT_TARGET,
    raise_on_failure: bool = True,
) -> TrainResult:
    """Plain gradient descent until the loss drops below ``target``."""
    if not lr > 0 or max_iter < 0:
        raise InvalidInputError("lr must be positive and max_iter non-negative")
    p = params
    cur = loss_value(spec, p, data)
    it = 0
    while cur > target and it < max_iter:
        g = gradient(spec, p, data)
        p = Params(
            tuple(w - lr * d for w, d in zip(p.W, g.W)),
            tuple(v - lr * d for v, d in zip(p.b, g.b)),
        )
        cur = loss_value(spec, p, data)
        it += 1
        if not np.isfinite(cur):
            break
    ok = bool(np.isfinite(cur) and cur <= target)
    if not ok and raise_on_failure:
        raise TrainingError(f"gradient descent stopped at loss {cur:.3e} after {it} steps", float(cur))
    return TrainResult(p, float(cur), it, ok)
