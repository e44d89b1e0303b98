"""Fully connected networks: architecture, parameters, data, and losses.

Layer ``l`` (1-based) maps ``n_{l-1}`` features to ``n_l`` features with a
weight matrix of shape ``(n_{l-1}, n_l)`` and a bias vector of length ``n_l``.
Hidden layers apply the activation; the output layer is affine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .activations import Activation
from .errors import (
    DataRankError,
    HypothesisError,
    InvalidEpsilonError,
    InvalidInputError,
    InvalidParamsError,
    InvalidTargetError,
    UnsupportedActivationError,
    WidthError,
)
from .linalg import as_matrix, numerical_rank

LOSS_KINDS = ("square", "cross_entropy")


@dataclass(frozen=True)
class NetworkSpec:
    widths: tuple[int, ...]
    activation: Activation
    loss_kind: str = "square"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 3:
            raise InvalidInputError("need at least two weight layers (L >= 2)")
        if any(w < 1 for w in self.widths):
            raise InvalidInputError("all widths must be positive")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidInputError(f"unknown loss {self.loss_kind!r}")

    @property
    def L(self) -> int:
        return len(self.widths) - 1

    @property
    def loss_fn(self) -> "Loss":
        return LOSSES[self.loss_kind]

    def subnetwork(self, start: int) -> "NetworkSpec":
        """Layers ``start+1 .. L`` as a network whose input width is ``n_start``.

        The result may have a single weight layer, which NetworkSpec itself
        rejects, so callers handle ``start = L-1`` separately.
        """
        obj = object.__new__(NetworkSpec)
        object.__setattr__(obj, "widths", self.widths[start:])
        object.__setattr__(obj, "activation", self.activation)
        object.__setattr__(obj, "loss_kind", self.loss_kind)
        return obj

    def to_json(self) -> dict:
        return {
            "widths": list(self.widths),
            "activation": self.activation.to_json(),
            "loss": self.loss_kind,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkSpec":
        return cls(tuple(obj["widths"]), Activation.from_json(obj["activation"]), obj.get("loss", "square"))


@dataclass(frozen=True, eq=False)
class Params:
    """Point in parameter space: ``W[l]`` and ``b[l]`` for 0-based layer ``l``."""

    W: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.W) != len(self.b):
            raise InvalidParamsError("weights and biases have different layer counts")
        W = tuple(as_matrix(w, f"W_{i + 1}") for i, w in enumerate(self.W))
        b = tuple(np.asarray(v, dtype=np.float64).reshape(-1) for v in self.b)
        for i, (w, v) in enumerate(zip(W, b)):
            if w.shape[1] != v.shape[0]:
                raise InvalidParamsError(f"layer {i + 1}: W has {w.shape[1]} columns, b has {v.shape[0]} entries")
            if not np.all(np.isfinite(v)):
                raise InvalidParamsError(f"layer {i + 1}: non-finite bias")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def L(self) -> int:
        return len(self.W)

    def check(self, spec: NetworkSpec) -> "Params":
        if self.L != spec.L:
            raise InvalidParamsError(f"expected {spec.L} layers, got {self.L}")
        for i in range(self.L):
            want = (spec.widths[i], spec.widths[i + 1])
            if self.W[i].shape != want:
                raise InvalidParamsError(f"W_{i + 1} has shape {self.W[i].shape}, expected {want}")
        return self

    def replace(self, layer: int, W=None, b=None) -> "Params":
        """Copy with 0-based ``layer`` replaced."""
        Ws, bs = list(self.W), list(self.b)
        if W is not None:
            Ws[layer] = W
        if b is not None:
            bs[layer] = b
        return Params(tuple(Ws), tuple(bs))

    def slice(self, start: int, stop: int | None = None) -> "Params":
        return Params(self.W[start:stop], self.b[start:stop])

    def __add__(self, other: "Params") -> "Params":
        """Concatenate layers (lower layers first)."""
        return Params(self.W + other.W, self.b + other.b)

    def augmented(self, layer: int) -> np.ndarray:
        """Stacked ``[W; b^T]`` for 0-based ``layer``."""
        return np.vstack([self.W[layer], self.b[layer][None, :]])

    def with_augmented(self, layer: int, U: np.ndarray) -> "Params":
        return self.replace(layer, W=U[:-1], b=U[-1])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.W, self.b) for a in pair])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def max_abs_diff(self, other: "Params") -> float:
        if self.L != other.L or any(a.shape != c.shape for a, c in zip(self.W, other.W)):
            return float("inf")
        return float(np.max(np.abs(self.flat() - other.flat())))

    def equals(self, other: "Params") -> bool:
        return self.max_abs_diff(other) == 0.0

    def lerp(self, other: "Params", lam: float) -> "Params":
        return Params(
            tuple((1.0 - lam) * a + lam * c for a, c in zip(self.W, other.W)),
            tuple((1.0 - lam) * a + lam * c for a, c in zip(self.b, other.b)),
        )

    def to_json(self) -> dict:
        return {"layers": [{"W": w.tolist(), "b": v.tolist()} for w, v in zip(self.W, self.b)]}

    @classmethod
    def from_json(cls, obj: dict) -> "Params":
        layers = obj["layers"]
        return cls(
            tuple(np.array(layer["W"], dtype=np.float64) for layer in layers),
            tuple(np.array(layer["b"], dtype=np.float64) for layer in layers),
        )

    @classmethod
    def random(cls, spec: NetworkSpec, rng: np.random.Generator, scale: float = 1.0) -> "Params":
        """Gaussian init with ``1/sqrt(fan_in)`` scaling."""
        Ws, bs = [], []
        for i in range(spec.L):
            fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
            Ws.append(rng.standard_normal((fan_in, fan_out)) * scale / np.sqrt(fan_in))
            bs.append(rng.standard_normal(fan_out) * 0.1 * scale)
        return cls(tuple(Ws), tuple(bs))


def _min_row_gap(X: np.ndarray) -> float:
    if X.shape[0] < 2:
        return float("inf")
    diff = X[:, None, :] - X[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def rows_distinct(X: np.ndarray, rel: float = 1e-9) -> bool:
    """Pairwise row distances exceed ``rel * (1 + max row norm)``."""
    scale = 1.0 + float(np.max(np.linalg.norm(X, axis=1))) if X.size else 1.0
    return _min_row_gap(X) > rel * scale


def entries_distinct(v: np.ndarray, rel: float = 1e-9) -> bool:
    if v.size < 2:
        return True
    s = np.sort(v)
    return float(np.min(np.diff(s))) > rel * (1.0 + float(np.max(np.abs(v))))


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    check_distinct: bool = field(default=True, repr=False)

    def __post_init__(self):
        X = as_matrix(self.X, "X")
        Y = as_matrix(self.Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise InvalidInputError("X and Y have different sample counts")
        if X.shape[0] < 1:
            raise InvalidInputError("need at least one sample")
        if self.check_distinct and not rows_distinct(X):
            raise InvalidInputError("training samples are not distinct")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    def with_inputs(self, X: np.ndarray) -> "Dataset":
        """Same targets, new inputs (feature matrices feeding a subnetwork)."""
        return Dataset(X, self.Y, check_distinct=False)

    def to_json(self) -> dict:
        return {"X": self.X.tolist(), "Y": self.Y.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Dataset":
        return cls(np.array(obj["X"], dtype=np.float64), np.array(obj["Y"], dtype=np.float64))


@dataclass(frozen=True)
class LossValue:
    value: float
    lower_bound_p_star: float = 0.0

    def __float__(self) -> float:
        return self.value


class Loss:
    """Convex outer loss on the output matrix plus a target finder."""

    name = ""
    infimum = 0.0

    def value(self, F: np.ndarray, Y: np.ndarray) -> float:
        raise NotImplementedError

    def target(self, Y: np.ndarray, epsilon: float) -> np.ndarray:
        raise NotImplementedError

    def check_targets(self, Y: np.ndarray) -> None:
        pass


class SquareLoss(Loss):
    name = "square"

    def value(self, F, Y):
        R = F - Y
        return 0.5 * float(np.sum(R * R))

    def target(self, Y, epsilon):
        return Y.copy()


class CrossEntropyLoss(Loss):
    name = "cross_entropy"

    def check_targets(self, Y):
        ok = np.all((Y == 0.0) | (Y == 1.0)) and np.all(Y.sum(axis=1) == 1.0)
        if not ok:
            raise InvalidTargetError("cross-entropy needs one-hot targets")

    def value(self, F, Y):
        self.check_targets(Y)
        labels = np.argmax(Y, axis=1)
        lse = logsumexp(F, axis=1)
        picked = F[np.arange(F.shape[0]), labels]
        return float(np.mean(lse - picked))

    def target(self, Y, epsilon):
        """Scaled one-hot logits ``t * Y`` with per-sample loss ``log(1 + (m-1) e^{-t})``."""
        self.check_targets(Y)
        m = Y.shape[1]
        if m == 1:
            return np.zeros_like(Y)
        t = np.log((m - 1) / np.expm1(epsilon))
        Yhat = t * Y
        # rounding can leave the loss a hair above epsilon
        while self.value(Yhat, Y) > epsilon:
            t += 1e-12 * max(1.0, abs(t))
            Yhat = t * Y
        return Yhat


LOSSES: dict[str, Loss] = {"square": SquareLoss(), "cross_entropy": CrossEntropyLoss()}


def _preactivation(F_prev: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return F_prev @ W + b[None, :]


def forward_to_layer(spec: NetworkSpec, params: Params, data: Dataset | np.ndarray, k: int) -> np.ndarray:
    """Layer-``k`` output ``F_k`` for ``0 <= k <= L``."""
    X = data.X if isinstance(data, Dataset) else data
    if not 0 <= k <= spec.L:
        raise InvalidInputError(f"layer index {k} outside [0, {spec.L}]")
    if params.L != spec.L or X.shape[1] != spec.widths[0]:
        raise InvalidParamsError("params or data do not match the spec")
    F = X
    for i in range(k):
        if params.W[i].shape[0] != F.shape[1]:
            raise InvalidParamsError(f"W_{i + 1} expects {params.W[i].shape[0]} inputs, got {F.shape[1]}")
        Z = _preactivation(F, params.W[i], params.b[i])
        F = Z if i == spec.L - 1 else spec.activation(Z)
    return F


def all_layer_outputs(spec: NetworkSpec, params: Params, X: np.ndarray) -> list[np.ndarray]:
    """``[F_0, F_1, ..., F_L]``."""
    outs = [X]
    F = X
    for i in range(params.L):
        Z = _preactivation(F, params.W[i], params.b[i])
        F = Z if i == params.L - 1 else spec.activation(Z)
        outs.append(F)
    return outs


def output(spec: NetworkSpec, params: Params, X: np.ndarray) -> np.ndarray:
    return all_layer_outputs(spec, params, X)[-1]


def loss(spec: NetworkSpec, params: Params, data: Dataset) -> LossValue:
    F = forward_to_layer(spec, params, data, spec.L)
    return LossValue(spec.loss_fn.value(F, data.Y), spec.loss_fn.infimum)


def loss_value(spec: NetworkSpec, params: Params, data: Dataset) -> float:
    return loss(spec, params, data).value


def loss_target(spec: NetworkSpec, data: Dataset, epsilon: float) -> np.ndarray:
    """Output matrix ``Yhat`` whose loss is at most ``epsilon``."""
    if not epsilon > spec.loss_fn.infimum:
        raise InvalidEpsilonError(f"epsilon must exceed {spec.loss_fn.infimum}, got {epsilon}")
    return spec.loss_fn.target(data.Y, epsilon)


# ---------------------------------------------------------------------------
# hypothesis checks

THEOREMS = ("lin-data", "no-bad-valley", "wide-first", "all-wide-descend", "all-wide-connect")
_ALIASES = {
    "1": "lin-data",
    "2": "no-bad-valley",
    "3": "wide-first",
    "4-descend": "all-wide-descend",
    "4-connect": "all-wide-connect",
    "all-wide": "all-wide-connect",
}


def theorem_tag(theorem) -> str:
    tag = _ALIASES.get(str(theorem), str(theorem))
    if tag not in THEOREMS:
        raise InvalidInputError(f"unknown theorem selector {theorem!r}")
    return tag


@dataclass
class HypothesisReport:
    theorem: str
    clauses: list[tuple[str, bool, str]]
    k: int | None = None

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.clauses)

    @property
    def first_failure(self) -> str | None:
        for name, ok, _ in self.clauses:
            if not ok:
                return name
        return None

    def raise_if_failed(self) -> None:
        for name, ok, detail in self.clauses:
            if ok:
                continue
            if name.startswith("rank("):
                raise DataRankError(name, detail)
            if name.endswith("activation"):
                raise UnsupportedActivationError(name, detail)
            if name.startswith(("n_", "K ", "L ", "1 <= k")):
                raise WidthError(name, detail)
            raise HypothesisError(name, detail)

    def to_json(self) -> dict:
        return {
            "theorem": self.theorem,
            "passed": self.passed,
            "first_failure": self.first_failure,
            "k": self.k,
            "clauses": [{"clause": n, "ok": ok, "detail": d} for n, ok, d in self.clauses],
        }


def _strict_chain(widths: Sequence[int], first: int) -> tuple[str, bool, str]:
    """Clause ``n_first > ... > n_L`` over the given tail of widths."""
    L = len(widths) - 1
    name = f"n_{first} > ... > n_L" if first < L else f"n_{first} > ... > n_L (trivial)"
    for i in range(first, L):
        if not widths[i] > widths[i + 1]:
            return name, False, f"n_{i} = {widths[i]} <= n_{i + 1} = {widths[i + 1]}"
    return name, True, ""


def _data_clauses(data: Dataset) -> list[tuple[str, bool, str]]:
    return [("distinct samples", rows_distinct(data.X), "")]


def _rank_clause(X: np.ndarray, N: int) -> tuple[str, bool, str]:
    r = numerical_rank(X).numerical_rank
    return "rank(X) = N", r == N, f"rank(X) = {r}, N = {N}"


def validate_hypotheses(spec: NetworkSpec, data: Dataset, theorem, k: int | None = None) -> HypothesisReport:
    """Check every clause of a theorem's hypotheses; nothing is raised here."""
    tag = theorem_tag(theorem)
    w = spec.widths
    L = spec.L
    N = data.N
    act = spec.activation
    clauses: list[tuple[str, bool, str]] = [("L >= 2", L >= 2, f"L = {L}")]
    clauses += _data_clauses(data)
    a1 = ("invertible activation", act.satisfies_a1, f"{act} is not strictly monotone onto R")
    a2 = ("shift-independent activation", act.satisfies_a2, f"{act} is a combination of its own shifts")
    if tag == "lin-data":
        clauses += [a1, _rank_clause(data.X, N), _strict_chain(w, 1)]
    elif tag == "no-bad-valley":
        clauses += [a1, a2]
        if k is None:
            candidates = [
                kk for kk in range(1, L) if w[kk] >= N and _strict_chain(w, kk + 1)[1]
            ]
            if candidates:
                k = candidates[0]
            else:
                clauses.append(("exists k: n_k >= N and n_{k+1} > ... > n_L", False, f"widths {list(w)}, N = {N}"))
        if k is not None:
            clauses.append(("1 <= k <= L-1", 1 <= k <= L - 1, f"k = {k}"))
            if 1 <= k <= L - 1:
                clauses.append(("n_k >= N", w[k] >= N, f"n_{k} = {w[k]} < N = {N}"))
                clauses.append(_strict_chain(w, k + 1))
    elif tag == "wide-first":
        clauses += [
            a1,
            a2,
            ("n_1 >= 2N", w[1] >= 2 * N, f"n_1 = {w[1]} < 2N = {2 * N}"),
            _strict_chain(w, 2),
        ]
    else:
        K = min(w[1:L])
        need = N if tag == "all-wide-descend" else 2 * N
        name = "K >= N" if tag == "all-wide-descend" else "K >= 2N"
        clauses += [a2, (name, K >= need, f"K = {K} < {need}")]
    clauses = [(n, ok, "" if ok else d) for n, ok, d in clauses]
    return HypothesisReport(tag, clauses, k)


def require(spec: NetworkSpec, data: Dataset, theorem, k: int | None = None) -> HypothesisReport:
    report = validate_hypotheses(spec, data, theorem, k)
    report.raise_if_failed()
    return report
