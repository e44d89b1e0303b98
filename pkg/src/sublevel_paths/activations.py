"""Activation functions and their assumption flags.

Invertibility (strictly monotone, onto the reals) is what the first-layer
solve needs; shift independence (no nontrivial identity between shifted copies)
is what makes the bias rank search succeed. Flags are hard-coded per kind;
``falsify_assumption2`` is only a numeric cross-check of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, UnsupportedActivationError

KINDS = ("leaky_relu", "relu", "elu", "linear")
DEFAULT_LEAKY_SLOPE = 0.01

_FLAGS = {
    # kind: (invertible, shift-independent)
    "leaky_relu": (True, True),
    "relu": (False, True),
    "elu": (False, True),
    "linear": (True, False),
}


@dataclass(frozen=True)
class Activation:
    kind: str
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown activation {self.kind!r}")
        if self.kind == "leaky_relu" and not 0.0 < self.param < 1.0:
            raise InvalidInputError("leaky_relu slope must lie in (0, 1)")
        if self.kind == "elu" and not self.param > 0.0:
            raise InvalidInputError("elu scale must be positive")

    @property
    def satisfies_a1(self) -> bool:
        return _FLAGS[self.kind][0]

    @property
    def satisfies_a2(self) -> bool:
        return _FLAGS[self.kind][1]

    def __call__(self, x):
        return apply(self, x)

    def to_json(self) -> dict:
        return {"kind": self.kind, "param": self.param}

    @classmethod
    def from_json(cls, obj: dict) -> "Activation":
        return cls(obj["kind"], float(obj.get("param", 0.0)))

    def __str__(self) -> str:
        if self.kind in ("leaky_relu", "elu"):
            return f"{self.kind}({self.param:g})"
        return self.kind


def leaky_relu(slope: float = DEFAULT_LEAKY_SLOPE) -> Activation:
    return Activation("leaky_relu", slope)


def relu() -> Activation:
    return Activation("relu", 0.0)


def elu(scale: float = 1.0) -> Activation:
    return Activation("elu", scale)


def linear() -> Activation:
    return Activation("linear", 0.0)


def parse_activation(text: str) -> Activation:
    """Parse ``"leaky_relu"``, ``"leaky_relu:0.1"``, ``"elu:1.0"`` and so on."""
    kind, _, rest = text.partition(":")
    if kind == "leaky_relu":
        return leaky_relu(float(rest) if rest else DEFAULT_LEAKY_SLOPE)
    if kind == "elu":
        return elu(float(rest) if rest else 1.0)
    if kind in ("relu", "linear"):
        return Activation(kind)
    raise InvalidInputError(f"unknown activation {text!r}")


def apply(act: Activation, x):
    x = np.asarray(x, dtype=np.float64)
    if act.kind == "leaky_relu":
        return np.where(x >= 0.0, x, act.param * x)
    if act.kind == "relu":
        return np.maximum(x, 0.0)
    if act.kind == "elu":
        return np.where(x >= 0.0, x, act.param * np.expm1(np.minimum(x, 0.0)))
    return x.copy()


def invert(act: Activation, y):
    """Elementwise inverse; only defined for invertible activations."""
    if not act.satisfies_a1:
        raise UnsupportedActivationError("invertible activation", f"{act} is not invertible on the reals")
    y = np.asarray(y, dtype=np.float64)
    if act.kind == "leaky_relu":
        return np.where(y >= 0.0, y, y / act.param)
    return y.copy()


@dataclass
class FalsifierReport:
    found: bool
    best_residual: float
    shifts: list[float] = field(default_factory=list)
    coefficients: list[float] = field(default_factory=list)
    trials: int = 0


def falsify_assumption2(
    act: Activation,
    num_shifts: int = 4,
    grid=None,
    tol: float = 1e-6,
    seed: int = 0,
    trials: int = 256,
) -> FalsifierReport:
    """Search for ``sigma(x) = sum_i c_i sigma(x - a_i)`` on a sample grid.

    Shift sets of every size up to ``num_shifts`` are drawn from a fixed grid
    of nonzero offsets; coefficients come from least squares. A hit needs a
    max-abs residual at most ``tol`` and coefficient norm at least 1e-3.
    """
    if not 1 <= num_shifts <= 8:
        raise InvalidInputError("num_shifts must lie in [1, 8]")
    x = np.linspace(-10.0, 10.0, 1024) if grid is None else np.asarray(grid, dtype=np.float64)
    if x.size < 512 or x.min() > -10.0 or x.max() < 10.0:
        raise InvalidInputError("grid must cover [-10, 10] with at least 512 points")
    pool = np.linspace(-5.0, 5.0, 41)
    pool = pool[np.abs(pool) > 1e-12]
    rng = np.random.default_rng(seed)
    target = apply(act, x)
    best = FalsifierReport(False, float("inf"))
    count = 0
    for t in range(trials):
        p = 1 + t % num_shifts
        shifts = rng.choice(pool, size=p, replace=False)
        basis = np.column_stack([apply(act, x - a) for a in shifts])
        coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
        count += 1
        if np.linalg.norm(coef) < 1e-3:
            continue
        resid = float(np.max(np.abs(basis @ coef - target)))
        if resid < best.best_residual:
            best = FalsifierReport(False, resid, shifts.tolist(), coef.tolist())
        if resid <= tol:
            break
    best.found = best.best_residual <= tol
    best.trials = count
    return best
