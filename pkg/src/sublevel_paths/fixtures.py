"""Seeded problem instances shared by the verify runner, the CLI and the tests."""

from __future__ import annotations

import numpy as np

from .activations import Activation, leaky_relu
from .network import Dataset, NetworkSpec, Params


def make_dataset(N: int, d: int, m: int, loss: str, rng: np.random.Generator) -> Dataset:
    X = rng.standard_normal((N, d))
    if loss == "cross_entropy":
        Y = np.eye(m)[rng.integers(0, m, N)]
    else:
        Y = rng.standard_normal((N, m))
    return Dataset(X, Y)


def instance(
    widths,
    N: int,
    seed: int,
    activation: Activation | None = None,
    loss: str = "square",
    scale: float = 1.0,
) -> tuple[NetworkSpec, Dataset, Params, Params]:
    """Spec, data and two independent random parameter points."""
    rng = np.random.default_rng(seed)
    spec = NetworkSpec(tuple(int(w) for w in widths), activation or leaky_relu(), loss)
    data = make_dataset(N, spec.widths[0], spec.widths[-1], loss, rng)
    return spec, data, Params.random(spec, rng, scale), Params.random(spec, rng, scale)


def barrier_fixture(seed: int = 0) -> tuple[NetworkSpec, Dataset]:
    """Widths [2, 16, 1], N = 8, leaky ReLU, square loss."""
    rng = np.random.default_rng(seed)
    spec = NetworkSpec((2, 16, 1), leaky_relu(), "square")
    return spec, make_dataset(8, 2, 1, "square", rng)


def rank_deficient(shape, rank: int, rng: np.random.Generator) -> np.ndarray:
    m, n = shape
    if rank == 0:
        return np.zeros((m, n))
    return rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))
