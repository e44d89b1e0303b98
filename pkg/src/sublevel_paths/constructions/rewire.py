"""Column rewiring, bias rank search, generic-position nudges and layer equalization.

The matrix-level routines return :class:`BlockCurve` objects: polylines through
tuples of blocks such as ``(W, b, V)``. Every straight piece keeps the product
``sigma(X W + 1 b^T) V`` fixed. The ``*_path`` wrappers place a layer's blocks
into full parameter vectors and emit one linear segment per piece.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    DegeneracyError,
    HypothesisError,
    InvalidInputError,
    NothingToRewireError,
    SearchFailureError,
    UnsupportedActivationError,
    WidthError,
)
from ..linalg import RankReport, as_matrix, coefficient_matrix, complement, independent_column_basis, numerical_rank
from ..network import (
    Dataset,
    NetworkSpec,
    Params,
    all_layer_outputs,
    entries_distinct,
    loss_value,
    rows_distinct,
)
from ..pathkit import LinearSegment, ParamPath, PathBuilder, bounded, chebyshev_lambdas, constant, frozen_path
from .hmap import augment

DEFAULT_BUDGET = 256
DEFAULT_RANK_FLOOR = 1e-6
NUDGE_RETRIES = 8


# ---------------------------------------------------------------------------
# curves over blocks


@dataclass
class BlockCurve:
    """Polyline through equally spaced states; each state is a tuple of arrays."""

    names: tuple[str, ...]
    states: list[tuple[np.ndarray, ...]]
    info: dict = field(default_factory=dict)

    @property
    def start(self):
        return self.states[0]

    @property
    def end(self):
        return self.states[-1]

    @property
    def pieces(self) -> int:
        return len(self.states) - 1

    def at(self, lam: float):
        n = self.pieces
        if n == 0 or lam <= 0.0:
            return self.states[0]
        if lam >= 1.0:
            return self.states[-1]
        pos = lam * n
        i = min(int(np.floor(pos)), n - 1)
        mu = pos - i
        return tuple((1.0 - mu) * a + mu * c for a, c in zip(self.states[i], self.states[i + 1]))

    def push(self, *state: np.ndarray) -> None:
        last = self.states[-1]
        if all(np.array_equal(a, c) for a, c in zip(last, state)):
            return
        self.states.append(tuple(np.array(a, copy=True) for a in state))


@dataclass
class RewireCurve:
    """``c(lam)``: rows ``basis`` get ``W_I + lam E W_Ibar``, the rest ``(1-lam) W_Ibar``."""

    W: np.ndarray
    basis: list[int]
    redundant: list[int]
    E: np.ndarray

    def at(self, lam: float) -> np.ndarray:
        lam = min(max(float(lam), 0.0), 1.0)
        out = np.empty_like(self.W)
        out[self.basis] = self.W[self.basis] + lam * (self.E @ self.W[self.redundant])
        out[self.redundant] = (1.0 - lam) * self.W[self.redundant]
        return out

    @property
    def end(self) -> np.ndarray:
        return self.at(1.0)


def rewire_redundant_columns(F, W, basis=None, tol_rel: float = 1e-9) -> RewireCurve:
    """Curve moving ``W`` off the rows that multiply dependent columns of ``F``.

    ``F @ c(lam)`` is constant, and ``F @ c(1)`` no longer reads ``F[:, redundant]``.
    """
    F = as_matrix(F, "F")
    W = as_matrix(W, "W")
    if F.shape[1] != W.shape[0]:
        raise InvalidInputError(f"F has {F.shape[1]} columns but W has {W.shape[0]} rows")
    basis = independent_column_basis(F, tol_rel) if basis is None else sorted(int(i) for i in basis)
    redundant = complement(basis, F.shape[1])
    if not redundant:
        raise NothingToRewireError("F has full column rank; nothing to rewire")
    E = coefficient_matrix(F, basis)
    return RewireCurve(W, basis, redundant, E)


# ---------------------------------------------------------------------------
# bias rank search


def _residual_fraction(Q: np.ndarray, c: np.ndarray) -> float:
    """Sine of the angle between ``c`` and the span of orthonormal ``Q``."""
    nc = np.linalg.norm(c)
    if nc == 0.0:
        return 0.0
    r = c - Q @ (Q.T @ c) if Q.shape[1] else c
    return float(np.linalg.norm(r) / nc)


def bias_candidates(current: float, v: np.ndarray, budget: int, rng: np.random.Generator) -> np.ndarray:
    """Current value, then the ``+-2^i`` grid, kink midpoints, then seeded normals."""
    grid = [s * 2.0**i for i in range(-4, 9) for s in (1.0, -1.0)]
    srt = np.sort(-v)
    mids = list(0.5 * (srt[1:] + srt[:-1]))
    cands = [current] + grid + mids
    if len(cands) < budget:
        spread = 1.0 + float(np.std(v)) + float(np.max(np.abs(v)))
        cands += list(rng.standard_normal(budget - len(cands)) * spread)
    return np.asarray(cands[:budget], dtype=float)


def _orth(M: np.ndarray) -> np.ndarray:
    if M.shape[1] == 0:
        return np.zeros((M.shape[0], 0))
    Q, _ = np.linalg.qr(M)
    return Q


def _bias_search(act, X_in, W, b, V, budget, rng, floor, resample, trace):
    """Shared core of the bias boost and the wide-layer repair."""
    curve = BlockCurve(("W", "b", "V"), [(W.copy(), b.copy(), V.copy())])
    F = act(X_in @ W + b[None, :])
    N = F.shape[0]
    rep = numerical_rank(F)
    if rep.numerical_rank >= N:
        return curve
    basis = independent_column_basis(F)
    redundant = complement(basis, F.shape[1])
    V1 = rewire_redundant_columns(F, V, basis).end
    curve.push(W, b, V1)
    W1 = W.copy()
    if resample:
        scale = float(np.linalg.norm(W)) / np.sqrt(W.size) if np.any(W) else 1.0
        for j in redundant:
            for _ in range(64):
                g = rng.standard_normal(W.shape[0]) * scale
                if entries_distinct(X_in @ g):
                    W1[:, j] = g
                    break
        curve.push(W1, b, V1)
    b1 = b.copy()
    chosen = list(basis)
    for j in redundant:
        if len(chosen) == N:
            break
        v = X_in @ W1[:, j]
        if not entries_distinct(v):
            continue
        Q = _orth(act(X_in @ W1[:, chosen] + b1[chosen][None, :]))
        cands = bias_candidates(float(b1[j]), v, budget, rng)
        scores = np.array([_residual_fraction(Q, act(v + a)) for a in cands])
        i = int(np.argmax(scores))
        trace.append({"column": j, "best_score": float(scores[i]), "value": float(cands[i])})
        if scores[i] > floor:
            b1[j] = cands[i]
            chosen.append(j)
            curve.push(W1, b1, V1)
    if len(chosen) < N:
        raise SearchFailureError(
            f"bias search exhausted {budget} candidates per column", len(chosen), N
        )
    return curve


def _check_a2(act) -> None:
    if not act.satisfies_a2:
        raise UnsupportedActivationError("shift-independent activation", f"{act} is a combination of its own shifts")


def make_layer_output_full_rank(
    X_in,
    W,
    b,
    V,
    act,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    rank_floor: float = DEFAULT_RANK_FLOOR,
) -> BlockCurve:
    """Curve over ``(W, b, V)`` keeping ``sigma(X W + 1 b^T) V`` fixed and ending at rank N."""
    X_in, W, V = as_matrix(X_in, "X_in"), as_matrix(W, "W"), as_matrix(V, "V")
    b = np.asarray(b, dtype=float).reshape(-1)
    _check_a2(act)
    N, n = X_in.shape[0], W.shape[1]
    if n < N:
        raise WidthError("n >= N", f"layer width {n} < N = {N}")
    if not rows_distinct(X_in):
        raise HypothesisError("distinct samples", "layer input has repeated rows")
    trace: list[dict] = []
    curve = _bias_search(act, X_in, W, b, V, budget, np.random.default_rng(seed), rank_floor, True, trace)
    curve.info["search"] = trace
    return curve


# ---------------------------------------------------------------------------
# equalization


def equalize_layer(X_in, W, V, W_prime, act, tol: float = 1e-9) -> BlockCurve:
    """Curve over ``(W, V)`` from ``W`` to ``W_prime`` with ``sigma(X W) V`` fixed.

    Three copy stages, each preceded by a rewire: first into the columns the
    output ignores, then into the remaining target positions, then the rest.
    The last state's ``W`` is ``W_prime`` exactly.
    """
    X_in, W, V, Wp = (as_matrix(M, nm) for M, nm in ((X_in, "X_in"), (W, "W"), (V, "V"), (W_prime, "W_prime")))
    if W.shape != Wp.shape:
        raise InvalidInputError("W and W_prime differ in shape")
    N, n = X_in.shape[0], W.shape[1]
    if n < 2 * N:
        raise WidthError("n >= 2N", f"layer width {n} < 2N = {2 * N}")
    curve = BlockCurve(("W", "V"), [(W.copy(), V.copy())])
    if np.array_equal(W, Wp):
        return curve
    F = act(X_in @ W)
    Fp = act(X_in @ Wp)
    for name, M in (("W", F), ("W_prime", Fp)):
        r = numerical_rank(M, tol).numerical_rank
        if r < N:
            raise HypothesisError(f"rank(sigma(X {name})) = N", f"rank {r} < N = {N}")
    I = independent_column_basis(F, tol)
    Ip = independent_column_basis(Fp, tol)
    Ip_bar = complement(Ip, n)
    I_bar = complement(I, n)

    # stage 1: output reads only F[:, I]; copy target's basis columns into free slots
    V1 = rewire_redundant_columns(F, V, I, tol).end
    curve.push(W, V1)
    stay = [j for j in Ip if j not in I]
    move = [j for j in Ip if j in I]
    free = [j for j in I_bar if j not in Ip]
    dest = free[: len(move)]
    W2 = W.copy()
    W2[:, stay] = Wp[:, stay]
    W2[:, dest] = Wp[:, move]
    curve.push(W2, V1)

    # stage 2: the copied block has rank N; rewire onto it and fill the target positions
    D = sorted(stay + dest)
    V2 = rewire_redundant_columns(act(X_in @ W2), V1, D, tol).end
    curve.push(W2, V2)
    W3 = W2.copy()
    W3[:, move] = Wp[:, move]
    curve.push(W3, V2)

    # stage 3: columns Ip now match the target; rewire onto them and copy the rest
    V3 = rewire_redundant_columns(act(X_in @ W3), V2, Ip, tol).end
    curve.push(W3, V3)
    W4 = W3.copy()
    W4[:, Ip_bar] = Wp[:, Ip_bar]
    curve.push(W4, V3)
    curve.info.update({"I": I, "I_prime": Ip, "destinations": D})
    return curve


# ---------------------------------------------------------------------------
# network-level wrappers


@dataclass
class WideLayerWitness:
    k: int
    rank_report: RankReport
    params: Params

    def to_json(self) -> dict:
        r = self.rank_report
        return {
            "k": self.k,
            "rank": r.numerical_rank,
            "min_singular_value": r.min_singular_value,
            "max_singular_value": r.max_singular_value,
            "tolerance_used": r.tolerance_used,
        }


def _layer_blocks_to_params(params: Params, layer: int, W, b, V) -> Params:
    """Place ``(W, b)`` at 1-based ``layer`` and ``V`` as the next layer's weights."""
    return params.replace(layer - 1, W=W, b=b).replace(layer, W=V)


def _curve_to_path(spec, data, params, curve: BlockCurve, to_params, label) -> tuple[ParamPath, Params]:
    pb = PathBuilder(spec, data, params)
    alpha = pb.loss()
    for i, state in enumerate(curve.states[1:], start=1):
        pb.linear(to_params(*state), constant(alpha), f"{label} piece {i}")
    return pb.build(), pb.current


def _check_hidden(spec: NetworkSpec, layer: int) -> None:
    if not 1 <= layer <= spec.L - 1:
        raise InvalidInputError(f"layer {layer} is not a hidden layer (1..{spec.L - 1})")


def layer_full_rank_path(
    spec: NetworkSpec,
    data: Dataset,
    params: Params,
    layer: int,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> tuple[ParamPath, Params]:
    """Constant-loss path making ``F_layer`` rank N (freed columns resampled)."""
    _check_hidden(spec, layer)
    outs = all_layer_outputs(spec, params, data.X)
    curve = make_layer_output_full_rank(
        outs[layer - 1], params.W[layer - 1], params.b[layer - 1], params.W[layer], spec.activation, budget, seed
    )
    return _curve_to_path(
        spec, data, params, curve, lambda W, b, V: _layer_blocks_to_params(params, layer, W, b, V), f"repair layer {layer}"
    )


def equalize_path(
    spec: NetworkSpec, data: Dataset, params: Params, target: Params, layer: int
) -> tuple[ParamPath, Params]:
    """Constant-loss path replacing ``(W_layer, b_layer)`` by the target's."""
    _check_hidden(spec, layer)
    X_in = augment(all_layer_outputs(spec, params, data.X)[layer - 1])
    curve = equalize_layer(X_in, params.augmented(layer - 1), params.W[layer], target.augmented(layer - 1), spec.activation)

    def to_params(U, V):
        return params.with_augmented(layer - 1, U).replace(layer, W=V)

    return _curve_to_path(spec, data, params, curve, to_params, f"equalize layer {layer}")


def bias_rank_boost(
    spec: NetworkSpec,
    data: Dataset,
    params: Params,
    k: int,
    search_budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    rank_floor: float = DEFAULT_RANK_FLOOR,
) -> tuple[ParamPath, WideLayerWitness]:
    """Rewire ``W_{k+1}``, then move redundant biases of layer ``k`` until ``rank(F_k) = N``."""
    params.check(spec)
    _check_hidden(spec, k)
    _check_a2(spec.activation)
    N = data.N
    if spec.widths[k] < N:
        raise WidthError("n_k >= N", f"n_{k} = {spec.widths[k]} < N = {N}")
    if search_budget < 1:
        raise InvalidInputError("search_budget must be positive")
    outs = all_layer_outputs(spec, params, data.X)
    trace: list[dict] = []
    curve = _bias_search(
        spec.activation,
        outs[k - 1],
        params.W[k - 1],
        params.b[k - 1],
        params.W[k],
        search_budget,
        np.random.default_rng(seed),
        rank_floor,
        False,
        trace,
    )
    path, end = _curve_to_path(
        spec, data, params, curve, lambda W, b, V: _layer_blocks_to_params(params, k, W, b, V), f"bias boost layer {k}"
    )
    F_k = all_layer_outputs(spec, end, data.X)[k]
    return path, WideLayerWitness(k, numerical_rank(F_k), end)


def _generic(spec: NetworkSpec, params: Params, X: np.ndarray, k: int) -> bool:
    outs = all_layer_outputs(spec, params, X)
    if not all(rows_distinct(outs[i]) for i in range(1, k)):
        return False
    pre = outs[k - 1] @ params.W[k - 1]
    return all(entries_distinct(pre[:, j]) for j in range(pre.shape[1]))


def distinct_rows_nudge(
    spec: NetworkSpec,
    data: Dataset,
    params: Params,
    k: int,
    magnitude: float = 1e-3,
    seed: int = 0,
) -> tuple[ParamPath, Params]:
    """Perturb ``W_1..W_k`` until hidden rows and layer-``k`` pre-activations are distinct.

    The contract bound is the largest loss measured along the segment.
    """
    params.check(spec)
    _check_hidden(spec, k)
    if not magnitude > 0:
        raise InvalidInputError("magnitude must be positive")
    if not rows_distinct(data.X):
        raise HypothesisError("distinct samples", "training inputs have repeated rows")
    if _generic(spec, params, data.X, k):
        return frozen_path(params, spec, data), params
    rng = np.random.default_rng(seed)
    mag = magnitude
    for _ in range(NUDGE_RETRIES):
        Ws = list(params.W)
        for i in range(k):
            Ws[i] = Ws[i] + rng.uniform(-mag, mag, size=Ws[i].shape)
        cand = Params(tuple(Ws), params.b)
        if _generic(spec, cand, data.X, k):
            seg = LinearSegment(params, cand, constant(0.0), "generic-position nudge")
            lams = np.concatenate([[0.0, 1.0], chebyshev_lambdas(64)])
            alpha = max(loss_value(spec, seg.at(l), data) for l in lams)
            seg.contract = bounded(alpha)
            return ParamPath([seg], seg.contract), cand
        mag *= 0.5
    raise DegeneracyError(f"no generic perturbation found after {NUDGE_RETRIES} attempts")
