"""End-to-end descent and connection paths for wide networks."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from ..linalg import complement, independent_column_basis, pseudo_inverse
from ..network import Dataset, NetworkSpec, Params, all_layer_outputs, loss_target, loss_value, require
from ..pathkit import ParamPath, PathBuilder, bounded, constant, frozen_path, reverse
from .hmap import canonicalize_segment, retarget_segment
from .lindata import connect_lin_data, path_to_full_rank
from .rewire import (
    DEFAULT_BUDGET,
    bias_rank_boost,
    distinct_rows_nudge,
    equalize_path,
    layer_full_rank_path,
    rewire_redundant_columns,
)


def _solve_last_layer(spec: NetworkSpec, params: Params, data: Dataset, Yhat: np.ndarray) -> Params:
    """Least-squares output weights reaching ``Yhat`` once ``F_{L-1}`` has rank N."""
    F = all_layer_outputs(spec, params, data.X)[spec.L - 1]
    b = params.b[-1]
    W = pseudo_inverse(F) @ (Yhat - b[None, :])
    return params.replace(spec.L - 1, W=W)


def _final_layer_segment(pb: PathBuilder, target: Params, label: str) -> None:
    """Straight move of the output layer; convexity bounds it by the endpoint losses."""
    alpha = max(pb.loss(), pb.loss(target))
    pb.linear(target, bounded(alpha), label)


def descend_no_bad_valley(
    spec: NetworkSpec,
    data: Dataset,
    params: Params,
    k: int | None = None,
    epsilon: float = 1e-3,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    nudge_magnitude: float = 1e-3,
) -> ParamPath:
    """Path from ``params`` to loss at most ``epsilon`` that never climbs above its start.

    A nudge (if needed) and a bias boost make ``F_k`` rank N; the layers above
    ``k`` then descend as in the linearly independent data case.
    """
    params.check(spec)
    report = require(spec, data, "no-bad-valley", k)
    k = report.k
    Yhat = loss_target(spec, data, epsilon)
    if loss_value(spec, params, data) <= epsilon:
        return frozen_path(params, spec, data)
    pb = PathBuilder(spec, data, params)
    nudge, _ = distinct_rows_nudge(spec, data, params, k, nudge_magnitude, seed)
    pb.extend(nudge)
    boost, _ = bias_rank_boost(spec, data, pb.current, k, budget, seed + 1)
    pb.extend(boost)
    if k == spec.L - 1:
        _final_layer_segment(pb, _solve_last_layer(spec, pb.current, data, Yhat), "solve output layer")
    else:
        repair, _ = path_to_full_rank(spec, data, pb.current, base=k, seed=seed + 2)
        pb.extend(repair)
        seg = canonicalize_segment(spec, data, pb.current, spec.L - k, k, "canonicalize suffix")
        if seg is not None:
            pb.add(seg)
        pb.add(retarget_segment(spec, data, pb.current, spec.L - k, Yhat, bounded(pb.loss()), k, "descend to target"))
    return pb.build()


def _reverse_tail(pb: PathBuilder, path: ParamPath) -> None:
    if any(s.kind != "frozen" for s in path.segments):
        pb.extend(reverse(path, pb.spec, pb.data))


def _same_layers(a: Params, b: Params, upto: int) -> bool:
    return all(np.array_equal(a.W[i], b.W[i]) and np.array_equal(a.b[i], b.b[i]) for i in range(upto))


def connect_wide_first(
    spec: NetworkSpec,
    data: Dataset,
    theta: Params,
    theta_prime: Params,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> ParamPath:
    """Path between two points whose loss stays below the larger endpoint loss (``n_1 >= 2N``)."""
    theta.check(spec)
    theta_prime.check(spec)
    require(spec, data, "wide-first")
    if theta.equals(theta_prime):
        return frozen_path(theta, spec, data)
    alpha = max(loss_value(spec, theta, data), loss_value(spec, theta_prime, data))
    P, a = layer_full_rank_path(spec, data, theta, 1, budget, seed)
    Q, a_p = layer_full_rank_path(spec, data, theta_prime, 1, budget, seed + 1)
    pb = PathBuilder(spec, data, theta)
    pb.extend(P)
    eq, _ = equalize_path(spec, data, pb.current, a_p, 1)
    pb.extend(eq)
    assert _same_layers(pb.current, a_p, 1)
    if spec.L == 2:
        _final_layer_segment(pb, a_p, "output layer")
    else:
        pb.extend(connect_lin_data(spec, data, pb.current, a_p, base=1, seed=seed + 2))
    _reverse_tail(pb, Q)
    path = pb.build()
    path.contract = bounded(alpha)
    return path


def unbounded_ray_wide_first(
    spec: NetworkSpec, data: Dataset, params: Params, scale_max: float = 10.0
) -> ParamPath:
    """Constant-loss path scaling the first-layer weights the output ignores."""
    params.check(spec)
    require(spec, data, "wide-first")
    if not scale_max >= 1.0:
        raise InvalidInputError("scale_max must be at least 1")
    if scale_max == 1.0:
        return frozen_path(params, spec, data)
    F1 = all_layer_outputs(spec, params, data.X)[1]
    basis = independent_column_basis(F1)
    free = complement(basis, F1.shape[1])
    pb = PathBuilder(spec, data, params)
    alpha = pb.loss()
    V = rewire_redundant_columns(F1, params.W[1], basis).end
    pb.linear(params.replace(1, W=V), constant(alpha), "rewire W_2")
    W1, b1 = pb.current.W[0].copy(), pb.current.b[0].copy()
    if np.linalg.norm(W1[:, free]) == 0.0 and np.linalg.norm(b1[free]) == 0.0:
        W1[:, free] = 1.0
        pb.linear(pb.current.replace(0, W=W1.copy()), constant(alpha), "seed free columns")
    start_block = np.sqrt(np.linalg.norm(W1[:, free]) ** 2 + np.linalg.norm(b1[free]) ** 2)
    W1[:, free] *= scale_max
    b1[free] *= scale_max
    pb.linear(pb.current.replace(0, W=W1, b=b1), constant(alpha), "scale free columns")
    end_block = np.sqrt(np.linalg.norm(W1[:, free]) ** 2 + np.linalg.norm(b1[free]) ** 2)
    path = pb.build()
    path.segments[-1].diagnostics["growth"] = float(end_block / start_block)
    return path


def descend_all_wide(
    spec: NetworkSpec,
    data: Dataset,
    params: Params,
    epsilon: float = 1e-3,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> ParamPath:
    """Descent path when every hidden layer has width at least N."""
    params.check(spec)
    require(spec, data, "all-wide-descend")
    Yhat = loss_target(spec, data, epsilon)
    if loss_value(spec, params, data) <= epsilon:
        return frozen_path(params, spec, data)
    pb = PathBuilder(spec, data, params)
    for layer in range(1, spec.L):
        P, _ = layer_full_rank_path(spec, data, pb.current, layer, budget, seed + layer)
        pb.extend(P)
    _final_layer_segment(pb, _solve_last_layer(spec, pb.current, data, Yhat), "solve output layer")
    return pb.build()


def connect_all_wide(
    spec: NetworkSpec,
    data: Dataset,
    theta: Params,
    theta_prime: Params,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> ParamPath:
    """Connection when every hidden layer has width at least 2N."""
    theta.check(spec)
    theta_prime.check(spec)
    require(spec, data, "all-wide-connect")
    if theta.equals(theta_prime):
        return frozen_path(theta, spec, data)
    alpha = max(loss_value(spec, theta, data), loss_value(spec, theta_prime, data))
    pb = PathBuilder(spec, data, theta)
    qb = PathBuilder(spec, data, theta_prime)
    for layer in range(1, spec.L):
        P, _ = layer_full_rank_path(spec, data, pb.current, layer, budget, seed + 2 * layer)
        pb.extend(P)
        Q, _ = layer_full_rank_path(spec, data, qb.current, layer, budget, seed + 2 * layer + 1)
        qb.extend(Q)
        eq, _ = equalize_path(spec, data, pb.current, qb.current, layer)
        pb.extend(eq)
    _final_layer_segment(pb, qb.current, "output layer")
    _reverse_tail(pb, qb.build())
    path = pb.build()
    path.contract = bounded(alpha)
    return path
