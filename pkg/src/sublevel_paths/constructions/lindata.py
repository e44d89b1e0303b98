"""Paths for networks whose (frame) input data has full row rank.

All routines accept ``base``: layers below it stay frozen and their output is
treated as the data, which is how the wide-layer pipelines reuse them.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from ..linalg import (
    coefficient_matrix,
    complement,
    full_rank_matrix_path,
    independent_column_basis,
    kernel_basis,
    min_singular_value,
    numerical_rank,
)
from ..network import Dataset, NetworkSpec, Params, all_layer_outputs, loss_target, loss_value
from ..pathkit import ParamPath, PathBuilder, bounded, constant, frozen_path, reverse, single
from .hmap import HSegment, canonicalize_segment, check_frame, retarget_segment

COMPLETION_RETRIES = 16


def _complete_rows(W: np.ndarray, rows: list[int], rng: np.random.Generator) -> np.ndarray:
    """Overwrite ``W[rows]`` so the tall matrix ``W`` gets full column rank."""
    keep = complement(rows, W.shape[0])
    W_I = W[keep]
    n = W.shape[1]
    Nc = kernel_basis(W_I) if keep else np.eye(n)
    d = Nc.shape[1]
    scale = np.linalg.norm(W_I) / np.sqrt(max(len(keep), 1)) if keep else 1.0
    scale = scale if scale > 0 else 1.0
    best = None
    for _ in range(COMPLETION_RETRIES):
        G, _ = np.linalg.qr(rng.standard_normal((len(rows), d)))
        cand = W.copy()
        cand[rows] = scale * G @ Nc.T
        sv = min_singular_value(cand)
        if best is None or sv > best[0]:
            best = (sv, cand)
        if numerical_rank(cand).numerical_rank == n:
            return cand
    return best[1]


def path_to_full_rank(
    spec: NetworkSpec, data: Dataset, params: Params, base: int = 0, seed: int = 0
) -> tuple[ParamPath, Params]:
    """Constant-loss path to a point whose upper weights all have full column rank."""
    params.check(spec)
    check_frame(spec, params, data, base)
    rng = np.random.default_rng(seed)
    pb = PathBuilder(spec, data, params)
    alpha = pb.loss()
    L_sub = spec.L - base
    for j in range(2, L_sub + 1):
        layer = base + j - 1  # 0-based index of W_j in the full network
        if numerical_rank(pb.current.W[layer]).numerical_rank == spec.widths[layer + 1]:
            continue
        seg = canonicalize_segment(spec, data, pb.current, j - 1, base)
        if seg is not None:
            pb.add(seg)
        Wj = pb.current.W[layer]
        I = independent_column_basis(Wj.T)
        Ibar = complement(I, Wj.shape[0])
        E = coefficient_matrix(Wj.T, I).T  # W[Ibar] = E @ W[I]
        F = all_layer_outputs(spec, pb.current, data.X)[layer]
        A1 = F.copy()
        A1[:, I] = F[:, I] + F[:, Ibar] @ E
        A1[:, Ibar] = 0.0
        pb.add(
            retarget_segment(spec, data, pb.current, j - 1, A1, constant(alpha), base, f"drop dependent rows of W_{layer + 1}")
        )
        W_new = _complete_rows(pb.current.W[layer], Ibar, rng)
        pb.linear(pb.current.replace(layer, W=W_new), constant(alpha), f"complete W_{layer + 1}")
    return pb.build(), pb.current


def _detour_floor(A: np.ndarray, B: np.ndarray) -> float:
    return 1e-3 * min(min_singular_value(A), min_singular_value(B))


def _homotopy_segment(spec, data, p, q, base, seed):
    """Move the upper layers of ``p`` to those of ``q`` with the output fixed."""
    L_sub = spec.L - base
    knots, biases, conds = [], [], []
    for j in range(1, L_sub):
        A, B = p.W[base + j], q.W[base + j]
        det = full_rank_matrix_path(A, B, min_sv_floor=_detour_floor(A, B), seed=seed + j)
        knots.append(list(det.knots))
        biases.append((p.b[base + j], q.b[base + j]))
        conds.append(det.certified_min_sv)
    F_out = all_layer_outputs(spec, p, data.X)
    seg = HSegment(
        spec,
        p,
        base,
        F_out[base],
        knots,
        biases,
        F_out[-1],
        F_out[-1],
        None,
        constant(loss_value(spec, p, data)),
        "upper-layer homotopy",
        start=p,
    )
    seg.diagnostics["detour_min_sv"] = conds
    return seg


def _prepare(spec, data, params, base, seed):
    """Full-rank repair followed by canonicalization at the output layer."""
    P, _ = path_to_full_rank(spec, data, params, base, seed)
    pb = PathBuilder(spec, data, params)
    pb.extend(P)
    seg = canonicalize_segment(spec, data, pb.current, spec.L - base, base, "canonicalize output")
    if seg is not None:
        pb.add(seg)
    return pb.build(), pb.current


def connect_lin_data(
    spec: NetworkSpec,
    data: Dataset,
    theta: Params,
    theta_prime: Params,
    base: int = 0,
    seed: int = 0,
    epsilon: float | None = None,
) -> ParamPath:
    """Path whose loss never exceeds ``max(loss(theta), loss(theta_prime))``.

    For cross-entropy the two halves meet at an output whose loss is the smaller
    endpoint loss, or ``epsilon`` when that is smaller still.
    """
    theta.check(spec)
    theta_prime.check(spec)
    for i in range(base):
        if not (np.array_equal(theta.W[i], theta_prime.W[i]) and np.array_equal(theta.b[i], theta_prime.b[i])):
            raise InvalidInputError(f"frozen layer {i + 1} differs between endpoints")
    check_frame(spec, theta, data, base)
    if theta.equals(theta_prime):
        return frozen_path(theta, spec, data)
    P, p = _prepare(spec, data, theta, base, seed)
    Q, q = _prepare(spec, data, theta_prime, base, seed + 1000)
    phi = loss_value(spec, theta, data)
    phi_p = loss_value(spec, theta_prime, data)
    if spec.loss_kind == "square":
        Yhat = data.Y
    else:
        level = min(phi, phi_p) if epsilon is None else min(phi, phi_p, epsilon)
        Yhat = loss_target(spec, data, level)
    k = spec.L - base
    pb = PathBuilder(spec, data, theta)
    pb.extend(P)
    pb.add(_homotopy_segment(spec, data, p, q, base, seed + 2000))
    c1 = retarget_segment(spec, data, pb.current, k, Yhat, bounded(loss_value(spec, pb.current, data)), base, "retarget output")
    pb.add(c1)
    c2 = retarget_segment(spec, data, q, k, Yhat, bounded(loss_value(spec, q, data)), base, "retarget output")
    # both retargets end at the same canonical point
    pb.extend(reverse_single(c2, spec, data))
    pb.extend(reverse(Q, spec, data))
    path = pb.build()
    path.contract = bounded(max(phi, phi_p))
    return path


def reverse_single(seg, spec, data) -> ParamPath:
    return reverse(single(seg), spec, data)


def unbounded_ray_lin_data(
    spec: NetworkSpec, data: Dataset, params: Params, scale_max: float = 10.0, seed: int = 0, base: int = 0
) -> ParamPath:
    """Constant-loss path along which the first upper weight matrix grows by ``scale_max``.

    With ``base > 0`` the lowest ``base`` layers stay frozen and the matrix
    scaled is ``W_{base+2}``.
    """
    params.check(spec)
    check_frame(spec, params, data, base)
    if not scale_max >= 1.0:
        raise InvalidInputError("scale_max must be at least 1")
    if scale_max == 1.0:
        return frozen_path(params, spec, data)
    P, _ = path_to_full_rank(spec, data, params, base, seed)
    pb = PathBuilder(spec, data, params)
    pb.extend(P)
    seg = canonicalize_segment(spec, data, pb.current, 2, base, f"canonicalize layer {base + 2}")
    if seg is not None:
        pb.add(seg)
    cur = pb.current
    F = all_layer_outputs(spec, cur, data.X)
    W2, b2 = cur.W[base + 1], cur.b[base + 1]
    ray = HSegment(
        spec,
        cur,
        base,
        F[base],
        [[W2, scale_max * W2]],
        [(b2, b2)],
        F[base + 2],
        F[base + 2],
        None,
        constant(loss_value(spec, cur, data)),
        f"scale W_{base + 2}",
        start=cur,
    )
    ray.diagnostics["growth"] = float(np.linalg.norm(ray.end.W[base + 1]) / np.linalg.norm(W2))
    pb.add(ray)
    return pb.build()
