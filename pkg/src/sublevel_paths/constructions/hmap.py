"""Canonical first-layer solve and the curves built on it.

Given full-column-rank weights for layers ``2..k`` and a desired layer-``k``
output ``A``, the first-layer weights are reconstructed by walking backwards
through pseudo-inverses and the activation inverse::

    B_{k-1} = (sigma^{-1}(A) - 1 b_k^T) W_k^+        (A - 1 b_L^T) W_L^+ at the output
    B_l     = (sigma^{-1}(B_{l+1}) - 1 b_{l+1}^T) W_{l+1}^+
    [W_1; b_1^T] = [X, 1]^+ sigma^{-1}(B_1)

Each solve may add a kernel offset (``K_l W_{l+1} = 0``). Scaling the offsets
by ``1 - lam`` gives a constant-output curve from any realisation of ``A`` to
the canonical one.

Everything here operates on a *frame*: layers ``0..base-1`` of the full
network are held fixed and their output ``F_base`` plays the role of the data.
"""

from __future__ import annotations

import numpy as np

from .. import activations as acts
from ..errors import DataRankError, InvalidInputError, WidthError
from ..linalg import numerical_rank, piecewise_linear, pseudo_inverse
from ..network import Dataset, NetworkSpec, Params, all_layer_outputs, loss_value
from ..pathkit import Contract, Segment, bounded, constant, matrix_from_json, matrix_to_json, register_segment


def augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def solve_first_layer(act, X_pinv, uppers, A, output_affine, offsets=None):
    """Backward recursion; returns the stacked first layer ``[W_1; b_1^T]``.

    ``uppers`` lists ``(W_l, b_l)`` for layers ``2..k``. ``offsets`` (optional)
    holds ``[K_0, K_1, ..., K_{k-1}]`` where ``K_0`` offsets the stacked first
    layer and ``K_l`` offsets ``B_l``.
    """
    k = len(uppers) + 1
    if k == 1:
        B = A if output_affine else acts.invert(act, A)
        U = X_pinv @ B
        return U if offsets is None else U + offsets[0]
    Wk, bk = uppers[-1]
    pre = (A if output_affine else acts.invert(act, A)) - bk[None, :]
    B = pre @ pseudo_inverse(Wk)
    if offsets is not None:
        B = B + offsets[k - 1]
    for l in range(k - 1, 1, -1):
        W, b = uppers[l - 2]
        B = (acts.invert(act, B) - b[None, :]) @ pseudo_inverse(W)
        if offsets is not None:
            B = B + offsets[l - 1]
    U = X_pinv @ acts.invert(act, B)
    return U if offsets is None else U + offsets[0]


def kernel_offsets(act, X_pinv, outputs, uppers, output_affine):
    """Offsets that make the recursion reproduce the actual first layer.

    ``outputs`` is ``[U*, F_1, ..., F_k]`` evaluated at the current point, with
    ``U*`` the stacked first layer.
    """
    k = len(uppers) + 1
    U_star = outputs[0]
    F = outputs[1:]
    offs: list[np.ndarray] = [None] * k  # type: ignore[list-item]
    if k >= 2:
        Wk, bk = uppers[-1]
        A = F[k - 1]
        pre = (A if output_affine else acts.invert(act, A)) - bk[None, :]
        offs[k - 1] = F[k - 2] - pre @ pseudo_inverse(Wk)
        for l in range(k - 2, 0, -1):
            W, b = uppers[l - 1]
            offs[l] = F[l - 1] - (acts.invert(act, F[l]) - b[None, :]) @ pseudo_inverse(W)
        offs[0] = U_star - X_pinv @ acts.invert(act, F[0])
    else:
        B = F[0] if output_affine else acts.invert(act, F[0])
        offs[0] = U_star - X_pinv @ B
    return offs


def _cond(M: np.ndarray) -> float:
    s = np.linalg.svd(M, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


@register_segment("first_layer_h_retarget")
class HSegment(Segment):
    """First layer re-solved at every ``lam`` by the canonical map.

    Moving pieces: upper weights follow polylines through ``knots`` (one knot
    means fixed, two a straight line, three a two-piece detour), upper biases
    interpolate linearly, the target is ``(1-lam) A0 + lam A1`` and kernel
    offsets shrink as ``1 - lam``.
    """

    def __init__(
        self,
        spec: NetworkSpec,
        frame: Params,
        base: int,
        data_in: np.ndarray,
        upper_knots: list[list[np.ndarray]],
        upper_b: list[tuple[np.ndarray, np.ndarray]],
        A0: np.ndarray,
        A1: np.ndarray,
        offsets: list[np.ndarray] | None,
        contract: Contract,
        label: str = "",
        start: Params | None = None,
        end: Params | None = None,
    ):
        self.spec = spec
        self.act = spec.activation
        self.frame = frame
        self.base = base
        self.data_in = data_in
        self.upper_knots = upper_knots
        self.upper_b = upper_b
        self.A0 = A0
        self.A1 = A1
        self.offsets = offsets
        self.k = len(upper_knots) + 1
        self.output_affine = base + self.k == spec.L
        self.X_pinv = pseudo_inverse(augment(data_in))
        s = self._at(0.0) if start is None else start
        e = self._at(1.0) if end is None else end
        super().__init__(s, e, contract, label)
        if any(len(kn) == 3 for kn in upper_knots):
            self.kind = "matrix_two_piece_detour"
        self.diagnostics = {"cond_data": _cond(augment(data_in))}
        for i, kn in enumerate(upper_knots):
            self.diagnostics[f"cond_W{base + i + 2}"] = max(_cond(M) for M in kn)

    def _at(self, lam: float) -> Params:
        uppers = [
            (piecewise_linear(kn, lam), (1.0 - lam) * b0 + lam * b1)
            for kn, (b0, b1) in zip(self.upper_knots, self.upper_b)
        ]
        A = (1.0 - lam) * self.A0 + lam * self.A1
        offs = None if self.offsets is None else [(1.0 - lam) * K for K in self.offsets]
        U = solve_first_layer(self.act, self.X_pinv, uppers, A, self.output_affine, offs)
        p = self.frame.with_augmented(self.base, U)
        for i, (W, b) in enumerate(uppers):
            p = p.replace(self.base + 1 + i, W=W, b=b)
        return p

    def payload(self):
        return {
            "base": self.base,
            "frame": self.frame.to_json(),
            "data_in": matrix_to_json(self.data_in),
            "upper_knots": [[matrix_to_json(M) for M in kn] for kn in self.upper_knots],
            "upper_b": [[b0.tolist(), b1.tolist()] for b0, b1 in self.upper_b],
            "A0": matrix_to_json(self.A0),
            "A1": matrix_to_json(self.A1),
            "offsets": None if self.offsets is None else [matrix_to_json(K) for K in self.offsets],
        }

    @classmethod
    def from_payload(cls, payload, spec, start, end, contract, label):
        offs = payload.get("offsets")
        return cls(
            spec,
            Params.from_json(payload["frame"]),
            int(payload["base"]),
            matrix_from_json(payload["data_in"]),
            [[matrix_from_json(M) for M in kn] for kn in payload["upper_knots"]],
            [(np.array(b0, dtype=float), np.array(b1, dtype=float)) for b0, b1 in payload["upper_b"]],
            matrix_from_json(payload["A0"]),
            matrix_from_json(payload["A1"]),
            None if offs is None else [matrix_from_json(K) for K in offs],
            contract,
            label,
            start,
            end,
        )


register_segment("matrix_two_piece_detour")(HSegment)
HSegment.kind = "first_layer_h_retarget"


# ---------------------------------------------------------------------------
# checks shared by the linearly-independent-data constructions


def check_frame(spec: NetworkSpec, params: Params, data: Dataset, base: int, k: int | None = None) -> np.ndarray:
    """Validate the canonical-map hypotheses on a frame; returns ``F_base``."""
    if not spec.activation.satisfies_a1:
        from ..errors import UnsupportedActivationError

        raise UnsupportedActivationError("invertible activation", f"{spec.activation} has no continuous inverse")
    X_in = all_layer_outputs(spec, params, data.X)[base]
    N = X_in.shape[0]
    r = numerical_rank(augment(X_in)).numerical_rank
    if r < N:
        raise DataRankError("rank(X) = N", f"rank([F_{base}, 1]) = {r} < N = {N}")
    w = spec.widths
    top = spec.L if k is None else base + k
    for i in range(base + 1, top):
        if not w[i] > w[i + 1]:
            raise WidthError(f"n_{base + 1} > ... > n_L", f"n_{i} = {w[i]} <= n_{i + 1} = {w[i + 1]}")
    return X_in


def uppers_of(params: Params, base: int, k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(params.W[base + j], params.b[base + j]) for j in range(1, k)]


def check_uppers_full_rank(uppers, base: int) -> None:
    for j, (W, _) in enumerate(uppers):
        r = numerical_rank(W).numerical_rank
        if r < min(W.shape):
            raise WidthError(f"W_{base + j + 2} full rank", f"rank {r} < {min(W.shape)}")


def map_h(spec: NetworkSpec, data: Dataset, upper_params, A, k: int, base: int = 0, lower: Params | None = None):
    """First-layer ``(W_1, b_1)`` realising layer-``k`` output ``A``.

    ``upper_params`` lists ``(W_l, b_l)`` for layers ``2..k``. With ``base > 0``
    the frame's fixed lower layers ``lower`` feed the solved layer.
    """
    uppers = [(np.asarray(W, dtype=float), np.asarray(b, dtype=float).reshape(-1)) for W, b in upper_params]
    if len(uppers) != k - 1:
        raise InvalidInputError(f"need {k - 1} upper layers for k = {k}, got {len(uppers)}")
    if not spec.activation.satisfies_a1:
        from ..errors import UnsupportedActivationError

        raise UnsupportedActivationError("invertible activation", f"{spec.activation} has no continuous inverse")
    X_in = data.X if lower is None or base == 0 else all_layer_outputs(spec, lower, data.X)[base]
    N = X_in.shape[0]
    if numerical_rank(augment(X_in)).numerical_rank < N:
        raise DataRankError("rank(X) = N", "augmented data lacks full row rank")
    w = spec.widths
    for i in range(base + 1, base + k):
        if not w[i] > w[i + 1]:
            raise WidthError(f"n_{base + 1} > ... > n_L", f"n_{i} = {w[i]} <= n_{i + 1} = {w[i + 1]}")
    check_uppers_full_rank(uppers, base)
    output_affine = base + k == spec.L
    U = solve_first_layer(spec.activation, pseudo_inverse(augment(X_in)), uppers, np.asarray(A, dtype=float), output_affine)
    return U[:-1], U[-1]


def _outputs(spec: NetworkSpec, params: Params, data: Dataset) -> list[np.ndarray]:
    return all_layer_outputs(spec, params, data.X)


def canonicalize_segment(spec: NetworkSpec, data: Dataset, params: Params, k: int, base: int = 0, label: str = ""):
    """Constant-output curve to the canonical first layer (None if already there)."""
    outs = _outputs(spec, params, data)
    X_in = outs[base]
    uppers = uppers_of(params, base, k)
    U_star = params.augmented(base)
    offs = kernel_offsets(
        spec.activation,
        pseudo_inverse(augment(X_in)),
        [U_star] + outs[base + 1 : base + k + 1],
        uppers,
        base + k == spec.L,
    )
    A = outs[base + k]
    seg = HSegment(
        spec,
        params,
        base,
        X_in,
        [[W] for W, _ in uppers],
        [(b, b) for _, b in uppers],
        A,
        A,
        offs,
        constant(loss_value(spec, params, data)),
        label or f"canonicalize k={k}",
        start=params,
    )
    scale = 1.0 + params.norm()
    if seg.end.max_abs_diff(params) <= 1e-13 * scale:
        return None
    return seg


def retarget_segment(
    spec: NetworkSpec,
    data: Dataset,
    params: Params,
    k: int,
    A_target: np.ndarray,
    contract: Contract,
    base: int = 0,
    label: str = "",
) -> HSegment:
    """Curve ``lam -> h(uppers, (1-lam) F_k + lam A_target)`` with uppers fixed."""
    outs = _outputs(spec, params, data)
    uppers = uppers_of(params, base, k)
    return HSegment(
        spec,
        params,
        base,
        outs[base],
        [[W] for W, _ in uppers],
        [(b, b) for _, b in uppers],
        outs[base + k],
        np.asarray(A_target, dtype=float),
        None,
        contract,
        label or f"retarget k={k}",
        start=params,
    )


def retarget_first_layer_path(spec: NetworkSpec, data: Dataset, params: Params, k: int, A_target, base: int = 0):
    """One-segment path moving the layer-``k`` output straight to ``A_target``.

    The first layer must already be canonical for its current output. At the
    output layer the loss stays below ``max(start, loss(A_target))`` by
    convexity; an unchanged target gives a constant-loss segment. For hidden
    layers the bound is measured along the segment.
    """
    from ..pathkit import chebyshev_lambdas, single

    params.check(spec)
    check_frame(spec, params, data, base, k)
    check_uppers_full_rank(uppers_of(params, base, k), base)
    A_target = np.asarray(A_target, dtype=float)
    F_k = _outputs(spec, params, data)[base + k]
    start_loss = loss_value(spec, params, data)
    if np.array_equal(F_k, A_target):
        contract = constant(start_loss)
    elif base + k == spec.L:
        contract = bounded(max(start_loss, spec.loss_fn.value(A_target, data.Y)))
    else:
        contract = bounded(start_loss)
    seg = retarget_segment(spec, data, params, k, A_target, contract, base)
    if contract.kind == "loss_bounded" and base + k != spec.L:
        measured = max(loss_value(spec, seg.at(l), data) for l in chebyshev_lambdas(64))
        seg.contract = bounded(measured)
    return single(seg)
