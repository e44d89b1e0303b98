"""Dense matrix primitives used by the path constructions.

Everything here works on 2-D float64 numpy arrays and is a pure function of
its inputs. Rank decisions are relative to the largest singular value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, PathNotFoundError, RankDeficiencyError, UnsupportedShapeError

DEFAULT_RANK_TOL = 1e-9
DEFAULT_PINV_CUTOFF = 1e-12


def as_matrix(A, name: str = "A") -> np.ndarray:
    """Coerce to a finite 2-D float64 array (vectors become single columns)."""
    M = np.asarray(A, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def singular_values(A: np.ndarray) -> np.ndarray:
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


@dataclass(frozen=True)
class RankReport:
    numerical_rank: int
    min_singular_value: float
    max_singular_value: float
    tolerance_used: float

    @property
    def condition(self) -> float:
        if self.min_singular_value == 0.0:
            return float("inf")
        return self.max_singular_value / self.min_singular_value


def pseudo_inverse(A, sv_cutoff_rel: float = DEFAULT_PINV_CUTOFF) -> np.ndarray:
    """Moore-Penrose inverse via SVD.

    Singular values below ``sv_cutoff_rel * sigma_max`` are treated as zero,
    as are subnormal ones, whose reciprocals overflow.
    """
    A = as_matrix(A)
    if not 0.0 < sv_cutoff_rel < 1.0:
        raise InvalidInputError("sv_cutoff_rel must lie in (0, 1)")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.shape[1], A.shape[0]))
    keep = (s > sv_cutoff_rel * s[0]) & (s >= np.finfo(float).tiny)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def numerical_rank(A, tol_rel: float = DEFAULT_RANK_TOL) -> RankReport:
    """Count singular values above ``tol_rel * sigma_max``."""
    A = as_matrix(A)
    if not 0.0 < tol_rel < 1.0:
        raise InvalidInputError("tol_rel must lie in (0, 1)")
    s = singular_values(A)
    smax = float(s[0]) if s.size else 0.0
    smin = float(s[-1]) if s.size else 0.0
    rank = int(np.sum(s > tol_rel * smax)) if smax > 0.0 else 0
    return RankReport(rank, smin, smax, tol_rel)


def has_full_rank(A, tol_rel: float = DEFAULT_RANK_TOL) -> bool:
    A = as_matrix(A)
    return numerical_rank(A, tol_rel).numerical_rank == min(A.shape)


def independent_column_basis(A, tol_rel: float = DEFAULT_RANK_TOL) -> list[int]:
    """Indices of a maximal set of linearly independent columns.

    Columns are scanned left to right and kept when their residual against the
    columns already kept exceeds ``tol_rel * sigma_max``, so the lowest index
    wins among dependent columns. If the greedy scan disagrees with the SVD
    rank (borderline spectra), the leading pivots of a column-pivoted QR are
    used instead.
    """
    A = as_matrix(A)
    report = numerical_rank(A, tol_rel)
    r = report.numerical_rank
    if r == 0:
        return []
    thresh = tol_rel * report.max_singular_value
    Q = np.zeros((A.shape[0], 0))
    chosen: list[int] = []
    for j in range(A.shape[1]):
        v = A[:, j].copy()
        for _ in range(2):  # reorthogonalise once
            v -= Q @ (Q.T @ v)
        nv = np.linalg.norm(v)
        if nv > thresh:
            Q = np.column_stack([Q, v / nv])
            chosen.append(j)
            if len(chosen) == r:
                break
    if len(chosen) == r and numerical_rank(A[:, chosen], tol_rel).numerical_rank == r:
        return chosen
    _, _, piv = sla.qr(A, pivoting=True, mode="economic")
    return sorted(int(p) for p in piv[:r])


def complement(indices, n: int) -> list[int]:
    s = set(indices)
    return [j for j in range(n) if j not in s]


def coefficient_matrix(A, basis, tol_rel: float = 1e-8) -> np.ndarray:
    """Solve ``A[:, comp] = A[:, basis] @ E`` in the least-squares sense.

    Raises RankDeficiencyError when the residual exceeds ``tol_rel * ||A||_F``.
    """
    A = as_matrix(A)
    basis = list(basis)
    comp = complement(basis, A.shape[1])
    if not comp:
        return np.zeros((len(basis), 0))
    if not basis:
        if np.linalg.norm(A[:, comp]) > tol_rel * max(np.linalg.norm(A), 1e-300):
            raise RankDeficiencyError("empty basis cannot span a nonzero column space")
        return np.zeros((0, len(comp)))
    B = A[:, basis]
    E, *_ = np.linalg.lstsq(B, A[:, comp], rcond=None)
    resid = np.linalg.norm(B @ E - A[:, comp])
    if resid > tol_rel * np.linalg.norm(A):
        raise RankDeficiencyError(
            f"basis does not span the column space (residual {resid:.3e})"
        )
    return E


def kernel_basis(A, tol_rel: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the right null space (zero columns when trivial)."""
    A = as_matrix(A)
    return sla.null_space(A, rcond=tol_rel)


def min_singular_value(A: np.ndarray) -> float:
    s = singular_values(A)
    return float(s[-1]) if s.size else 0.0


@dataclass(frozen=True)
class MatrixDetour:
    """Two straight pieces ``A -> C -> B``; ``at(0.5)`` is ``C``."""

    A: np.ndarray
    C: np.ndarray
    B: np.ndarray
    certified_min_sv: float
    attempts: int

    @property
    def knots(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.A, self.C, self.B)

    def at(self, lam: float) -> np.ndarray:
        return piecewise_linear(self.knots, lam)


def piecewise_linear(knots, lam: float) -> np.ndarray:
    """Evaluate the polygon through equally spaced ``knots`` at ``lam``."""
    n = len(knots) - 1
    if n == 0:
        return knots[0]
    if lam <= 0.0:
        return knots[0]
    if lam >= 1.0:
        return knots[-1]
    pos = lam * n
    i = min(int(np.floor(pos)), n - 1)
    mu = pos - i
    return (1.0 - mu) * knots[i] + mu * knots[i + 1]


def _segment_min_sv(P: np.ndarray, Q: np.ndarray, samples: int) -> float:
    """Minimum singular value along the segment P -> Q.

    Dense uniform sampling, then golden-section refinement on the bracket
    around the worst sample.
    """
    f = lambda t: min_singular_value((1.0 - t) * P + t * Q)  # noqa: E731
    ts = np.linspace(0.0, 1.0, samples)
    vals = np.array([f(t) for t in ts])
    i = int(np.argmin(vals))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, samples - 1)]
    g = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo + (1 - g) * (hi - lo), lo + g * (hi - lo)
    fa, fb = f(a), f(b)
    best = min(vals[i], fa, fb)
    for _ in range(40):
        if fa < fb:
            hi, b, fb = b, a, fa
            a = lo + (1 - g) * (hi - lo)
            fa = f(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + g * (hi - lo)
            fb = f(b)
        best = min(best, fa, fb)
        if hi - lo < 1e-10:
            break
    return float(best)


def full_rank_matrix_path(
    A,
    B,
    min_sv_floor: float = 1e-8,
    seed: int = 0,
    max_retries: int = 16,
    samples: int = 64,
) -> MatrixDetour:
    """Certified path through full-rank ``m x n`` matrices (``m != n``).

    The midpoint ``C`` is a seeded Gaussian matrix rescaled to the mean
    Frobenius norm of the endpoints; it is redrawn until both straight pieces
    keep the smallest singular value above ``min_sv_floor``.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape != B.shape:
        raise InvalidInputError(f"shape mismatch {A.shape} vs {B.shape}")
    m, n = A.shape
    if m == n:
        raise UnsupportedShapeError("square full-rank matrices form two components; not supported")
    for name, M in (("A", A), ("B", B)):
        if min_singular_value(M) <= min_sv_floor:
            raise InvalidInputError(f"{name} is not full rank above the floor {min_sv_floor:g}")
    if np.array_equal(A, B):
        return MatrixDetour(A, A.copy(), B, min_singular_value(A), 0)
    rng = np.random.default_rng(seed)
    scale = 0.5 * (np.linalg.norm(A) + np.linalg.norm(B))
    best = -np.inf
    for attempt in range(1, max_retries + 1):
        G = rng.standard_normal((m, n))
        C = G * (scale / np.linalg.norm(G))
        floor = min(_segment_min_sv(A, C, samples), _segment_min_sv(C, B, samples))
        best = max(best, floor)
        if floor > min_sv_floor:
            return MatrixDetour(A, C, B, floor, attempt)
    raise PathNotFoundError(f"no full-rank detour after {max_retries} draws", float(best))
