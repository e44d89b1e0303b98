"""Property-suite runner behind ``verify``: every suite returns one report row."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import constructions as C
from .activations import elu, falsify_assumption2, leaky_relu, linear, relu
from .fixtures import instance, rank_deficient
from .linalg import full_rank_matrix_path, numerical_rank, pseudo_inverse
from .network import all_layer_outputs, forward_to_layer
from .pathkit import LinearSegment, ParamPath, certify, constant


@dataclass
class SuiteResult:
    name: str
    passed: bool
    instances: int
    seconds: float
    failures: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return dict(self.__dict__)


def minor_rank(A: np.ndarray, tol: float = 1e-9) -> int:
    """Largest order of a square submatrix with non-negligible determinant."""
    m, n = A.shape
    scale = max(1.0, float(np.max(np.abs(A))))
    for r in range(min(m, n), 0, -1):
        for rows in itertools.combinations(range(m), r):
            for cols in itertools.combinations(range(n), r):
                if abs(np.linalg.det(A[np.ix_(rows, cols)])) > tol * scale**r:
                    return r
    return 0


def _suite_linalg(seeds: int) -> list[str]:
    bad = []
    rng = np.random.default_rng(0)
    for s in range(seeds * 20):
        A = rng.integers(-3, 4, size=(rng.integers(1, 5), rng.integers(1, 5))).astype(float)
        if numerical_rank(A).numerical_rank != minor_rank(A):
            bad.append(f"rank mismatch seed {s}")
    for s in range(seeds):
        A = np.random.default_rng(s).standard_normal((4, 7))
        if np.linalg.norm(A @ pseudo_inverse(A) - np.eye(4)) > 1e-8 * max(1.0, np.linalg.norm(A)):
            bad.append(f"pinv seed {s}")
        r = np.random.default_rng(100 + s)
        det = full_rank_matrix_path(r.standard_normal((3, 5)), r.standard_normal((3, 5)), seed=s)
        if det.certified_min_sv <= 1e-8:
            bad.append(f"matrix path seed {s}")
    return bad


def _suite_activations(seeds: int) -> list[str]:
    bad = []
    for act, expect in ((linear(), True), (leaky_relu(), False), (relu(), False), (elu(), False)):
        if falsify_assumption2(act).found != expect:
            bad.append(f"falsifier disagrees for {act}")
    return bad


def _suite_network(seeds: int) -> list[str]:
    bad = []
    for s in range(seeds):
        spec, data, p, _ = instance([3, 5, 4, 2], 6, s)
        F = data.X
        for i in range(spec.L):
            F = F @ p.W[i] + p.b[i]
            if i < spec.L - 1:
                F = np.where(F >= 0, F, 0.01 * F)
        if np.max(np.abs(F - forward_to_layer(spec, p, data, spec.L))) > 1e-12:
            bad.append(f"forward seed {s}")
    return bad


def _suite_map_h(seeds: int) -> list[str]:
    bad = []
    for s in range(seeds):
        spec, data, p, q = instance([4, 7, 5, 3], 4, s)
        for k in (2, 3):
            A = all_layer_outputs(spec, q, data.X)[k]
            uppers = [(p.W[j], p.b[j]) for j in range(1, k)]
            W1, b1 = C.map_h(spec, data, uppers, A, k)
            got = forward_to_layer(spec, p.replace(0, W=W1, b=b1), data, k)
            if np.linalg.norm(got - A) > 1e-7 * (1 + np.linalg.norm(A)):
                bad.append(f"round trip seed {s} k {k}")
    return bad


def _certified(path, spec, data, name, bad, tol=1e-6):
    cert = certify(path, spec, data, tol=tol)
    if not cert.passed:
        bad.append(f"{name}: certificate failed")
    return cert


def _suite_full_rank(seeds: int) -> list[str]:
    bad = []
    for s in range(seeds):
        spec, data, p, _ = instance([3, 6, 4, 2], 3, s)
        rng = np.random.default_rng(s)
        p = p.replace(1, W=rank_deficient((6, 4), s % 3, rng))
        path, end = C.path_to_full_rank(spec, data, p, seed=s)
        _certified(path, spec, data, f"full rank seed {s}", bad)
        if any(numerical_rank(W).numerical_rank < W.shape[1] for W in end.W[1:]):
            bad.append(f"full rank seed {s}: endpoint rank-deficient")
    return bad


def _suite_rewire(seeds: int) -> list[str]:
    bad = []
    for s in range(seeds):
        rng = np.random.default_rng(s)
        F = rank_deficient((5, 8), 3, rng)
        W = rng.standard_normal((8, 2))
        curve = C.rewire_redundant_columns(F, W)
        Z = F @ W
        if max(np.max(np.abs(F @ curve.at(l) - Z)) for l in np.linspace(0, 1, 64)) > 1e-9:
            bad.append(f"rewire seed {s}")
    return bad


def _suite_boost(seeds: int) -> list[str]:
    bad = []
    for s in range(seeds):
        spec, data, p, _ = instance([3, 4, 3, 2], 4, s)
        W1 = p.W[0].copy()
        W1[:, 2:] = W1[:, :2]
        b1 = p.b[0].copy()
        b1[2:] = b1[:2]
        p = p.replace(0, W=W1, b=b1)
        path, wit = C.bias_rank_boost(spec, data, p, 1, seed=s)
        _certified(path, spec, data, f"boost seed {s}", bad)
        if wit.rank_report.numerical_rank != data.N:
            bad.append(f"boost seed {s}: rank {wit.rank_report.numerical_rank}")
    return bad


def _suite_equalize(seeds: int) -> list[str]:
    bad = []
    for s in range(seeds):
        rng = np.random.default_rng(s)
        X = np.hstack([rng.standard_normal((3, 2)), np.ones((3, 1))])
        W, Wp, V = rng.standard_normal((3, 6)), rng.standard_normal((3, 6)), rng.standard_normal((6, 2))
        act = leaky_relu()
        curve = C.equalize_layer(X, W, V, Wp, act)
        Z = act(X @ W) @ V
        drift = max(np.max(np.abs(act(X @ Wl) @ Vl - Z)) for Wl, Vl in (curve.at(l) for l in np.linspace(0, 1, 128)))
        if drift > 1e-8 or not np.array_equal(curve.end[0], Wp):
            bad.append(f"equalize seed {s}")
    return bad


def _suite_connect(seeds: int) -> list[str]:
    bad = []
    for s in range(seeds):
        for loss in ("square", "cross_entropy"):
            spec, data, p, q = instance([4, 6, 4, 2], 4, s, loss=loss)
            _certified(C.connect_lin_data(spec, data, p, q, seed=s), spec, data, f"lin-data {loss} seed {s}", bad)
        spec, data, p, q = instance([3, 8, 5, 3, 2], 4, s)
        _certified(C.connect_wide_first(spec, data, p, q, seed=s), spec, data, f"wide-first seed {s}", bad)
        spec, data, p, q = instance([3, 8, 8, 2], 4, s, activation=relu())
        _certified(C.connect_all_wide(spec, data, p, q, seed=s), spec, data, f"all-wide seed {s}", bad)
    return bad


def _suite_descend(seeds: int) -> list[str]:
    bad = []
    for s in range(seeds):
        spec, data, p, _ = instance([3, 8, 4, 2], 6, s)
        path = C.descend_no_bad_valley(spec, data, p, k=1, epsilon=1e-6, seed=s)
        cert = _certified(path, spec, data, f"no-bad-valley seed {s}", bad)
        if cert.end_loss > 1e-6:
            bad.append(f"no-bad-valley seed {s}: end loss {cert.end_loss:.2e}")
        spec, data, p, _ = instance([3, 4, 4, 2], 4, s, activation=elu())
        path = C.descend_all_wide(spec, data, p, epsilon=1e-6, seed=s)
        cert = _certified(path, spec, data, f"all-wide descend seed {s}", bad)
        if cert.end_loss > 1e-6:
            bad.append(f"all-wide descend seed {s}: end loss {cert.end_loss:.2e}")
    return bad


def _suite_rays(seeds: int) -> list[str]:
    bad = []
    for s in range(seeds):
        spec, data, p, _ = instance([4, 6, 4, 2], 4, s)
        path = C.unbounded_ray_lin_data(spec, data, p, 1e3, seed=s)
        _certified(path, spec, data, f"ray lin-data seed {s}", bad)
        spec, data, p, _ = instance([3, 8, 5, 3, 2], 4, s)
        path = C.unbounded_ray_wide_first(spec, data, p, 1e3)
        _certified(path, spec, data, f"ray wide-first seed {s}", bad)
    return bad


SUITES: dict[str, Callable[[int], list[str]]] = {
    "linalg": _suite_linalg,
    "activations": _suite_activations,
    "network": _suite_network,
    "map_h": _suite_map_h,
    "path_to_full_rank": _suite_full_rank,
    "rewire": _suite_rewire,
    "bias_rank_boost": _suite_boost,
    "equalize": _suite_equalize,
    "connect": _suite_connect,
    "descend": _suite_descend,
    "rays": _suite_rays,
}


def _negative_control(seeds: int) -> list[str]:
    """A straight line between two random points mislabelled as loss-constant."""
    spec, data, p, q = instance([4, 6, 4, 2], 4, 0)
    seg = LinearSegment(p, q, constant(0.0), "corrupted")
    cert = certify(ParamPath([seg], seg.contract), spec, data)
    return [] if cert.passed else ["corrupted path rejected by the certifier"]


def run_suites(seeds: int = 3, negative_control: bool = False, only: list[str] | None = None) -> list[SuiteResult]:
    chosen = {k: v for k, v in SUITES.items() if only is None or k in only}
    if negative_control:
        chosen["negative_control"] = _negative_control
    out = []
    for name, fn in chosen.items():
        t0 = time.perf_counter()
        try:
            bad = fn(seeds)
        except Exception as exc:  # a crash is a suite failure, not a runner failure
            bad = [f"{type(exc).__name__}: {exc}"]
        out.append(SuiteResult(name, not bad, seeds, time.perf_counter() - t0, bad))
    return out


def report(results: list[SuiteResult]) -> dict:
    return {
        "passed": all(r.passed for r in results),
        "suite_count": len(results),
        "suites": [r.to_json() for r in results],
    }
