"""Continuous parameter paths: segments, composition, certification, export.

A path is an ordered list of segments. Each segment is a closed-form curve
``lam -> Params`` on ``[0, 1]`` with declared endpoints and a loss contract.
Endpoints are stored, and each segment is built from the previous segment's
stored end, so consecutive segments join bitwise.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DiscontinuityError, InvalidInputError
from .network import Dataset, NetworkSpec, Params, loss_value

LOSS_CONSTANT = "loss_constant"
LOSS_NONINCREASING = "loss_nonincreasing"
LOSS_BOUNDED = "loss_bounded"
CONTRACT_KINDS = (LOSS_CONSTANT, LOSS_NONINCREASING, LOSS_BOUNDED)
CHAIN_TOL = 1e-10


@dataclass(frozen=True)
class Contract:
    """Loss behaviour along a curve.

    ``alpha`` is the upper bound on the loss; for constant and nonincreasing
    contracts it is the loss at the start of the curve.
    """

    kind: str
    alpha: float

    def __post_init__(self):
        if self.kind not in CONTRACT_KINDS:
            raise InvalidInputError(f"unknown contract {self.kind!r}")

    def merge(self, other: "Contract") -> "Contract":
        """Contract of ``self`` followed by ``other``."""
        alpha = max(self.alpha, other.alpha)
        kinds = {self.kind, other.kind}
        if kinds == {LOSS_CONSTANT}:
            return Contract(LOSS_CONSTANT, alpha)
        if kinds <= {LOSS_CONSTANT, LOSS_NONINCREASING}:
            return Contract(LOSS_NONINCREASING, alpha)
        return Contract(LOSS_BOUNDED, alpha)

    def reversed(self, end_loss: float) -> "Contract":
        if self.kind == LOSS_CONSTANT:
            return Contract(LOSS_CONSTANT, end_loss)
        return Contract(LOSS_BOUNDED, self.alpha)

    def to_json(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha}

    @classmethod
    def from_json(cls, obj: dict) -> "Contract":
        return cls(obj["kind"], float(obj["alpha"]))


def constant(alpha: float) -> Contract:
    return Contract(LOSS_CONSTANT, alpha)


def nonincreasing(alpha: float) -> Contract:
    return Contract(LOSS_NONINCREASING, alpha)


def bounded(alpha: float) -> Contract:
    return Contract(LOSS_BOUNDED, alpha)


# ---------------------------------------------------------------------------
# segments

_SEGMENT_TYPES: dict[str, type] = {}


def register_segment(kind: str):
    def deco(cls):
        cls.kind = kind
        _SEGMENT_TYPES[kind] = cls
        return cls

    return deco


def params_to_json(p: Params) -> dict:
    return p.to_json()


def matrix_to_json(A: np.ndarray) -> list:
    return np.asarray(A).tolist()


def matrix_from_json(obj) -> np.ndarray:
    return np.array(obj, dtype=np.float64)


class Segment:
    """Base segment: subclasses implement ``_at`` and the payload codec."""

    kind = "abstract"

    def __init__(self, start: Params, end: Params, contract: Contract, label: str = ""):
        self.start = start
        self.end = end
        self.contract = contract
        self.label = label
        self.diagnostics: dict = {}

    def at(self, lam: float) -> Params:
        if lam <= 0.0:
            return self.start
        if lam >= 1.0:
            return self.end
        return self._at(float(lam))

    def _at(self, lam: float) -> Params:
        raise NotImplementedError

    def closure_gap(self) -> float:
        """Max-norm mismatch between the closed form and the stored endpoints."""
        return max(self._at(0.0).max_abs_diff(self.start), self._at(1.0).max_abs_diff(self.end))

    def payload(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_payload(cls, payload: dict, spec: NetworkSpec, start: Params, end: Params, contract: Contract, label: str):
        raise NotImplementedError

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "contract": self.contract.to_json(),
            "start": params_to_json(self.start),
            "end": params_to_json(self.end),
            "payload": self.payload(),
        }


@register_segment("frozen")
class FrozenSegment(Segment):
    def __init__(self, point: Params, alpha: float, label: str = "frozen"):
        super().__init__(point, point, constant(alpha), label)

    def _at(self, lam):
        return self.start

    def payload(self):
        return {}

    @classmethod
    def from_payload(cls, payload, spec, start, end, contract, label):
        return cls(start, contract.alpha, label)


@register_segment("linear_in_params")
class LinearSegment(Segment):
    """Straight line ``(1 - lam) * start + lam * end`` in parameter space."""

    def _at(self, lam):
        return self.start.lerp(self.end, lam)

    def payload(self):
        return {}

    @classmethod
    def from_payload(cls, payload, spec, start, end, contract, label):
        return cls(start, end, contract, label)


@register_segment("reversed")
class ReversedSegment(Segment):
    def __init__(self, inner: Segment, contract: Contract):
        super().__init__(inner.end, inner.start, contract, inner.label)
        self.inner = inner
        self.diagnostics = inner.diagnostics

    def _at(self, lam):
        return self.inner._at(1.0 - lam)

    def payload(self):
        return {"inner": self.inner.to_json()}

    @classmethod
    def from_payload(cls, payload, spec, start, end, contract, label):
        return cls(segment_from_json(payload["inner"], spec), contract)


def segment_from_json(obj: dict, spec: NetworkSpec) -> Segment:
    cls = _SEGMENT_TYPES.get(obj["kind"])
    if cls is None:
        raise InvalidInputError(f"unknown segment kind {obj['kind']!r}")
    return cls.from_payload(
        obj.get("payload", {}),
        spec,
        Params.from_json(obj["start"]),
        Params.from_json(obj["end"]),
        Contract.from_json(obj["contract"]),
        obj.get("label", ""),
    )


def reverse_segment(seg: Segment, spec: NetworkSpec, data: Dataset) -> Segment:
    if isinstance(seg, ReversedSegment):
        return seg.inner
    end_loss = loss_value(spec, seg.end, data)
    return ReversedSegment(seg, seg.contract.reversed(end_loss))


# ---------------------------------------------------------------------------
# paths


@dataclass
class ParamPath:
    segments: list[Segment]
    contract: Contract

    def __post_init__(self):
        for i in range(len(self.segments) - 1):
            gap = self.segments[i].end.max_abs_diff(self.segments[i + 1].start)
            if gap > CHAIN_TOL:
                raise DiscontinuityError(gap)

    @property
    def start(self) -> Params:
        self._require_nonempty()
        return self.segments[0].start

    @property
    def end(self) -> Params:
        self._require_nonempty()
        return self.segments[-1].end

    def __len__(self) -> int:
        return len(self.segments)

    def _require_nonempty(self):
        if not self.segments:
            raise InvalidInputError("path has no segments")

    def locate(self, t: float) -> tuple[int, float]:
        """Global ``t`` to (segment index, local lambda), uniform allocation."""
        self._require_nonempty()
        n = len(self.segments)
        t = min(max(float(t), 0.0), 1.0)
        if t >= 1.0:
            return n - 1, 1.0
        pos = t * n
        i = int(np.floor(pos))
        return i, pos - i

    def evaluate(self, t: float) -> Params:
        i, lam = self.locate(t)
        return self.segments[i].at(lam)

    def to_json(self) -> dict:
        return {
            "contract": self.contract.to_json(),
            "segments": [s.to_json() for s in self.segments],
        }

    @classmethod
    def from_json(cls, obj: dict, spec: NetworkSpec) -> "ParamPath":
        return cls([segment_from_json(s, spec) for s in obj["segments"]], Contract.from_json(obj["contract"]))

    def kinds(self) -> list[str]:
        return [s.kind if not isinstance(s, ReversedSegment) else s.inner.kind for s in self.segments]


def evaluate(path: ParamPath, global_t: float) -> Params:
    """Point at global parameter ``t``; each segment gets an equal share of [0, 1]."""
    return path.evaluate(global_t)


def single(seg: Segment) -> ParamPath:
    return ParamPath([seg], seg.contract)


def frozen_path(point: Params, spec: NetworkSpec, data: Dataset, label: str = "frozen") -> ParamPath:
    return single(FrozenSegment(point, loss_value(spec, point, data), label))


def concat(a: ParamPath, b: ParamPath) -> ParamPath:
    """``a`` followed by ``b``; raises DiscontinuityError on a gap above 1e-10."""
    if not a.segments:
        return b
    if not b.segments:
        return a
    gap = a.end.max_abs_diff(b.start)
    if gap > CHAIN_TOL:
        raise DiscontinuityError(gap)
    return ParamPath(a.segments + b.segments, a.contract.merge(b.contract))


def concat_all(paths) -> ParamPath:
    paths = [p for p in paths if p.segments]
    out = paths[0]
    for p in paths[1:]:
        out = concat(out, p)
    return out


def reverse(path: ParamPath, spec: NetworkSpec, data: Dataset) -> ParamPath:
    segs = [reverse_segment(s, spec, data) for s in reversed(path.segments)]
    c = path.contract
    if c.kind == LOSS_CONSTANT:
        contract = constant(loss_value(spec, path.end, data))
    else:
        contract = bounded(c.alpha)
    return ParamPath(segs, contract)


def drop_frozen(path: ParamPath) -> ParamPath:
    """Remove constant segments unless that would leave the path empty."""
    keep = [s for s in path.segments if not isinstance(s, FrozenSegment)]
    if not keep:
        return ParamPath(path.segments[:1], path.contract)
    return ParamPath(keep, path.contract)


class PathBuilder:
    """Accumulates segments from a moving current point."""

    def __init__(self, spec: NetworkSpec, data: Dataset, start: Params):
        self.spec = spec
        self.data = data
        self.start = start
        self.current = start
        self.segments: list[Segment] = []
        self.contract: Contract | None = None

    def loss(self, p: Params | None = None) -> float:
        return loss_value(self.spec, self.current if p is None else p, self.data)

    def add(self, seg: Segment) -> Params:
        gap = self.current.max_abs_diff(seg.start)
        if gap > CHAIN_TOL:
            raise DiscontinuityError(gap)
        self.segments.append(seg)
        self.contract = seg.contract if self.contract is None else self.contract.merge(seg.contract)
        self.current = seg.end
        return self.current

    def linear(self, end: Params, contract: Contract | None = None, label: str = "") -> Params:
        """Straight segment to ``end``; default contract is constant loss."""
        if end.equals(self.current):
            return self.current
        if contract is None:
            contract = constant(self.loss())
        return self.add(LinearSegment(self.current, end, contract, label))

    def extend(self, path: ParamPath) -> Params:
        for seg in path.segments:
            if isinstance(seg, FrozenSegment):
                continue
            self.add(seg)
        return self.current

    def build(self, label: str = "frozen") -> ParamPath:
        if not self.segments:
            return frozen_path(self.start, self.spec, self.data, label)
        return ParamPath(list(self.segments), self.contract)


# ---------------------------------------------------------------------------
# certification


def chebyshev_lambdas(n: int) -> np.ndarray:
    """Chebyshev nodes mapped to [0, 1], plus both endpoints, ascending."""
    i = np.arange(n)
    nodes = 0.5 * (1.0 - np.cos(np.pi * (2 * i + 1) / (2 * n)))
    return np.concatenate([[0.0], nodes, [1.0]])


@dataclass
class SegmentReport:
    index: int
    kind: str
    label: str
    contract: str
    alpha: float
    max_loss: float
    min_loss: float
    drift: float
    monotonicity_violation: float
    closure_gap: float
    passed: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PathCertificate:
    samples_per_segment: int
    tol: float
    alpha: float
    contract: str
    max_loss_observed: float
    max_constant_drift: float
    worst_monotonicity_violation: float
    rank_checks: list[tuple[str, bool]] = field(default_factory=list)
    segments: list[SegmentReport] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    start_loss: float = float("nan")
    end_loss: float = float("nan")
    passed: bool = False

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "contract": self.contract,
            "alpha": self.alpha,
            "tol": self.tol,
            "samples_per_segment": self.samples_per_segment,
            "start_loss": self.start_loss,
            "end_loss": self.end_loss,
            "max_loss_observed": self.max_loss_observed,
            "max_constant_drift": self.max_constant_drift,
            "worst_monotonicity_violation": self.worst_monotonicity_violation,
            "rank_checks": [{"check": d, "passed": ok} for d, ok in self.rank_checks],
            "warnings": list(self.warnings),
            "segments": [s.to_json() for s in self.segments],
        }


def _monotonicity_violation(values: np.ndarray) -> float:
    """Largest rise over any earlier sample (0 for a nonincreasing sequence)."""
    running_min = np.minimum.accumulate(values)
    return float(max(0.0, np.max(values - running_min)))


def certify(
    path: ParamPath,
    spec: NetworkSpec,
    data: Dataset,
    samples_per_segment: int = 64,
    tol: float = 1e-6,
    closure_tol: float = 1e-8,
    extra_checks: list[tuple[str, bool]] | None = None,
) -> PathCertificate:
    """Sample every segment and check its contract and the global bound.

    Tolerances are relative: a loss ``v`` is compared with slack
    ``tol * (1 + |v_ref|)``. Failures are recorded, never raised.
    """
    if samples_per_segment < 16:
        raise InvalidInputError("samples_per_segment must be at least 16")
    lams = chebyshev_lambdas(samples_per_segment)
    reports: list[SegmentReport] = []
    max_loss = -np.inf
    max_drift = 0.0
    worst_mono = 0.0
    warnings: list[str] = []
    checks = list(extra_checks or [])
    ok_all = bool(path.segments)
    for idx, seg in enumerate(path.segments):
        vals = np.array([loss_value(spec, seg.at(lam), data) for lam in lams])
        c = seg.contract
        slack = tol * (1.0 + abs(vals[0]))
        drift = float(np.max(np.abs(vals - vals[0])))
        mono = _monotonicity_violation(vals)
        gap = seg.closure_gap()
        scale = 1.0 + max(seg.start.norm(), seg.end.norm())
        ok = gap <= closure_tol * scale
        if c.kind == LOSS_CONSTANT:
            ok = ok and drift <= slack
            max_drift = max(max_drift, drift)
        elif c.kind == LOSS_NONINCREASING:
            ok = ok and mono <= slack
            worst_mono = max(worst_mono, mono)
        ok = ok and float(vals.max()) <= c.alpha + tol * (1.0 + abs(c.alpha))
        for key, val in seg.diagnostics.items():
            if key.startswith("cond") and val > 1e8:
                warnings.append(f"segment {idx} ({seg.label}): {key} = {val:.3e}")
        reports.append(
            SegmentReport(
                idx, seg.kind, seg.label, c.kind, c.alpha, float(vals.max()), float(vals.min()), drift, mono, gap, bool(ok)
            )
        )
        ok_all = ok_all and ok
        max_loss = max(max_loss, float(vals.max()))
    alpha = path.contract.alpha
    ok_all = ok_all and max_loss <= alpha + tol * (1.0 + abs(alpha))
    checks.append(("chain continuity", _chain_ok(path)))
    ok_all = ok_all and all(ok for _, ok in checks)
    start_loss = loss_value(spec, path.start, data) if path.segments else float("nan")
    end_loss = loss_value(spec, path.end, data) if path.segments else float("nan")
    return PathCertificate(
        samples_per_segment=samples_per_segment,
        tol=tol,
        alpha=alpha,
        contract=path.contract.kind,
        max_loss_observed=float(max_loss),
        max_constant_drift=float(max_drift),
        worst_monotonicity_violation=float(worst_mono),
        rank_checks=checks,
        segments=reports,
        warnings=warnings,
        start_loss=start_loss,
        end_loss=end_loss,
        passed=bool(ok_all),
    )


def _chain_ok(path: ParamPath) -> bool:
    return all(
        path.segments[i].end.max_abs_diff(path.segments[i + 1].start) <= CHAIN_TOL
        for i in range(len(path.segments) - 1)
    )


def export_trace(path: ParamPath, spec: NetworkSpec, data: Dataset, num_points: int = 201) -> list[dict]:
    """Loss at uniformly spaced global ``t``: rows of (t, loss, segment, kind)."""
    if num_points < 2:
        raise InvalidInputError("num_points must be at least 2")
    rows = []
    for t in np.linspace(0.0, 1.0, num_points):
        i, lam = path.locate(t)
        seg = path.segments[i]
        rows.append(
            {
                "t": float(t),
                "loss": loss_value(spec, seg.at(lam), data),
                "segment": i,
                "kind": seg.kind if not isinstance(seg, ReversedSegment) else seg.inner.kind,
            }
        )
    return rows


def trace_to_csv(rows: list[dict], columns=("t", "loss", "segment", "kind")) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items() if k in columns})
    return buf.getvalue()


def path_to_json_text(path: ParamPath) -> str:
    return json.dumps(path.to_json(), indent=1)


def sample_params(path: ParamPath, num: int) -> list[Params]:
    return [path.evaluate(t) for t in np.linspace(0.0, 1.0, num)]


def max_over_path(path: ParamPath, fn: Callable[[Params], float], samples_per_segment: int = 64) -> float:
    lams = chebyshev_lambdas(samples_per_segment)
    return max(fn(seg.at(lam)) for seg in path.segments for lam in lams)
