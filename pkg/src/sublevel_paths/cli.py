"""Command-line entry point: connect, descend, ray, barrier and verify.

Exit codes: 0 ok, 1 certificate or verify failure, 2 hypothesis or input
error, 3 construction failure, 4 training failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import constructions as C
from .activations import parse_activation
from .errors import ConstructionError, HypothesisError, InvalidInputError, TrainingError
from .fixtures import barrier_fixture
from .network import Dataset, NetworkSpec, Params, loss_value, theorem_tag
from .pathkit import certify, export_trace, trace_to_csv
from .trainer import DEFAULT_LR, DEFAULT_MAX_ITER, DEFAULT_TARGET, train
from .verify import report, run_suites

EXIT_OK, EXIT_FAILED, EXIT_HYPOTHESIS, EXIT_CONSTRUCTION, EXIT_TRAINING = 0, 1, 2, 3, 4


# ---------------------------------------------------------------------------
# file handling


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write to a temp file in the target directory, then rename over the target."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc


def load_spec(path: str) -> NetworkSpec:
    obj = _read_json(path)
    act = obj.get("activation", "leaky_relu")
    if isinstance(act, str):
        obj = dict(obj, activation=parse_activation(act).to_json())
    return NetworkSpec.from_json(obj)


def load_data(path: str) -> Dataset:
    return Dataset.from_json(_read_json(path))


def load_params(path: str, spec: NetworkSpec) -> Params:
    try:
        return Params.from_json(_read_json(path)).check(spec)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"malformed params file {path}: {exc}") from exc


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _emit(args, spec, data, path, cert, trace_rows=None) -> None:
    if args.out_path:
        write_atomic(args.out_path, dump_json({"spec": spec.to_json(), "path": path.to_json()}))
    if args.out_cert:
        write_atomic(args.out_cert, dump_json(cert.to_json()))
    if args.out_trace:
        rows = trace_rows if trace_rows is not None else export_trace(path, spec, data)
        write_atomic(args.out_trace, trace_to_csv(rows))


def _summary(cert) -> str:
    return (
        f"certificate {'passed' if cert.passed else 'FAILED'}: contract {cert.contract} "
        f"alpha {cert.alpha:.6g}, max sampled loss {cert.max_loss_observed:.6g}, "
        f"start {cert.start_loss:.6g}, end {cert.end_loss:.6g}"
    )


# ---------------------------------------------------------------------------
# commands


def _connect_path(theorem: str, spec, data, theta, theta_prime, args):
    if theorem == "lin-data":
        return C.connect_lin_data(spec, data, theta, theta_prime, seed=args.seed)
    if theorem == "wide-first":
        return C.connect_wide_first(spec, data, theta, theta_prime, budget=args.budget, seed=args.seed)
    if theorem in ("all-wide-connect", "all-wide-descend"):
        return C.connect_all_wide(spec, data, theta, theta_prime, budget=args.budget, seed=args.seed)
    raise InvalidInputError(f"connect does not support theorem {theorem!r}")


def cmd_connect(args) -> int:
    spec, data = load_spec(args.spec), load_data(args.data)
    theta, theta_prime = load_params(args.theta, spec), load_params(args.theta_prime, spec)
    theorem = theorem_tag(args.theorem or "lin-data")
    path = _connect_path(theorem, spec, data, theta, theta_prime, args)
    cert = certify(path, spec, data, args.samples, args.tol)
    _emit(args, spec, data, path, cert)
    print(_summary(cert))
    return EXIT_OK if cert.passed else EXIT_FAILED


def cmd_descend(args) -> int:
    spec, data = load_spec(args.spec), load_data(args.data)
    theta = load_params(args.theta, spec)
    theorem = theorem_tag(args.theorem or "no-bad-valley")
    if theorem == "no-bad-valley":
        path = C.descend_no_bad_valley(spec, data, theta, args.k, args.epsilon, args.budget, args.seed)
    elif theorem in ("all-wide-descend", "all-wide-connect"):
        path = C.descend_all_wide(spec, data, theta, args.epsilon, args.budget, args.seed)
    else:
        raise InvalidInputError(f"descend does not support theorem {theorem!r}")
    cert = certify(path, spec, data, args.samples, args.tol)
    _emit(args, spec, data, path, cert)
    final = loss_value(spec, path.end, data)
    print(_summary(cert))
    print(f"terminal loss {final:.6g} (epsilon {args.epsilon:g})")
    return EXIT_OK if cert.passed and final <= args.epsilon else EXIT_FAILED


def cmd_ray(args) -> int:
    spec, data = load_spec(args.spec), load_data(args.data)
    theta = load_params(args.theta, spec)
    theorem = theorem_tag(args.theorem or "lin-data")
    if theorem == "lin-data":
        path = C.unbounded_ray_lin_data(spec, data, theta, args.scale_max, seed=args.seed)
    elif theorem == "wide-first":
        path = C.unbounded_ray_wide_first(spec, data, theta, args.scale_max)
    else:
        raise InvalidInputError(f"ray does not support theorem {theorem!r}")
    cert = certify(path, spec, data, args.samples, args.tol)
    _emit(args, spec, data, path, cert)
    growth = path.segments[-1].diagnostics.get("growth", 1.0)
    print(_summary(cert))
    print(f"parameter norm {theta.norm():.6g} -> {path.end.norm():.6g}; scaled block grew by {growth:.6g}")
    return EXIT_OK if cert.passed else EXIT_FAILED


def cmd_barrier(args) -> int:
    if args.spec and args.data:
        spec, data = load_spec(args.spec), load_data(args.data)
    else:
        spec, data = barrier_fixture(args.seed)
    if spec.loss_kind != "square":
        raise InvalidInputError("barrier needs square loss")
    N = data.N
    hidden = spec.widths[1 : spec.L]
    if spec.widths[1] >= 2 * N:
        theorem = "wide-first"
    elif min(hidden) >= 2 * N:
        theorem = "all-wide-connect"
    else:
        raise HypothesisError("n_1 >= 2N", f"barrier needs n_1 >= 2N or every hidden width >= 2N, got {list(spec.widths)}")
    init_a = Params.random(spec, np.random.default_rng(args.seed + 1))
    init_b = init_a if args.same_init else Params.random(spec, np.random.default_rng(args.seed + 2))
    runs = [train(spec, data, p, args.lr, args.max_iter, args.train_target) for p in (init_a, init_b)]
    theta, theta_prime = runs[0].params, runs[1].params
    path = _connect_path(theorem, spec, data, theta, theta_prime, args)
    cert = certify(path, spec, data, args.samples, args.tol)
    ts = np.linspace(0.0, 1.0, args.points)
    rows = []
    for t in ts:
        lin = loss_value(spec, theta.lerp(theta_prime, float(t)), data)
        rows.append({"t": float(t), "loss_linear": lin, "loss_constructed": loss_value(spec, path.evaluate(float(t)), data)})
    if args.out_path:
        write_atomic(args.out_path, dump_json({"spec": spec.to_json(), "path": path.to_json()}))
    if args.out_cert:
        write_atomic(args.out_cert, dump_json(cert.to_json()))
    if args.out_trace:
        write_atomic(args.out_trace, trace_to_csv(rows, ("t", "loss_linear", "loss_constructed")))
    print(f"trained endpoints: loss {runs[0].loss:.3e} ({runs[0].iterations} steps), {runs[1].loss:.3e} ({runs[1].iterations} steps)")
    print(f"max loss along linear interpolation: {max(r['loss_linear'] for r in rows):.6g}")
    print(f"max loss along constructed path:     {cert.max_loss_observed:.6g}")
    print(_summary(cert))
    return EXIT_OK if cert.passed else EXIT_FAILED


def cmd_verify(args) -> int:
    results = run_suites(args.seeds, args.negative_control)
    rep = report(results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.seconds:.2f}s){'' if r.passed else ': ' + '; '.join(r.failures[:3])}")
    if args.out_report:
        write_atomic(args.out_report, dump_json(rep))
    return EXIT_OK if rep["passed"] else EXIT_FAILED


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, needs_theta: bool = True, needs_prime: bool = False) -> None:
    p.add_argument("--spec", required=needs_theta, help="network spec JSON (widths, activation, loss)")
    p.add_argument("--data", required=needs_theta, help="dataset JSON with X and Y")
    if needs_theta:
        p.add_argument("--theta", required=True, help="parameter JSON")
    if needs_prime:
        p.add_argument("--theta-prime", required=True, help="second parameter JSON")
    p.add_argument("--theorem", default=None, help="lin-data | no-bad-valley | wide-first | all-wide (or 1-4)")
    p.add_argument("--tol", type=_positive, default=1e-6)
    p.add_argument("--samples", type=_samples, default=64, help="certificate samples per segment (>= 16)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=256, help="bias candidates per column")
    p.add_argument("--out-path")
    p.add_argument("--out-cert")
    p.add_argument("--out-trace")


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _samples(text: str) -> int:
    v = int(text)
    if v < 16:
        raise argparse.ArgumentTypeError("must be at least 16")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sublevel-paths", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("connect", help="build and certify a path between two parameter points")
    _common(p, needs_prime=True)
    p.set_defaults(func=cmd_connect)

    p = sub.add_parser("descend", help="build and certify a descent path to loss <= epsilon")
    _common(p)
    p.add_argument("--epsilon", type=_positive, default=1e-3)
    p.add_argument("--k", type=int, default=None, help="wide layer index (default: first valid)")
    p.set_defaults(func=cmd_descend)

    p = sub.add_parser("ray", help="constant-loss path with growing parameter norm")
    _common(p)
    p.add_argument("--scale-max", type=float, default=1e3)
    p.set_defaults(func=cmd_ray)

    p = sub.add_parser("barrier", help="connect two trained minima and compare with linear interpolation")
    _common(p, needs_theta=False)
    p.add_argument("--same-init", action="store_true", help="train both endpoints from one init")
    p.add_argument("--lr", type=_positive, default=DEFAULT_LR)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--train-target", type=_positive, default=DEFAULT_TARGET)
    p.add_argument("--points", type=int, default=201, help="rows in the trace CSV")
    p.set_defaults(func=cmd_barrier)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--negative-control", action="store_true", help="add a corrupted path that must be rejected")
    p.add_argument("--out-report")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HypothesisError as exc:
        print(f"hypothesis failure: {exc.clause}: {exc.detail}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ConstructionError as exc:
        print(f"construction failure: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    except TrainingError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
