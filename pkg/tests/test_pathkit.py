import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sublevel_paths.constructions import connect_lin_data
from sublevel_paths.errors import DiscontinuityError, InvalidInputError
from sublevel_paths.fixtures import instance
from sublevel_paths.network import Params, loss_value
from sublevel_paths.pathkit import (
    Contract,
    FrozenSegment,
    LinearSegment,
    ParamPath,
    bounded,
    certify,
    chebyshev_lambdas,
    concat,
    constant,
    evaluate,
    export_trace,
    frozen_path,
    nonincreasing,
    reverse,
    single,
    trace_to_csv,
)


@pytest.fixture
def setup():
    spec, data, p, q = instance([3, 5, 2], 4, 0)
    r = Params.random(spec, np.random.default_rng(99))
    return spec, data, p, q, r


def _lin(spec, data, a, b):
    return single(LinearSegment(a, b, bounded(max(loss_value(spec, a, data), loss_value(spec, b, data)) * 10), ""))


def test_frozen_evaluate(setup):
    spec, data, p, _, _ = setup
    path = frozen_path(p, spec, data)
    for t in (0.0, 0.3, 1.0):
        assert evaluate(path, t).equals(p)


def test_two_linear_segments_midpoint(setup):
    spec, data, p, q, r = setup
    path = concat(_lin(spec, data, p, q), _lin(spec, data, q, r))
    assert path.evaluate(0.5).max_abs_diff(q) <= 1e-12
    assert path.evaluate(0.0).equals(p) and path.evaluate(1.0).equals(r)


def test_empty_path_rejected():
    with pytest.raises(InvalidInputError):
        ParamPath([], constant(0.0)).evaluate(0.5)


def test_concat_with_reverse_is_loop(setup):
    spec, data, p, q, _ = setup
    a = _lin(spec, data, p, q)
    loop = concat(a, reverse(a, spec, data))
    assert loop.start.equals(loop.end)


def test_contract_algebra():
    assert constant(1.0).merge(constant(1.0)).kind == "loss_constant"
    assert constant(1.0).merge(nonincreasing(1.0)).kind == "loss_nonincreasing"
    m = constant(1.0).merge(bounded(3.0))
    assert m.kind == "loss_bounded" and m.alpha == 3.0


@given(
    st.lists(
        st.tuples(st.sampled_from(["loss_constant", "loss_nonincreasing", "loss_bounded"]), st.floats(0, 10)),
        min_size=1,
        max_size=6,
    )
)
def test_contract_merge_bound_is_max(items):
    cs = [Contract(k, a) for k, a in items]
    m = cs[0]
    for c in cs[1:]:
        m = m.merge(c)
    assert m.alpha == max(a for _, a in items)
    kinds = {k for k, _ in items}
    if kinds == {"loss_constant"}:
        assert m.kind == "loss_constant"
    elif "loss_bounded" in kinds:
        assert m.kind == "loss_bounded"


def test_concat_gap_reported(setup):
    spec, data, p, q, _ = setup
    a = _lin(spec, data, p, q)
    shifted = Params(tuple(W + 0.1 for W in q.W), q.b)
    b = _lin(spec, data, shifted, p)
    with pytest.raises(DiscontinuityError) as exc:
        concat(a, b)
    assert abs(exc.value.gap - 0.1) < 1e-12


def test_certify_frozen_zero_drift(setup):
    spec, data, p, _, _ = setup
    cert = certify(frozen_path(p, spec, data), spec, data)
    assert cert.passed and cert.max_constant_drift == 0.0


def test_certify_negative_control(setup):
    spec, data, p, q, _ = setup
    seg = LinearSegment(p, q, constant(loss_value(spec, p, data)), "mislabelled")
    cert = certify(single(seg), spec, data)
    assert not cert.passed and cert.max_constant_drift > 1e-6


def test_certify_lin_data_pipeline():
    spec, data, p, q = instance([4, 6, 4, 2], 4, 3)
    cert = certify(connect_lin_data(spec, data, p, q), spec, data, 64, 1e-6)
    assert cert.passed


def test_certify_is_deterministic(setup):
    spec, data, p, q, _ = setup
    path = _lin(spec, data, p, q)
    assert certify(path, spec, data).to_json() == certify(path, spec, data).to_json()


def test_certify_rejects_few_samples(setup):
    spec, data, p, _, _ = setup
    with pytest.raises(InvalidInputError):
        certify(frozen_path(p, spec, data), spec, data, samples_per_segment=8)


def test_export_trace(setup):
    spec, data, p, q, _ = setup
    path = _lin(spec, data, p, q)
    rows = export_trace(path, spec, data, 2)
    assert [r["loss"] for r in rows] == [loss_value(spec, p, data), loss_value(spec, q, data)]
    assert len(export_trace(path, spec, data, 17)) == 17
    assert trace_to_csv(rows).splitlines()[0] == "t,loss,segment,kind"
    flat = export_trace(frozen_path(p, spec, data), spec, data, 11)
    losses = [r["loss"] for r in flat]
    assert max(losses) - min(losses) <= 1e-6


def test_chebyshev_lambdas():
    lams = chebyshev_lambdas(16)
    assert lams[0] == 0.0 and lams[-1] == 1.0 and len(lams) == 18
    assert np.all(np.diff(lams) > 0)


def test_json_round_trip_with_closed_form_segments():
    spec, data, p, q = instance([4, 6, 4, 2], 4, 1)
    path = connect_lin_data(spec, data, p, q)
    back = ParamPath.from_json(json.loads(json.dumps(path.to_json())), spec)
    assert back.kinds() == path.kinds()
    for t in np.linspace(0, 1, 13):
        assert back.evaluate(t).max_abs_diff(path.evaluate(t)) <= 1e-12


def test_frozen_segment_contract(setup):
    spec, data, p, _, _ = setup
    seg = FrozenSegment(p, 1.0)
    assert seg.at(0.4).equals(p) and seg.closure_gap() == 0.0
