import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cross_entropy_loop, forward_loop, square_loss_loop
from sublevel_paths.activations import elu, leaky_relu, relu
from sublevel_paths.errors import (
    DataRankError,
    InvalidEpsilonError,
    InvalidInputError,
    InvalidParamsError,
    InvalidTargetError,
    UnsupportedActivationError,
    WidthError,
)
from sublevel_paths.fixtures import instance
from sublevel_paths.network import (
    Dataset,
    NetworkSpec,
    Params,
    forward_to_layer,
    loss,
    loss_target,
    loss_value,
    require,
    validate_hypotheses,
)


def test_forward_base_case_and_zero_net():
    spec, data, p, _ = instance([3, 5, 2], 4, 0)
    assert np.array_equal(forward_to_layer(spec, p, data, 0), data.X)
    z = Params(tuple(np.zeros_like(W) for W in p.W), tuple(np.zeros_like(b) for b in p.b))
    assert not forward_to_layer(spec, z, data, 1).any()
    assert not forward_to_layer(spec, z, data, 2).any()


def test_forward_matches_loop_oracle():
    spec, data, p, _ = instance([3, 5, 2], 4, 1)
    ref = forward_loop(data.X.tolist(), [W.tolist() for W in p.W], [b.tolist() for b in p.b], "leaky_relu", 0.01)
    assert np.max(np.abs(forward_to_layer(spec, p, data, 2) - np.array(ref))) <= 1e-12


@given(st.integers(0, 10_000), st.sampled_from([leaky_relu(), relu(), elu()]))
def test_forward_oracle_property(seed, act):
    spec, data, p, _ = instance([2, 4, 3, 2], 3, seed, activation=act)
    for k in range(spec.L + 1):
        ref = forward_loop(data.X.tolist(), [W.tolist() for W in p.W], [b.tolist() for b in p.b], act.kind, act.param, k)
        assert np.max(np.abs(forward_to_layer(spec, p, data, k) - np.array(ref).reshape(data.N, -1))) <= 1e-12


def test_forward_errors():
    spec, data, p, _ = instance([3, 5, 2], 4, 0)
    with pytest.raises(InvalidInputError):
        forward_to_layer(spec, p, data, 3)
    with pytest.raises(InvalidParamsError):
        Params(p.W[:1], p.b[:1]).check(spec)


def test_loss_examples():
    spec = NetworkSpec((1, 2, 2), leaky_relu(), "cross_entropy")
    assert math.isclose(spec.loss_fn.value(np.zeros((1, 2)), np.array([[1.0, 0.0]])), math.log(2))
    sq = NetworkSpec((1, 2, 2), leaky_relu(), "square").loss_fn
    Y = np.ones((3, 2))
    assert sq.value(Y, Y) == 0.0


def test_loss_matches_scalar_oracles():
    for kind, oracle in (("square", square_loss_loop), ("cross_entropy", cross_entropy_loop)):
        spec, data, p, _ = instance([3, 6, 3], 5, 2, loss=kind)
        F = forward_to_layer(spec, p, data, spec.L)
        assert abs(loss_value(spec, p, data) - oracle(F.tolist(), data.Y.tolist())) <= 1e-10


def test_cross_entropy_rejects_soft_targets():
    spec = NetworkSpec((2, 3, 2), leaky_relu(), "cross_entropy")
    with pytest.raises(InvalidTargetError):
        spec.loss_fn.value(np.zeros((1, 2)), np.array([[0.5, 0.5]]))


def test_loss_value_type():
    spec, data, p, _ = instance([3, 5, 2], 4, 0)
    lv = loss(spec, p, data)
    assert lv.lower_bound_p_star == 0.0 and lv.value >= 0.0


def test_loss_target_square_and_ce():
    spec, data, _, _ = instance([3, 5, 2], 4, 0)
    assert np.array_equal(loss_target(spec, data, 0.1), data.Y)
    spec, data, _, _ = instance([3, 5, 2], 4, 0, loss="cross_entropy")
    Yh = loss_target(spec, data, 0.01)
    t = math.log(1 / math.expm1(0.01))
    assert np.allclose(Yh, t * data.Y)
    assert spec.loss_fn.value(Yh, data.Y) <= 0.01
    Yh = loss_target(spec, data, math.log(2))
    assert np.allclose(Yh, 0.0, atol=1e-9)
    with pytest.raises(InvalidEpsilonError):
        loss_target(spec, data, 0.0)


@given(st.integers(0, 10_000), st.sampled_from(["square", "cross_entropy"]))
def test_convexity_witness(seed, kind):
    spec, data, _, _ = instance([2, 3, 3], 4, seed, loss=kind)
    rng = np.random.default_rng(seed)
    F, G = rng.standard_normal((2, 4, 3)) * 3
    phi = spec.loss_fn.value
    assert phi((F + G) / 2, data.Y) <= (phi(F, data.Y) + phi(G, data.Y)) / 2 + 1e-9
    assert phi(F, data.Y) >= 0


def test_dataset_distinct_rows():
    with pytest.raises(InvalidInputError):
        Dataset(np.array([[1.0, 2.0], [1.0, 2.0]]), np.zeros((2, 1)))


def test_json_round_trips():
    spec, data, p, _ = instance([3, 5, 2], 4, 0)
    assert NetworkSpec.from_json(spec.to_json()) == spec
    assert Params.from_json(p.to_json()).equals(p)
    d2 = Dataset.from_json(data.to_json())
    assert np.array_equal(d2.X, data.X) and np.array_equal(d2.Y, data.Y)


def _data(N, d, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((N, d)), rng.standard_normal((N, 2)))


def test_validate_examples():
    spec = NetworkSpec((3, 8, 4, 2), leaky_relu())
    assert validate_hypotheses(spec, _data(3, 3), "lin-data").passed
    rep = validate_hypotheses(spec, _data(10, 3), "no-bad-valley", k=1)
    assert not rep.passed and rep.first_failure == "n_k >= N"
    spec4 = NetworkSpec((2, 16, 16, 3), relu())
    rng = np.random.default_rng(0)
    assert validate_hypotheses(spec4, Dataset(rng.standard_normal((8, 2)), rng.standard_normal((8, 3))), "all-wide-connect").passed


def test_require_raises_named_errors():
    spec = NetworkSpec((3, 4, 4, 2), leaky_relu())
    with pytest.raises(WidthError) as exc:
        require(spec, _data(3, 3), "lin-data")
    assert "n_1 > ... > n_L" in exc.value.clause
    with pytest.raises(DataRankError):
        require(NetworkSpec((2, 8, 4, 2), leaky_relu()), _data(3, 2), "lin-data")
    with pytest.raises(UnsupportedActivationError):
        require(NetworkSpec((3, 8, 4, 2), relu()), _data(3, 3), "lin-data")
