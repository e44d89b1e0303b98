from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exact_det
from sublevel_paths.activations import apply, elu, leaky_relu, linear, relu
from sublevel_paths.constructions import (
    bias_rank_boost,
    distinct_rows_nudge,
    equalize_layer,
    equalize_path,
    make_layer_output_full_rank,
    rewire_redundant_columns,
)
from sublevel_paths.constructions.rewire import bias_candidates
from sublevel_paths.errors import (
    HypothesisError,
    NothingToRewireError,
    SearchFailureError,
    UnsupportedActivationError,
    WidthError,
)
from sublevel_paths.fixtures import instance, rank_deficient
from sublevel_paths.linalg import numerical_rank
from sublevel_paths.network import NetworkSpec, Params, all_layer_outputs, loss_value
from sublevel_paths.pathkit import certify

LAMS = np.linspace(0, 1, 64)


def test_rewire_hand_example():
    c = rewire_redundant_columns(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
    assert c.basis == [0] and np.allclose(c.E, [[2.0]])
    assert np.allclose(c.end, [[11.0], [0.0]])
    for lam in LAMS:
        assert np.allclose(np.array([[1.0, 2.0]]) @ c.at(lam), [[11.0]], atol=1e-12)
    assert np.array_equal(c.at(0.0), [[3.0], [4.0]])


def test_rewire_full_rank_raises():
    with pytest.raises(NothingToRewireError):
        rewire_redundant_columns(np.eye(3), np.ones((3, 2)))


@settings(max_examples=50)
@given(st.integers(0, 10_000))
def test_rewire_invariance_and_replacement(seed):
    rng = np.random.default_rng(seed)
    N, n = int(rng.integers(2, 6)), int(rng.integers(3, 9))
    r = int(rng.integers(0, min(N, n)))
    F = rank_deficient((N, n), r, rng)
    W = rng.standard_normal((n, 3))
    c = rewire_redundant_columns(F, W)
    Z = F @ W
    assert max(np.linalg.norm(F @ c.at(lam) - Z) for lam in LAMS) <= 1e-9 * (1 + np.linalg.norm(Z))
    G = F.copy()
    G[:, c.redundant] = rng.standard_normal((N, len(c.redundant)))
    assert np.linalg.norm(G @ c.end - F @ c.end) <= 1e-9 * (1 + np.linalg.norm(Z))


def test_bias_candidate_order():
    v = np.array([0.0, 1.0, 3.0])
    cands = bias_candidates(0.7, v, 256, np.random.default_rng(0))
    assert len(cands) == 256
    assert cands[0] == 0.7 and cands[1] == 2.0**-4 and cands[2] == -(2.0**-4)
    assert np.array_equal(cands[27:29], [-2.0, -0.5])
    assert len(bias_candidates(0.0, v, 5, np.random.default_rng(0))) == 5


def _collapsed(widths, N, seed, groups):
    """Hidden layer 1 whose columns repeat in ``groups`` distinct copies with equal biases."""
    spec, data, p, _ = instance(widths, N, seed)
    n = widths[1]
    W = p.W[0][:, [j % groups for j in range(n)]]
    b = np.full(n, 0.1)
    return spec, data, p.replace(0, W=W, b=b)


def _bias_moves(path):
    return sum(1 for s in path.segments[1:] if s.label.startswith("bias boost"))


def test_boost_already_full_rank():
    spec, data, p, _ = instance([3, 6, 2], 4, 0)
    path, wit = bias_rank_boost(spec, data, p, 1)
    assert path.kinds() == ["frozen"] and wit.rank_report.numerical_rank == 4


def test_boost_two_samples_one_move():
    spec, data, p = _collapsed([2, 2, 1], 2, 1, 1)
    assert numerical_rank(all_layer_outputs(spec, p, data.X)[1]).numerical_rank == 1
    path, wit = bias_rank_boost(spec, data, p, 1)
    assert _bias_moves(path) == 1
    F = all_layer_outputs(spec, wit.params, data.X)[1]
    assert exact_det([[Fraction(x) for x in row] for row in F.tolist()]) != 0
    assert wit.rank_report.min_singular_value > 1e-6


def test_boost_rank_two_to_four():
    spec, data, p = _collapsed([3, 4, 2], 4, 2, 2)
    assert numerical_rank(all_layer_outputs(spec, p, data.X)[1]).numerical_rank == 2
    path, wit = bias_rank_boost(spec, data, p, 1)
    assert _bias_moves(path) == 2 and wit.rank_report.numerical_rank == 4
    cert = certify(path, spec, data)
    assert cert.passed and cert.max_constant_drift <= 1e-7


def test_boost_budget_one_fails():
    spec, data, p = _collapsed([3, 4, 2], 4, 2, 2)
    with pytest.raises(SearchFailureError) as exc:
        bias_rank_boost(spec, data, p, 1, search_budget=1)
    assert exc.value.achieved_rank == 2 and exc.value.target_rank == 4


def test_boost_width_and_activation_errors():
    spec, data, p, _ = instance([3, 3, 2], 4, 0)
    with pytest.raises(WidthError):
        bias_rank_boost(spec, data, p, 1)
    spec, data, p, _ = instance([3, 6, 2], 4, 0, activation=linear())
    with pytest.raises(UnsupportedActivationError):
        bias_rank_boost(spec, data, p, 1)


def test_nudge_generic_is_frozen():
    spec, data, p, _ = instance([3, 6, 4, 2], 5, 3)
    path, end = distinct_rows_nudge(spec, data, p, 2)
    assert path.kinds() == ["frozen"] and end.equals(p)


def test_nudge_zero_first_layer():
    spec, data, p, _ = instance([3, 6, 4, 2], 5, 3)
    p = Params((np.zeros((3, 6)),) + p.W[1:], (np.zeros(6),) + p.b[1:])
    path, end = distinct_rows_nudge(spec, data, p, 2, seed=1)
    assert not end.equals(p)
    F1 = all_layer_outputs(spec, end, data.X)[1]
    assert len({tuple(r) for r in F1}) == data.N
    assert certify(path, spec, data).passed


@pytest.mark.parametrize("act", [leaky_relu(), relu(), elu()])
def test_layer_repair_duplicated_columns(act):
    rng = np.random.default_rng(4)
    N, n = 4, 8
    X = rng.standard_normal((N, 3))
    W = np.repeat(rng.standard_normal((3, 2)), 4, axis=1)
    b = np.zeros(n)
    V = rng.standard_normal((n, 2))
    curve = make_layer_output_full_rank(X, W, b, V, act, seed=4)
    Z0 = apply(act, X @ W) @ V
    for lam in LAMS:
        Wl, bl, Vl = curve.at(lam)
        assert np.linalg.norm(apply(act, X @ Wl + bl) @ Vl - Z0) <= 1e-9 * (1 + np.linalg.norm(Z0))
    We, be, _ = curve.end
    assert numerical_rank(apply(act, X @ We + be)).numerical_rank == N


def test_layer_repair_single_sample():
    curve = make_layer_output_full_rank(np.array([[1.0]]), np.array([[0.0, 0.0]]), np.zeros(2), np.ones((2, 1)), relu())
    W, b, _ = curve.end
    assert np.any(apply(relu(), np.array([[1.0]]) @ W + b) != 0)


def test_layer_repair_generic_is_frozen():
    rng = np.random.default_rng(5)
    X, W = rng.standard_normal((3, 2)), rng.standard_normal((2, 6))
    curve = make_layer_output_full_rank(X, W, rng.standard_normal(6), rng.standard_normal((6, 1)), leaky_relu())
    assert curve.pieces == 0


def test_layer_repair_errors():
    X = np.array([[1.0], [2.0], [3.0]])
    with pytest.raises(WidthError):
        make_layer_output_full_rank(X, np.ones((1, 2)), np.zeros(2), np.ones((2, 1)), relu())
    with pytest.raises(HypothesisError):
        make_layer_output_full_rank(np.array([[1.0], [1.0]]), np.ones((1, 3)), np.zeros(3), np.ones((3, 1)), relu())


def test_equalize_hand_trace():
    act = leaky_relu()
    curve = equalize_layer([[1.0]], [[1.0, 2.0]], [[1.0], [1.0]], [[3.0, -1.0]], act)
    expected = [
        ([[1, 2]], [[1], [1]]),
        ([[1, 2]], [[3], [0]]),
        ([[1, 3]], [[3], [0]]),
        ([[1, 3]], [[0], [1]]),
        ([[3, 3]], [[0], [1]]),
        ([[3, 3]], [[1], [0]]),
        ([[3, -1]], [[1], [0]]),
    ]
    assert len(curve.states) == len(expected)
    for (W, V), (We, Ve) in zip(curve.states, expected):
        assert np.allclose(W, We, atol=1e-12) and np.allclose(V, Ve, atol=1e-12)
    for lam in LAMS:
        W, V = curve.at(lam)
        assert abs((apply(act, np.array([[1.0]]) @ W) @ V)[0, 0] - 3.0) <= 1e-12
    assert np.array_equal(curve.end[0], [[3.0, -1.0]])


def test_equalize_identity():
    W = np.array([[1.0, 2.0]])
    assert equalize_layer([[1.0]], W, [[1.0], [1.0]], W, relu()).pieces == 0


@pytest.mark.parametrize("seed", range(3))
def test_equalize_seeded(seed):
    rng = np.random.default_rng(seed)
    act = leaky_relu()
    X = rng.standard_normal((3, 4))
    W, Wp, V = rng.standard_normal((4, 8)), rng.standard_normal((4, 8)), rng.standard_normal((8, 2))
    curve = equalize_layer(X, W, V, Wp, act)
    Z0 = apply(act, X @ W) @ V
    drift = max(np.linalg.norm(apply(act, X @ curve.at(l)[0]) @ curve.at(l)[1] - Z0) for l in np.linspace(0, 1, 128))
    assert drift <= 1e-8
    assert np.array_equal(curve.end[0], Wp)


def test_equalize_errors():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((3, 2))
    with pytest.raises(WidthError):
        equalize_layer(X, np.ones((2, 5)), np.ones((5, 1)), np.zeros((2, 5)), relu())
    W = np.repeat(rng.standard_normal((2, 1)), 6, axis=1)
    with pytest.raises(HypothesisError):
        equalize_layer(X, W, np.ones((6, 1)), rng.standard_normal((2, 6)), leaky_relu())


def test_wide_layer_path_loss_constant():
    spec = NetworkSpec((3, 8, 2), leaky_relu())
    _, data, p, q = instance([3, 8, 2], 4, 9)
    path, end = equalize_path(spec, data, p, q, 1)
    assert np.array_equal(end.W[0], q.W[0]) and np.array_equal(end.b[0], q.b[0])
    cert = certify(path, spec, data)
    assert cert.passed
    assert abs(loss_value(spec, end, data) - loss_value(spec, p, data)) <= 1e-8
