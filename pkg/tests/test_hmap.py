import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import forward_loop
from sublevel_paths.activations import leaky_relu, relu
from sublevel_paths.constructions import map_h, retarget_first_layer_path
from sublevel_paths.constructions.hmap import canonicalize_segment
from sublevel_paths.errors import DataRankError, UnsupportedActivationError, WidthError
from sublevel_paths.fixtures import instance
from sublevel_paths.network import Dataset, NetworkSpec, Params, all_layer_outputs, forward_to_layer, loss_target, loss_value
from sublevel_paths.pathkit import certify, single


def _uppers(p, k):
    return [(p.W[j], p.b[j]) for j in range(1, k)]


def test_stacked_identity_uppers_reproduce_output():
    spec, data, p, _ = instance([4, 6, 4, 2], 4, 0)
    W2 = np.vstack([np.eye(4), np.zeros((2, 4))])
    W3 = np.vstack([np.eye(2), np.zeros((2, 2))])
    q = Params((p.W[0], W2, W3), p.b)
    A = forward_to_layer(spec, p, data, 3)
    W1, b1 = map_h(spec, data, _uppers(q, 3), A, 3)
    got = forward_to_layer(spec, q.replace(0, W=W1, b=b1), data, 3)
    assert np.max(np.abs(got - A)) <= 1e-8


def test_round_trip_current_output():
    spec, data, p, _ = instance([4, 6, 4, 2], 4, 1)
    for k in (2, 3):
        A = forward_to_layer(spec, p, data, k)
        W1, b1 = map_h(spec, data, _uppers(p, k), A, k)
        assert np.max(np.abs(forward_to_layer(spec, p.replace(0, W=W1, b=b1), data, k) - A)) <= 1e-8


def test_scalar_hand_solution():
    # X = [1], W_2 = [1; 0], b_2 = 0, A = 5. By hand: B_1 = [5, 0], [X, 1]^+ = [1/2; 1/2],
    # so W_1 = [2.5, 0] and b_1 = [2.5, 0].
    spec = NetworkSpec((1, 2, 1), leaky_relu())
    data = Dataset(np.array([[1.0]]), np.array([[0.0]]))
    W1, b1 = map_h(spec, data, [(np.array([[1.0], [0.0]]), np.array([0.0]))], np.array([[5.0]]), 2)
    assert np.allclose(W1, [[2.5, 0.0]], atol=1e-12) and np.allclose(b1, [2.5, 0.0], atol=1e-12)
    F = forward_loop([[1.0]], [W1.tolist(), [[1.0], [0.0]]], [b1.tolist(), [0.0]], "leaky_relu", 0.01)
    assert abs(F[0][0] - 5.0) <= 1e-10


@given(st.integers(0, 10_000), st.integers(2, 4))
def test_round_trip_property(seed, L):
    widths = [5, 9, 7, 5, 3][: L + 1]
    spec, data, p, q = instance(widths, 5, seed)
    k = int(np.random.default_rng(seed).integers(2, L + 1))
    A = all_layer_outputs(spec, q, data.X)[k]
    W1, b1 = map_h(spec, data, _uppers(p, k), A, k)
    got = forward_to_layer(spec, p.replace(0, W=W1, b=b1), data, k)
    assert np.linalg.norm(got - A) <= 1e-7 * (1 + np.linalg.norm(A))


def test_map_h_errors():
    spec, data, p, _ = instance([4, 6, 4, 2], 4, 0)
    A = forward_to_layer(spec, p, data, 2)
    with pytest.raises(UnsupportedActivationError):
        map_h(NetworkSpec((4, 6, 4, 2), relu()), data, _uppers(p, 2), A, 2)
    rng = np.random.default_rng(0)
    wide = Dataset(rng.standard_normal((6, 4)), rng.standard_normal((6, 2)))
    with pytest.raises(DataRankError):
        map_h(spec, wide, _uppers(p, 2), np.zeros((6, 4)), 2)
    bad = NetworkSpec((4, 4, 4, 2), leaky_relu())
    with pytest.raises(WidthError):
        map_h(bad, data, [(np.eye(4), np.zeros(4))], A, 2)
    with pytest.raises(WidthError):
        map_h(spec, data, [(np.zeros((6, 4)), np.zeros(4))], A, 2)


def _canonical(spec, data, p, k):
    seg = canonicalize_segment(spec, data, p, k)
    return p if seg is None else seg.end


def test_canonicalization_keeps_output_and_loss():
    spec, data, p, _ = instance([4, 6, 4, 2], 4, 2)
    seg = canonicalize_segment(spec, data, p, 3)
    F = forward_to_layer(spec, p, data, 3)
    for lam in np.linspace(0, 1, 33):
        assert np.max(np.abs(forward_to_layer(spec, seg.at(lam), data, 3) - F)) <= 1e-9
    assert certify(single(seg), spec, data).passed
    assert seg.closure_gap() <= 1e-10


def test_identity_retarget_is_flat():
    spec, data, p, _ = instance([4, 6, 4, 2], 4, 3)
    c = _canonical(spec, data, p, 2)
    path = retarget_first_layer_path(spec, data, c, 2, forward_to_layer(spec, c, data, 2))
    cert = certify(path, spec, data)
    assert cert.passed and cert.max_constant_drift <= 1e-8


@pytest.mark.parametrize("loss", ["square", "cross_entropy"])
def test_output_retarget_to_target(loss):
    spec, data, p, _ = instance([4, 6, 4, 2], 4, 4, loss=loss)
    c = _canonical(spec, data, p, 3)
    eps = 0.05
    Yhat = loss_target(spec, data, eps)
    path = retarget_first_layer_path(spec, data, c, 3, Yhat)
    cert = certify(path, spec, data)
    start = loss_value(spec, c, data)
    assert cert.passed
    assert cert.end_loss <= eps + 1e-9
    assert cert.max_loss_observed <= max(start, eps) + 1e-6 * (1 + start)
    F0 = forward_to_layer(spec, c, data, 3)
    mid = forward_to_layer(spec, path.evaluate(0.5), data, 3)
    assert np.max(np.abs(mid - (F0 + Yhat) / 2)) <= 1e-8
