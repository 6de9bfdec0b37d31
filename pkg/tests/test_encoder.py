import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from n2n import tensor as T
from n2n.encoder import (EncoderParams, WhitenConfig, batch_norm, mean_aggregate, mlp_forward,
                         newton_whiten, schur_newton_whiten)
from n2n.graph import Graph
from n2n.taps import PositiveTable, build_positive_table, full_neighborhood_table
from n2n.tensor import DimensionError, Tape, covariance, eig_sym


def exact_zca(h, eps):
    hc = h - h.mean(axis=0)
    w, u = eig_sym(covariance(h, eps))
    return hc @ (u / np.sqrt(w)) @ u.T


def _whiten(h, iters=10, eps=1e-5, history=None):
    return schur_newton_whiten(Tape().constant(h), WhitenConfig(iters, eps), history).value


def test_matches_exact_zca_on_random_batches():
    rng = np.random.default_rng(11)
    for _ in range(20):
        h = rng.normal(size=(64, 8))
        diff = np.abs(_whiten(h) - exact_zca(h, 1e-5)).max()
        assert diff < 1e-3


def test_residual_strictly_decreases():
    h = np.random.default_rng(3).normal(size=(64, 8)) @ np.diag([1, 2, 3, 4, 5, 6, 7, 8.0])
    hist = []
    _whiten(h, iters=10, history=hist)
    assert len(hist) == 11
    assert np.all(np.diff(hist) < 0)


def test_white_input_is_fixed_point():
    rng = np.random.default_rng(4)
    q, _ = np.linalg.qr(rng.normal(size=(100, 5)))
    q = q - q.mean(axis=0)
    q, _ = np.linalg.qr(q)
    h = q * np.sqrt(100)
    np.testing.assert_allclose(h.T @ h / 100, np.eye(5), atol=1e-10)
    np.testing.assert_allclose(_whiten(h, iters=6, eps=1e-12), h, atol=1e-6)


def test_whitened_covariance_is_identity():
    h = np.random.default_rng(5).normal(size=(64, 8))
    c = covariance(_whiten(h))
    assert np.abs(c - np.eye(8)).max() < 1e-3


def test_newton_variant_agrees():
    h = np.random.default_rng(6).normal(size=(64, 4))
    a = newton_whiten(Tape().constant(h), WhitenConfig(20, 1e-5)).value
    np.testing.assert_allclose(a, exact_zca(h, 1e-5), atol=1e-6)


def test_whitening_gradient():
    rng = np.random.default_rng(7)
    wmix = rng.normal(size=(10, 3))
    for _ in range(5):
        x = rng.normal(size=(10, 3))

        def f(v):
            z = schur_newton_whiten(v, WhitenConfig(5, 1e-5))
            return T.sum_all(T.mul(z, v.tape.constant(wmix)))
        assert T.grad_check(f, x) < 1e-4


def test_batch_norm_columns():
    h = np.random.default_rng(8).normal(3.0, 2.0, size=(50, 4))
    z = batch_norm(Tape().constant(h), eps=0.0).value
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)


def test_whitening_needs_two_rows():
    with pytest.raises(DimensionError):
        _whiten(np.ones((1, 3)))


def test_zero_params_give_zero_output():
    p = EncoderParams([np.zeros((4, 3))], [np.zeros((1, 3))])
    out = mlp_forward(np.ones((5, 4)), p, Tape())
    assert np.all(out.value == 0)


def test_identity_layer_passes_nonnegative_input():
    p = EncoderParams([np.eye(3)], [np.zeros((1, 3))])
    x = np.abs(np.random.default_rng(0).normal(size=(4, 3)))
    np.testing.assert_array_equal(mlp_forward(x, p, Tape()).value, x)


def test_dropout_stream_is_deterministic():
    p = EncoderParams.init([6, 8, 4], np.random.default_rng(0))
    x = np.random.default_rng(1).random((10, 6))

    def go():
        return mlp_forward(x, p, Tape(), training=True, dropout=0.5,
                           rng=np.random.default_rng(9)).value
    np.testing.assert_array_equal(go(), go())


def test_linear_last_layer():
    p = EncoderParams([np.array([[-1.0]])], [np.zeros((1, 1))])
    out = mlp_forward(np.ones((2, 1)), p, Tape(), activate_last=False).value
    assert out.tolist() == [[-1.0], [-1.0]]


def test_forward_rejects_wrong_width():
    p = EncoderParams.init([6, 4], np.random.default_rng(0))
    with pytest.raises(DimensionError):
        mlp_forward(np.ones((3, 5)), p, Tape())
    with pytest.raises(ValueError):
        mlp_forward(np.ones((3, 6)), p, Tape(), whiten_layers="some")


def test_params_save_load(tmp_path):
    p = EncoderParams.init([5, 7, 3], np.random.default_rng(2))
    p.save(tmp_path / "ck")
    q = EncoderParams.load(tmp_path / "ck")
    assert q.dims == [5, 7, 3]
    for a, b in zip(p.flat(), q.flat()):
        np.testing.assert_array_equal(a, b)


def test_glorot_bounds():
    p = EncoderParams.init([100, 50], np.random.default_rng(0))
    assert np.abs(p.weights[0]).max() <= np.sqrt(6 / 150)
    assert np.all(p.biases[0] == 0)


def test_mean_aggregate(path4):
    h = np.arange(8, dtype=float).reshape(4, 2)
    tape = Tape()
    top1 = build_positive_table(path4, 1)
    out = mean_aggregate(tape.constant(h), top1).value
    idx = [top1.positives(i)[0] for i in range(4)]
    np.testing.assert_array_equal(out, h[idx])
    g = Graph.from_edges([0, 1], [1, 2])
    full = mean_aggregate(tape.constant(h[:3]), full_neighborhood_table(g)).value
    np.testing.assert_array_equal(full[1], (h[0] + h[2]) / 2)


def test_mean_of_two_positives():
    t = PositiveTable(np.array([0, 2, 2, 2]), np.array([1, 2]), np.zeros(2), 0)
    h = np.array([[9.0, 9.0], [0.0, 0.0], [2.0, 4.0]])
    out = mean_aggregate(Tape().constant(h), t).value
    assert out[0].tolist() == [1.0, 2.0]
    assert out[1].tolist() == [0.0, 0.0]


@settings(max_examples=25, deadline=None)
@given(st.integers(12, 40), st.integers(2, 5), st.integers(0, 2 ** 31))
def test_whitening_idempotent_up_to_tolerance(n, d, seed):
    h = np.random.default_rng(seed).normal(size=(n, d))
    once = _whiten(h, iters=30, eps=1e-12)
    twice = _whiten(once, iters=30, eps=1e-12)
    np.testing.assert_allclose(twice, once, atol=1e-6)
