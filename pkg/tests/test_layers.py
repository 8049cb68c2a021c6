import numpy as np
import pytest

from seqveritas.layers import (BadRate, BatchNormRunning, BatchTooSmall,
                               IndexOutOfVocab, ParamTensor, StaleCache,
                               batchnorm_backward, batchnorm_forward,
                               dense_backward, dense_forward,
                               dropout_backward, dropout_forward,
                               embedding_forward, lstm_backward,
                               lstm_forward)
from seqveritas.numerics import Prng, ShapeMismatch


def _pt(name, arr, reg=()):
    return ParamTensor(name, np.asarray(arr, dtype=np.float64), regularizers=reg)


def _lstm_params(d, h, rng=None, zero=False):
    if zero:
        w = np.zeros((d, 4 * h))
        u = np.zeros((h, 4 * h))
    else:
        w = rng.uniform(-0.5, 0.5, (d, 4 * h))
        u = rng.uniform(-0.5, 0.5, (h, 4 * h))
    return (_pt("W", w), _pt("U", u), _pt("b", np.zeros(4 * h)))


# --- embedding -------------------------------------------------------------

def test_embedding_pad_row_zero():
    emb = _pt("E", Prng(0).uniform(-1, 1, (5, 3)))
    emb.value[0] = 0.0
    out = embedding_forward(np.array([[0, 2]]), emb)
    assert np.array_equal(out[0, 0], np.zeros(3))
    assert np.array_equal(out[0, 1], emb.value[2])


def test_embedding_row_identity():
    emb = _pt("E", Prng(1).uniform(-1, 1, (8, 4)))
    before = embedding_forward(np.array([[5]]), emb).copy()
    emb.value[5] += 1.0
    after = embedding_forward(np.array([[5]]), emb)
    assert np.array_equal(after - before, np.ones((1, 1, 4)))


def test_embedding_out_of_vocab():
    emb = _pt("E", np.zeros((4, 2)))
    with pytest.raises(IndexOutOfVocab):
        embedding_forward(np.array([[4]]), emb)
    with pytest.raises(IndexOutOfVocab):
        embedding_forward(np.array([[-1]]), emb)


# --- LSTM ------------------------------------------------------------------

def test_lstm_zero_weights_gives_zero_state():
    w, u, b = _lstm_params(3, 4, zero=True)
    x = Prng(2).uniform(-1, 1, (2, 5, 3))
    h, _ = lstm_forward(x, w, u, b)
    assert np.array_equal(h, np.zeros((2, 4)))


def test_lstm_pad_prefix_keeps_state_zero():
    # Frozen-zero PAD embeddings + zero biases: leading PAD steps leave
    # (h, c) exactly at zero.
    rng = Prng(3)
    d, hid = 3, 4
    w = _pt("W", rng.uniform(-0.5, 0.5, (d, 4 * hid)))
    u = _pt("U", rng.uniform(-0.5, 0.5, (hid, 4 * hid)))
    b = _pt("b", np.zeros(4 * hid))
    pad = np.zeros((1, 2, d))
    real = rng.uniform(-1, 1, (1, 2, d))
    full = np.concatenate([pad, real], axis=1)
    _, cache = lstm_forward(full, w, u, b)
    assert np.array_equal(cache.h[1], np.zeros((1, hid)))
    assert np.array_equal(cache.h[2], np.zeros((1, hid)))
    assert np.array_equal(cache.c[2], np.zeros((1, hid)))
    # and the final state matches running the real suffix alone
    h_suffix, _ = lstm_forward(real, w, u, b)
    h_full, _ = lstm_forward(full, w, u, b)
    assert np.allclose(h_full, h_suffix, atol=1e-15)


def test_lstm_param_count_reference_shapes():
    d, hid = 100, 150
    count = d * 4 * hid + hid * 4 * hid + 4 * hid
    assert count == 4 * hid * (d + hid + 1) == 150_600


def test_lstm_shape_mismatch():
    w, u, b = _lstm_params(3, 4, zero=True)
    with pytest.raises(ShapeMismatch):
        lstm_forward(np.zeros((1, 2, 5)), w, u, b)


def test_lstm_backward_zero_grad():
    rng = Prng(4)
    w, u, b = _lstm_params(3, 4, rng)
    x = rng.uniform(-1, 1, (2, 3, 3))
    _, cache = lstm_forward(x, w, u, b)
    gx = lstm_backward(np.zeros((2, 4)), cache, w, u, b)
    assert np.array_equal(gx, np.zeros_like(x))
    assert np.array_equal(w.grad, np.zeros_like(w.value))


def test_lstm_stale_cache():
    rng = Prng(5)
    w, u, b = _lstm_params(2, 2, rng)
    x = rng.uniform(-1, 1, (1, 2, 2))
    _, cache = lstm_forward(x, w, u, b)
    lstm_backward(np.ones((1, 2)), cache, w, u, b)
    with pytest.raises(StaleCache):
        lstm_backward(np.ones((1, 2)), cache, w, u, b)


# --- dense -----------------------------------------------------------------

def test_dense_identity():
    w = _pt("W", np.eye(3))
    b = _pt("b", np.zeros(3))
    x = Prng(6).uniform(-1, 1, (4, 3))
    y, _ = dense_forward(x, w, b, "linear")
    assert np.array_equal(y, x)


def test_dense_relu_backward_zeroes_negative_preact():
    w = _pt("W", np.eye(2))
    b = _pt("b", np.array([0.0, 0.0]))
    x = np.array([[1.0, -2.0]])
    y, cache = dense_forward(x, w, b, "relu")
    assert np.array_equal(y, [[1.0, 0.0]])
    gx = dense_backward(np.ones((1, 2)), cache, w, b, "relu")
    assert np.array_equal(gx, [[1.0, 0.0]])


def test_dense_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        dense_forward(np.zeros((2, 3)), _pt("W", np.zeros((4, 2))),
                      _pt("b", np.zeros(2)), "linear")


# --- dropout ---------------------------------------------------------------

def test_dropout_p0_identity():
    x = Prng(7).uniform(-1, 1, (3, 3))
    for mode in ("train", "eval"):
        y, _ = dropout_forward(x, 0.0, mode, Prng(0))
        assert np.array_equal(y, x)


def test_dropout_eval_identity():
    x = Prng(8).uniform(-1, 1, (3, 3))
    y, cache = dropout_forward(x, 0.2, "eval", None)
    assert np.array_equal(y, x)
    assert np.array_equal(dropout_backward(np.ones_like(x), cache),
                          np.ones_like(x))


def test_dropout_bad_rate():
    with pytest.raises(BadRate):
        dropout_forward(np.zeros((1, 1)), 1.0, "train", Prng(0))
    with pytest.raises(BadRate):
        dropout_forward(np.zeros((1, 1)), -0.1, "train", Prng(0))


def test_dropout_monte_carlo_expectation():
    # E[y] = x under inverted dropout; 1e5 masks on a single unit.
    rng = Prng(9)
    x = np.array([[2.0]])
    total = 0.0
    n = 100_000
    for _ in range(n):
        y, _ = dropout_forward(x, 0.2, "train", rng)
        total += y[0, 0]
    assert total / n == pytest.approx(2.0, rel=0.01)


def test_dropout_mask_scale_values():
    rng = Prng(10)
    x = np.ones((100, 100))
    y, _ = dropout_forward(x, 0.2, "train", rng)
    assert set(np.round(np.unique(y), 10)) <= {0.0, round(1 / 0.8, 10)}


# --- batch norm ------------------------------------------------------------

def test_batchnorm_standardizes():
    rng = Prng(11)
    x = rng.uniform(-5, 5, (32, 3))
    gamma = _pt("g", np.ones(3))
    beta = _pt("b", np.zeros(3))
    y, _ = batchnorm_forward(x, gamma, beta, BatchNormRunning.fresh(3), "train")
    assert np.max(np.abs(y.mean(axis=0))) < 1e-6
    assert np.max(np.abs(y.var(axis=0) - 1.0)) < 1e-4  # biased, eps-shifted


def test_batchnorm_constant_column():
    x = np.full((8, 2), 3.7)
    gamma = _pt("g", np.ones(2))
    beta = _pt("b", np.zeros(2))
    y, _ = batchnorm_forward(x, gamma, beta, BatchNormRunning.fresh(2), "train")
    assert np.allclose(y, 0.0, atol=1e-9)
    assert np.all(np.isfinite(y))


def test_batchnorm_batch_too_small():
    with pytest.raises(BatchTooSmall):
        batchnorm_forward(np.zeros((1, 2)), _pt("g", np.ones(2)),
                          _pt("b", np.zeros(2)), BatchNormRunning.fresh(2),
                          "train")


def test_batchnorm_running_stats_update():
    x = np.array([[0.0], [2.0], [4.0], [6.0]])  # mean 3, biased var 5
    running = BatchNormRunning.fresh(1)
    batchnorm_forward(x, _pt("g", np.ones(1)), _pt("b", np.zeros(1)),
                      running, "train")
    assert running.mean[0] == pytest.approx(0.9 * 0.0 + 0.1 * 3.0)
    # unbiased correction folds var * n/(n-1) into the running stat
    assert running.var[0] == pytest.approx(0.9 * 1.0 + 0.1 * 5.0 * 4 / 3)


def test_batchnorm_eval_uses_running_stats():
    running = BatchNormRunning(mean=np.array([1.0]), var=np.array([4.0]))
    x = np.array([[3.0]])
    y, _ = batchnorm_forward(x, _pt("g", np.ones(1)), _pt("b", np.zeros(1)),
                             running, "eval")
    assert y[0, 0] == pytest.approx((3.0 - 1.0) / np.sqrt(4.0 + 1e-5))


def test_batchnorm_stale_cache():
    x = Prng(12).uniform(-1, 1, (4, 2))
    gamma, beta = _pt("g", np.ones(2)), _pt("b", np.zeros(2))
    _, cache = batchnorm_forward(x, gamma, beta, BatchNormRunning.fresh(2),
                                 "train")
    batchnorm_backward(np.ones((4, 2)), cache, gamma, beta)
    with pytest.raises(StaleCache):
        batchnorm_backward(np.ones((4, 2)), cache, gamma, beta)
