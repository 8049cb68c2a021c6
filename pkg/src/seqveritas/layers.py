"""Layer forward/backward passes: Embedding, LSTM, Dense, Dropout, BatchNorm.

All layers are stateless transformers over (input, params, cache). Each
forward returns whatever its backward needs in an explicit cache object;
a cache is valid for exactly one forward/backward pair. Gradients
accumulate into ParamTensor.grad and are the trainer's job to zero.

LSTM gate packing in the 4H dimension is fixed as [i, f, g, o]
(input, forget, candidate, output); checkpoints depend on this order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import (ShapeMismatch, dsigmoid, dtanh, drelu, matmul,
                       relu, sigmoid, tanh)


class IndexOutOfVocab(IndexError):
    pass


class BadRate(ValueError):
    pass


class BatchTooSmall(ValueError):
    pass


class StaleCache(RuntimeError):
    pass


@dataclass
class ParamTensor:
    """A trainable array with its gradient and Adam moments.

    `regularizers` is a tuple of ("l1", lam) / ("l2", lam) terms; biases,
    embeddings, and batch-norm gamma/beta never carry any.
    """
    name: str
    value: np.ndarray
    regularizers: tuple = ()
    grad: np.ndarray = None
    m: np.ndarray = None
    v: np.ndarray = None

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.m is None:
            self.m = np.zeros_like(self.value)
        if self.v is None:
            self.v = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)


@dataclass
class _Cache:
    _spent: bool = field(default=False, init=False)

    def consume(self):
        if self._spent:
            raise StaleCache("cache already used for a backward pass")
        self._spent = True


# --- embedding -------------------------------------------------------------

def embedding_forward(indices, emb):
    """Row lookup: (B, T) int indices -> (B, T, d). The PAD row (index 0)
    is held at zero and receives no gradient."""
    indices = np.asarray(indices)
    vocab_size = emb.value.shape[0]
    if indices.min() < 0 or indices.max() >= vocab_size:
        raise IndexOutOfVocab(
            f"index outside [0, {vocab_size}): {indices.min()}..{indices.max()}")
    return emb.value[indices]


def embedding_backward(grad_out, indices, emb):
    """grad of row k = sum of upstream grads wherever k occurred."""
    np.add.at(emb.grad, np.asarray(indices), grad_out)
    emb.grad[0] = 0.0  # PAD row frozen


# --- LSTM ------------------------------------------------------------------

@dataclass
class LstmCache(_Cache):
    x: np.ndarray = None          # (B, T, d)
    gates: list = None            # per step: (i, f, g, o)
    c: list = None                # c_0 .. c_T
    h: list = None                # h_0 .. h_T
    tanh_c: list = None           # tanh(c_t) per step


def lstm_forward(x, w, u, b):
    """Sequence-to-vector LSTM: returns the final hidden state h_T.

    x: (B, T, d); w: (d, 4H); u: (H, 4H); b: (4H,). Gate order [i,f,g,o].
    c_0 = h_0 = 0.
    """
    x = np.asarray(x)
    batch, steps, d = x.shape
    if w.value.shape[0] != d or w.value.shape[1] != u.value.shape[1]:
        raise ShapeMismatch(f"LSTM shapes: x {x.shape}, W {w.value.shape}, "
                            f"U {u.value.shape}")
    hidden = u.value.shape[0]
    h_t = np.zeros((batch, hidden), dtype=x.dtype)
    c_t = np.zeros((batch, hidden), dtype=x.dtype)
    cache = LstmCache(x=x, gates=[], c=[c_t], h=[h_t], tanh_c=[])
    for t in range(steps):
        z = matmul(x[:, t, :], w.value) + matmul(h_t, u.value) + b.value
        gi = sigmoid(z[:, :hidden])
        gf = sigmoid(z[:, hidden:2 * hidden])
        gg = tanh(z[:, 2 * hidden:3 * hidden])
        go = sigmoid(z[:, 3 * hidden:])
        c_t = gf * c_t + gi * gg
        tc = tanh(c_t)
        h_t = go * tc
        cache.gates.append((gi, gf, gg, go))
        cache.c.append(c_t)
        cache.h.append(h_t)
        cache.tanh_c.append(tc)
    return h_t, cache


def lstm_backward(grad_ht, cache, w, u, b):
    """Full backpropagation through time; accumulates into the param grads
    and returns grad with respect to the input sequence."""
    cache.consume()
    x = cache.x
    batch, steps, d = x.shape
    hidden = u.value.shape[0]
    grad_x = np.zeros_like(x)
    dh = np.asarray(grad_ht).copy()
    dc = np.zeros((batch, hidden), dtype=x.dtype)
    for t in range(steps - 1, -1, -1):
        gi, gf, gg, go = cache.gates[t]
        tc = cache.tanh_c[t]
        c_prev = cache.c[t]
        h_prev = cache.h[t]
        do = dh * tc
        dc = dc + dh * go * dtanh(tc)
        di = dc * gg
        df = dc * c_prev
        dg = dc * gi
        dz = np.concatenate([di * dsigmoid(gi), df * dsigmoid(gf),
                             dg * dtanh(gg), do * dsigmoid(go)], axis=1)
        w.grad += matmul(x[:, t, :].T, dz)
        u.grad += matmul(h_prev.T, dz)
        b.grad += dz.sum(axis=0)
        grad_x[:, t, :] = matmul(dz, w.value.T)
        dh = matmul(dz, u.value.T)
        dc = dc * gf
    return grad_x


# --- dense -----------------------------------------------------------------

_ACTIVATIONS = ("relu", "sigmoid", "linear")


@dataclass
class DenseCache(_Cache):
    x: np.ndarray = None
    z: np.ndarray = None  # pre-activation


def dense_forward(x, w, b, activation):
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    z = matmul(x, w.value) + b.value
    if activation == "relu":
        y = relu(z)
    elif activation == "sigmoid":
        y = sigmoid(z)
    else:
        y = z
    return y, DenseCache(x=x, z=z)


def dense_backward(grad_y, cache, w, b, activation, grad_is_preact=False):
    """Returns grad_x; accumulates grad_W and grad_b. With
    `grad_is_preact`, grad_y is already d(loss)/dz (the fused
    sigmoid-plus-BCE path for the output layer)."""
    cache.consume()
    if grad_is_preact:
        dz = grad_y
    elif activation == "relu":
        dz = grad_y * drelu(cache.z)
    elif activation == "sigmoid":
        dz = grad_y * dsigmoid(sigmoid(cache.z))
    else:
        dz = grad_y
    w.grad += matmul(cache.x.T, dz)
    b.grad += dz.sum(axis=0)
    return matmul(dz, w.value.T)


# --- dropout ---------------------------------------------------------------

@dataclass
class DropoutCache(_Cache):
    scaled_mask: np.ndarray = None  # None means identity (eval or p=0)


def dropout_forward(x, p, mode, rng):
    """Inverted dropout: kept units scaled by 1/(1-p) at train time, so
    eval mode is an identity."""
    if not 0.0 <= p < 1.0:
        raise BadRate(f"dropout rate must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x, DropoutCache(scaled_mask=None)
    keep = 1.0 - p
    draws = rng.uniform(0.0, 1.0, x.shape)
    mask = (draws < keep).astype(x.dtype) / keep
    return x * mask, DropoutCache(scaled_mask=mask)


def dropout_backward(grad_y, cache):
    cache.consume()
    if cache.scaled_mask is None:
        return grad_y
    return grad_y * cache.scaled_mask


# --- batch normalization ---------------------------------------------------

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass
class BatchNormRunning:
    """Running statistics, updated in train mode and used in eval mode."""
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, n, dtype=np.float64):
        return cls(mean=np.zeros(n, dtype=dtype), var=np.ones(n, dtype=dtype))


@dataclass
class BatchNormCache(_Cache):
    x_hat: np.ndarray = None
    inv_std: np.ndarray = None
    x_centered: np.ndarray = None


def batchnorm_forward(x, gamma, beta, running, mode,
                      momentum=BN_MOMENTUM, eps=BN_EPS):
    """Train: standardize with biased batch statistics and fold an
    unbiased variance estimate into the running stats. Eval: use running
    stats only."""
    if mode == "train":
        batch = x.shape[0]
        if batch < 2:
            raise BatchTooSmall("batch-norm train mode needs batch >= 2")
        mean = x.mean(axis=0)
        var = x.var(axis=0)  # biased
        running.mean = momentum * running.mean + (1.0 - momentum) * mean
        running.var = (momentum * running.var
                       + (1.0 - momentum) * var * batch / (batch - 1))
    else:
        mean = running.mean
        var = running.var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_centered = x - mean
    x_hat = x_centered * inv_std
    y = gamma.value * x_hat + beta.value
    cache = BatchNormCache(x_hat=x_hat, inv_std=inv_std, x_centered=x_centered)
    return y, cache


def batchnorm_backward(grad_y, cache, gamma, beta):
    """Gradient through the train-mode batch statistics."""
    cache.consume()
    batch = grad_y.shape[0]
    gamma.grad += (grad_y * cache.x_hat).sum(axis=0)
    beta.grad += grad_y.sum(axis=0)
    dx_hat = grad_y * gamma.value
    grad_x = (cache.inv_std / batch) * (
        batch * dx_hat
        - dx_hat.sum(axis=0)
        - cache.x_hat * (dx_hat * cache.x_hat).sum(axis=0))
    return grad_x
