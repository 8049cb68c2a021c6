"""Dense-matrix substrate: checked matmul, activations, seeded PRNG,
Glorot initialization, and the finite-difference gradient oracle.

Matrices are plain numpy arrays (row-major, float64 by default; float32 is
allowed for full-corpus training). Randomness always flows through `Prng`,
a fixed xoshiro256** generator, so every number in the pipeline is
reproducible bit-for-bit from a 64-bit seed regardless of platform.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class NonDeterministicLoss(RuntimeError):
    pass


def assert_finite(a, name="array"):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains NaN or Inf")


def matmul(a, b):
    """Standard matrix product with an explicit shape check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


# --- activations ----------------------------------------------------------

def sigmoid(x):
    # Branch form: never exponentiates a large positive argument.
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dsigmoid(y):
    """Derivative expressed in terms of the sigmoid output y."""
    return y * (1.0 - y)


def tanh(x):
    return np.tanh(x)


def dtanh(y):
    """Derivative expressed in terms of the tanh output y."""
    return 1.0 - y * y


def relu(x):
    return np.maximum(x, 0.0)


def drelu(x):
    """Derivative with respect to the pre-activation x; defined as 0 at 0."""
    return (x > 0).astype(x.dtype)


# --- PRNG -----------------------------------------------------------------

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64_next(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Prng:
    """xoshiro256** seeded via splitmix64 from a single 64-bit seed.

    The algorithm (not the platform) defines the stream, so identical seeds
    give identical draws everywhere.
    """

    def __init__(self, seed):
        s = seed & _MASK64
        state = []
        for _ in range(4):
            s, out = _splitmix64_next(s)
            state.append(out)
        self._s = state

    def next_u64(self):
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def next_f64(self):
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, low, high, shape):
        n = int(np.prod(shape))
        vals = np.array([self.next_f64() for _ in range(n)], dtype=np.float64)
        return (low + (high - low) * vals).reshape(shape)

    def randbelow(self, n):
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, seq):
        """In-place Fisher-Yates over a mutable sequence."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def permutation(self, n):
        idx = list(range(n))
        self.shuffle(idx)
        return np.array(idx, dtype=np.int64)


def init_glorot(shape, rng, dtype=np.float64):
    """Glorot-uniform: entries in +/- sqrt(6 / (fan_in + fan_out))."""
    rows, cols = shape
    if rows <= 0 or cols <= 0:
        raise ValueError(f"bad shape {shape}")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, (rows, cols)).astype(dtype)


# --- finite-difference oracle ---------------------------------------------

def finite_diff_grad(loss_fn, params, eps=1e-5):
    """Central-difference gradient of a scalar loss with respect to `params`.

    `loss_fn` must be deterministic (frozen dropout masks, fixed batch
    order); this is verified by evaluating it twice at the base point.
    """
    params = np.asarray(params, dtype=np.float64)
    base1 = loss_fn(params)
    base2 = loss_fn(params)
    if base1 != base2:
        raise NonDeterministicLoss(
            f"two evaluations at the same point differ: {base1} vs {base2}")
    grad = np.zeros_like(params)
    flat = params.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        fp = loss_fn(params)
        flat[k] = orig - eps
        fm = loss_fn(params)
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * eps)
    return grad


def max_relative_error(g_analytic, g_numeric):
    """inf-norm relative error, guarded against tiny gradients."""
    g_analytic = np.asarray(g_analytic, dtype=np.float64)
    g_numeric = np.asarray(g_numeric, dtype=np.float64)
    num = np.max(np.abs(g_analytic - g_numeric)) if g_analytic.size else 0.0
    den = max(1.0, np.max(np.abs(g_analytic)) if g_analytic.size else 0.0)
    return num / den
