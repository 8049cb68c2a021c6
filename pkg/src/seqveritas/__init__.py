"""From-scratch LSTM text classifier for fake-news detection.

Everything numeric is built on a small dense-matrix substrate (numpy arrays
plus a portable seeded PRNG); the layers, optimizer, and training loop are
implemented here rather than delegated to a deep-learning framework so that
every gradient can be checked against finite differences.
"""

__version__ = "0.1.0"
