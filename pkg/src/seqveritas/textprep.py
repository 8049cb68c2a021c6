"""Text preprocessing: clean, tokenize, stop-word removal, stemming,
vocabulary construction, and fixed-length integer encoding.

Model input is title + " " + body. The subject column is deliberately
excluded: in this corpus it nearly determines the label, so feeding it to
the model would be a distribution leak rather than a learned signal.
"""

from __future__ import annotations

import json
import re
import struct
from collections import Counter
from importlib import resources

import numpy as np

from . import porter

PAD_INDEX = 0
OOV_INDEX = 1

DEFAULT_MAXLEN = 200          # covers >80% of article bodies post-cleaning
DEFAULT_MAX_VOCAB = 20_000
DEFAULT_MIN_FREQ = 2

_NON_ALNUM = re.compile(r"[^a-z0-9]+")

CACHE_MAGIC = b"SVEC1"


class CacheFormatError(ValueError):
    pass


def load_stopwords():
    """The shipped 174-word English stop-list, one token per line."""
    text = resources.files("seqveritas.data").joinpath("stopwords.txt").read_text()
    return frozenset(text.split())


_STOPWORDS = load_stopwords()


def clean(raw):
    """Lowercase, replace every char outside [a-z0-9 ] with a space,
    collapse whitespace runs, strip."""
    return _NON_ALNUM.sub(" ", raw.lower()).strip()


def tokenize(cleaned):
    return cleaned.split()


def remove_stopwords(tokens, stopwords=_STOPWORDS):
    return [t for t in tokens if t not in stopwords]


def stem(token):
    return porter.stem(token)


def preprocess(title, body):
    """Full pipeline for one article: clean -> tokenize -> de-stopword -> stem."""
    tokens = tokenize(clean(title + " " + body))
    return [stem(t) for t in remove_stopwords(tokens)]


class Vocabulary:
    """Token-to-index map. Index 0 is PAD, index 1 is OOV; real tokens
    occupy contiguous indices starting at 2."""

    def __init__(self, tokens_in_order, max_size=DEFAULT_MAX_VOCAB,
                 min_freq=DEFAULT_MIN_FREQ):
        self.max_size = max_size
        self.min_freq = min_freq
        self._index = {tok: i + 2 for i, tok in enumerate(tokens_in_order)}
        self._tokens = list(tokens_in_order)

    def __len__(self):
        return len(self._index) + 2  # PAD and OOV

    def __contains__(self, token):
        return token in self._index

    def index_of(self, token):
        return self._index.get(token, OOV_INDEX)

    @property
    def tokens(self):
        """Real tokens in index order (index 2 first)."""
        return list(self._tokens)


def build_vocab(corpus, max_size=DEFAULT_MAX_VOCAB, min_freq=DEFAULT_MIN_FREQ):
    """Rank tokens by frequency desc, ties lexicographic asc; keep the top
    (max_size - 2) with frequency >= min_freq.

    `corpus` must be the training split only; building from validation data
    would leak vocabulary.
    """
    counts = Counter()
    for tokens in corpus:
        counts.update(tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, freq in ranked if freq >= min_freq][:max_size - 2]
    return Vocabulary(kept, max_size=max_size, min_freq=min_freq)


def encode(tokens, vocab, maxlen):
    """Fixed-length index sequence: OOV -> 1, tail truncation, pre-padding."""
    if maxlen < 1:
        raise ValueError("maxlen must be >= 1")
    idx = [vocab.index_of(t) for t in tokens[-maxlen:]]
    return [PAD_INDEX] * (maxlen - len(idx)) + idx


# --- encoded-dataset cache file --------------------------------------------
# Layout: magic "SVEC1"; maxlen, V, N as little-endian u32; then N records
# of maxlen little-endian u32 indices followed by one label byte.

def write_cache(path, sequences, labels, vocab_size, maxlen):
    sequences = np.asarray(sequences, dtype=np.uint32)
    labels = np.asarray(labels, dtype=np.uint8)
    n = sequences.shape[0]
    if sequences.shape != (n, maxlen) or labels.shape != (n,):
        raise ValueError("sequences/labels shape mismatch")
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<III", maxlen, vocab_size, n))
        for row, label in zip(sequences, labels):
            f.write(row.astype("<u4").tobytes())
            f.write(struct.pack("B", label))


def read_cache(path):
    """Returns (sequences Nxmaxlen int64, labels N int64, vocab_size)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:5] != CACHE_MAGIC:
        raise CacheFormatError(f"{path}: bad magic")
    maxlen, vocab_size, n = struct.unpack_from("<III", blob, 5)
    record = 4 * maxlen + 1
    if len(blob) != 5 + 12 + n * record:
        raise CacheFormatError(f"{path}: truncated or oversized cache")
    sequences = np.empty((n, maxlen), dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    off = 17
    for i in range(n):
        sequences[i] = np.frombuffer(blob, dtype="<u4", count=maxlen, offset=off)
        labels[i] = blob[off + 4 * maxlen]
        off += record
    return sequences, labels, vocab_size


def save_vocab(path, vocab):
    doc = {"max_size": vocab.max_size, "min_freq": vocab.min_freq,
           "tokens": vocab.tokens}
    with open(path, "w") as f:
        json.dump(doc, f)


def load_vocab(path):
    with open(path) as f:
        doc = json.load(f)
    return Vocabulary(doc["tokens"], max_size=doc["max_size"],
                      min_freq=doc["min_freq"])
