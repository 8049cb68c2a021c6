import os
from pathlib import Path

import numpy as np
import pytest

from seqveritas import ingest, textprep

FIXTURES = Path(__file__).parent / "fixtures"

TOY_FAKE = str(FIXTURES / "toy_fake.csv")
TOY_TRUE = str(FIXTURES / "toy_true.csv")


@pytest.fixture(scope="session")
def toy_articles():
    fake = ingest.Dataset(ingest.load_articles(TOY_FAKE, label=1))
    true_ = ingest.Dataset(ingest.load_articles(TOY_TRUE, label=0))
    return fake, true_


@pytest.fixture(scope="session")
def toy_encoded(toy_articles):
    """The 20-example separable toy corpus, fully preprocessed and encoded."""
    fake, true_ = toy_articles
    merged = ingest.merge_shuffle(fake, true_, seed=42)
    token_lists = [textprep.preprocess(a.title, a.body)
                   for a in merged.records]
    vocab = textprep.build_vocab(token_lists, max_size=100, min_freq=1)
    maxlen = 10
    x = np.array([textprep.encode(t, vocab, maxlen) for t in token_lists])
    y = np.array([a.label for a in merged.records], dtype=np.float64)
    return x, y, vocab, maxlen


def corpus_dir():
    """Optional path to the real Fake.csv/True.csv corpus (not shipped)."""
    return os.environ.get("SEQVERITAS_CORPUS_DIR")


needs_corpus = pytest.mark.skipif(
    corpus_dir() is None or not os.path.exists(
        os.path.join(corpus_dir() or "", "Fake.csv")),
    reason="set SEQVERITAS_CORPUS_DIR to the directory holding Fake.csv/True.csv")
