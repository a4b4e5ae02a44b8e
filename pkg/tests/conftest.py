import sys

import numpy as np
import pytest

from stylo.corpus import SplitPolicy, aggregate, tokenize_posts
from stylo.pvdm import TrainConfig, example_loss, forward_hidden, init_model, train
from stylo.synth import SynthConfig, synth_posts
from stylo.vocab import Vocabulary


def synth_documents(policy=None, **kwargs):
    posts, _ = tokenize_posts(synth_posts(SynthConfig(**kwargs)))
    docs, _ = aggregate(posts, policy or SplitPolicy.half(7))
    return docs


@pytest.fixture(scope="session")
def small_docs():
    return synth_documents(n_authors=10, posts_per_author=120, vocab_shared=300, vocab_per_author=20, seed=5)


@pytest.fixture(scope="session")
def small_config():
    return TrainConfig(dim=16, epochs=20, min_count=2, seed=3)


@pytest.fixture(scope="session")
def small_model(small_docs, small_config):
    return train(small_docs, small_config)


def random_model(rng: np.random.Generator, n_words=30, n_docs=4, dim=8, k=5, scale=0.5):
    """float64 model with every matrix randomly filled (for gradient checks)."""
    vocab = Vocabulary.from_counts({f"w{i}": int(c) for i, c in enumerate(rng.integers(1, 50, n_words))}, 1)
    model = init_model(vocab, [f"d{i}" for i in range(n_docs)],
                       TrainConfig(dim=dim, negatives=k, min_count=1, seed=int(rng.integers(2**32))),
                       dtype=np.float64)
    model.w_in[:] = rng.normal(0, scale, model.w_in.shape)
    model.w_out[:] = rng.normal(0, scale, model.w_out.shape)
    model.w_doc[:] = rng.normal(0, scale, model.w_doc.shape)
    return model


def finite_difference_grads(model, example, negs, h=1e-5):
    def loss():
        return example_loss(forward_hidden(example.context, example.doc_index, model), example.target, negs, model)

    def fd(matrix, row):
        g = np.zeros(matrix.shape[1])
        for j in range(matrix.shape[1]):
            old = matrix[row, j]
            matrix[row, j] = old + h
            up = loss()
            matrix[row, j] = old - h
            down = loss()
            matrix[row, j] = old
            g[j] = (up - down) / (2 * h)
        return g

    g_in = {w: fd(model.w_in, w) for w in set(example.context)}
    g_out = {o: fd(model.w_out, o) for o in {example.target, *negs}}
    return g_in, g_out, fd(model.w_doc, example.doc_index)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
