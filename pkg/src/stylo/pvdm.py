"""Distributed-memory paragraph vectors (PV-DM) trained per author.

Each document key owns a row of ``w_doc``. A training example averages the
input vectors of the context words together with the document vector and
predicts the target word against ``K`` negative samples.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .rng import make_rng, spawn_rngs
from .vocab import (
    NegativeSamplingTable,
    SubsamplePolicy,
    Vocabulary,
    build_vocab,
    keep_probabilities,
)

logger = logging.getLogger(__name__)

MAX_DOT = _kernels.MAX_DOT


class DegenerateCorpusError(ValueError):
    """Nothing in the corpus yields a training example."""


class OutOfVocabularyError(ValueError):
    pass


@dataclass
class TrainConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 10
    lr0: float = 0.025
    lr_min: float = 0.0001
    subsample: float | None = 1e-3
    min_count: int = 5
    seed: int = 1
    workers: int = 1

    def __post_init__(self):
        checks = [
            (self.dim >= 2, "dim must be >= 2"),
            (self.window >= 1, "window must be >= 1"),
            (self.negatives >= 1, "negatives must be >= 1"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.lr0 > 0, "lr0 must be > 0"),
            (0 <= self.lr_min < self.lr0, "lr_min must satisfy 0 <= lr_min < lr0"),
            (self.subsample is None or self.subsample > 0, "subsample must be > 0 or null"),
            (self.min_count >= 1, "min_count must be >= 1"),
            (self.workers >= 1, "workers must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def subsample_policy(self) -> SubsamplePolicy:
        return SubsamplePolicy(self.subsample)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass
class Model:
    w_in: np.ndarray
    w_out: np.ndarray
    w_doc: np.ndarray
    doc_keys: list[str]
    vocab: Vocabulary
    config: TrainConfig
    epoch_losses: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        v, a = len(self.vocab), len(self.doc_keys)
        if self.w_in.shape[0] != v or self.w_out.shape[0] != v or self.w_doc.shape[0] != a:
            raise ValueError(
                f"matrix rows {self.w_in.shape[0]}/{self.w_out.shape[0]}/{self.w_doc.shape[0]} "
                f"do not match |V|={v}, |A|={a}")

    @property
    def dim(self) -> int:
        return self.w_in.shape[1]

    @cached_property
    def table(self) -> NegativeSamplingTable:
        return NegativeSamplingTable.from_vocab(self.vocab)

    @cached_property
    def doc_index(self) -> dict[str, int]:
        return {k: i for i, k in enumerate(self.doc_keys)}

    def doc_vector(self, key: str) -> np.ndarray:
        return self.w_doc[self.doc_index[key]]


@dataclass(frozen=True)
class TrainingExample:
    doc_index: int
    target: int
    context: tuple[int, ...]


def _uniform_rows(rng: np.random.Generator, rows: int, dim: int, dtype) -> np.ndarray:
    return ((rng.random((rows, dim)) - 0.5) / dim).astype(dtype)


def init_model(vocab: Vocabulary, doc_keys: Sequence[str], config: TrainConfig,
               dtype=np.float32) -> Model:
    """Fresh model: ``w_in``/``w_doc`` uniform in ``[-0.5/D, 0.5/D]``, ``w_out`` zero."""
    if len(vocab) < 2:
        raise ValueError("vocabulary needs at least 2 words")
    if not doc_keys:
        raise ValueError("need at least one document")
    if len(set(doc_keys)) != len(doc_keys):
        raise ValueError("document keys must be unique")
    rng = np.random.default_rng(config.seed)
    d = config.dim
    w_in = _uniform_rows(rng, len(vocab), d, dtype)
    w_doc = _uniform_rows(rng, len(doc_keys), d, dtype)
    w_out = np.zeros((len(vocab), d), dtype=dtype)
    return Model(w_in, w_out, w_doc, list(doc_keys), vocab, config)


def extract_examples(tokens: Sequence[str], doc_index: int, vocab: Vocabulary, policy: SubsamplePolicy,
                     window: int, rng_state: np.ndarray) -> Iterator[TrainingExample]:
    """Training examples of one document, in position order.

    Out-of-vocabulary tokens are dropped, survivors are subsampled, then each
    survivor gets a radius ``b`` uniform in ``1..window`` and its context is
    the surviving neighbours within ``b`` positions. Positions with no
    context yield nothing.
    """
    ids = vocab.encode(tokens)
    words, _, radius = _kernels.extract_positions(ids, keep_probabilities(vocab, policy), int(window), rng_state)
    n = len(words)
    for i in range(n):
        b = int(radius[i])
        ctx = tuple(int(words[j]) for j in range(max(0, i - b), min(n, i + b + 1)) if j != i)
        if ctx:
            yield TrainingExample(doc_index, int(words[i]), ctx)


def forward_hidden(context: Sequence[int], doc_index: int, model: Model) -> np.ndarray:
    """Mean of the context input vectors and the document vector."""
    if len(context) == 0:
        raise ValueError("context must be nonempty")
    rows = model.w_in[np.asarray(context, dtype=np.int64)].astype(np.float64)
    return (rows.sum(axis=0) + model.w_doc[doc_index]) / (len(context) + 1)


def example_loss(h: np.ndarray, target: int, negatives: Sequence[int], model: Model) -> float:
    """Negative-sampling logistic loss with dot products clipped to [-6, 6]."""
    h = np.asarray(h, dtype=np.float64)
    pos = np.clip(model.w_out[target].astype(np.float64) @ h, -MAX_DOT, MAX_DOT)
    neg = np.clip(model.w_out[np.asarray(negatives, dtype=np.int64)].astype(np.float64) @ h, -MAX_DOT, MAX_DOT)
    return float(np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum())


def example_gradients(example: TrainingExample, negatives: Sequence[int], model: Model):
    """Gradients of :func:`example_loss` with respect to every touched row.

    Returns ``(loss, grad_in, grad_out, grad_doc)`` where ``grad_in`` and
    ``grad_out`` map row id to gradient (repeated ids accumulate).
    """
    h = forward_hidden(example.context, example.doc_index, model)
    outputs = [example.target, *negatives]
    labels = [1.0] + [0.0] * len(negatives)
    grad_h = np.zeros_like(h)
    grad_out: dict[int, np.ndarray] = {}
    for o, label in zip(outputs, labels):
        row = model.w_out[o].astype(np.float64)
        f = float(np.clip(row @ h, -MAX_DOT, MAX_DOT))
        g = 1.0 / (1.0 + math.exp(-f)) - label  # dL/df
        grad_h += g * row
        grad_out[o] = grad_out.get(o, 0.0) + g * h
    share = grad_h / (len(example.context) + 1)
    grad_in: dict[int, np.ndarray] = {}
    for w in example.context:
        grad_in[w] = grad_in.get(w, 0.0) + share
    loss = example_loss(h, example.target, negatives, model)
    return loss, grad_in, grad_out, share.copy()


def sgd_step(example: TrainingExample, model: Model, lr: float, rng_state: np.ndarray | None = None,
             negatives: Sequence[int] | None = None) -> tuple[float, np.ndarray]:
    """Apply one SGD update for ``example`` in place.

    Negatives are drawn from the model's sampling table with ``rng_state``
    unless given explicitly. Returns ``(loss before the step, negatives)``.
    Only the target, negative, context and document rows change.
    """
    if lr < 0:
        raise ValueError("lr must be >= 0")
    if negatives is None:
        if rng_state is None:
            raise ValueError("need rng_state or explicit negatives")
        negs = np.array([_kernels.draw_negative(model.table.cumulative_weights, example.target, rng_state)
                         for _ in range(model.config.negatives)], dtype=np.int64)
    else:
        negs = np.asarray(negatives, dtype=np.int64)
    ctx = np.asarray(example.context, dtype=np.int64)
    dim = model.dim
    loss = _kernels.apply_example(ctx, len(ctx), model.w_doc[example.doc_index], example.target, negs,
                                  model.w_in, model.w_out, float(lr), np.empty(dim), np.empty(dim),
                                  np.empty(len(negs) + 1), True)
    return loss, negs


def _flatten(documents: Sequence, vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    encoded = [vocab.encode(doc.tokens) for doc in documents]
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    np.cumsum([len(e) for e in encoded], out=offsets[1:])
    flat = np.concatenate(encoded) if encoded else np.zeros(0, dtype=np.int32)
    return flat.astype(np.int32), offsets


def train(documents: Sequence, config: TrainConfig, vocab: Vocabulary | None = None) -> Model:
    """Train author vectors and word vectors jointly on ``documents``.

    Documents are reshuffled every epoch; the learning rate decays linearly
    from ``lr0`` to ``lr_min`` over all planned in-vocabulary tokens. With
    ``workers > 1`` documents are split over threads updating the shared
    matrices without locks, and results are no longer bit-reproducible.
    """
    if vocab is None:
        vocab = build_vocab(documents, config.min_count)
    flat, offsets = _flatten(documents, vocab)
    lengths = np.diff(offsets)
    if not (lengths >= 2).any():
        raise DegenerateCorpusError("no document has two in-vocabulary tokens")
    if len(vocab) < 2:
        raise DegenerateCorpusError("vocabulary has fewer than 2 words")

    model = init_model(vocab, [d.key for d in documents], config)
    cumulative = model.table.cumulative_weights
    keep = keep_probabilities(vocab, config.subsample_policy)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    states = spawn_rngs(config.seed, config.workers)
    progress = np.zeros(1, dtype=np.int64)
    total_planned = float(config.epochs * int(offsets[-1]))
    args = (flat, offsets, model.w_in, model.w_out, model.w_doc, cumulative, keep, config.window,
            config.negatives, config.lr0, config.lr_min, progress, total_planned)

    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for epoch in range(config.epochs):
            start = time.perf_counter()
            order = shuffle_rng.permutation(len(documents)).astype(np.int64)
            if pool is None:
                loss_sum, n = _kernels.train_documents(order, *args, states[0], True)
            else:
                futures = [pool.submit(_kernels.train_documents, order[w::config.workers].copy(), *args,
                                       states[w], True) for w in range(config.workers)]
                results = [f.result() for f in futures]
                loss_sum = sum(r[0] for r in results)
                n = sum(r[1] for r in results)
            if n == 0:
                raise DegenerateCorpusError("corpus produced no training example")
            mean = loss_sum / n
            model.epoch_losses.append(mean)
            logger.info("epoch %d/%d: mean loss %.5f over %d examples (%.1fs)",
                        epoch + 1, config.epochs, mean, n, time.perf_counter() - start)
    finally:
        if pool is not None:
            pool.shutdown()
    if not np.isfinite(model.w_in).all() or not np.isfinite(model.w_doc).all() or not np.isfinite(model.w_out).all():
        raise FloatingPointError("training produced non-finite weights")
    return model


def infer_vector(tokens: Sequence[str], model: Model, steps: int | None = None, lr0_infer: float | None = None,
                 seed: int | None = None) -> np.ndarray:
    """Fit a new document vector for ``tokens`` with word matrices frozen."""
    cfg = model.config
    steps = cfg.epochs if steps is None else steps
    lr0 = cfg.lr0 if lr0_infer is None else lr0_infer
    seed = cfg.seed if seed is None else seed
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ids = model.vocab.encode(tokens)
    if len(ids) == 0:
        raise OutOfVocabularyError("no token of the document is in the vocabulary")
    rng = np.random.default_rng([seed, 2])
    vec = _uniform_rows(rng, 1, model.dim, model.w_doc.dtype)
    offsets = np.array([0, len(ids)], dtype=np.int64)
    progress = np.zeros(1, dtype=np.int64)
    _kernels.train_documents(np.zeros(steps, dtype=np.int64), ids, offsets, model.w_in, model.w_out, vec,
                             model.table.cumulative_weights, keep_probabilities(model.vocab, cfg.subsample_policy),
                             cfg.window, cfg.negatives, lr0, min(cfg.lr_min, lr0), progress,
                             float(steps * len(ids)), make_rng(seed), False)
    return vec[0].copy()
