"""Jitted inner loops for PV-DM with negative sampling.

All kernels release the GIL so several threads can train on shared matrices
(lock-free, last write wins).
"""

import math

import numpy as np
from numba import njit

from .rng import next_below, next_double
from .vocab import draw_negative

MAX_DOT = 6.0


@njit(cache=True, nogil=True)
def log1pexp(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True, nogil=True)
def extract_positions(ids, keep_prob, window, state):
    """Subsample ``ids`` and draw a reduced window radius per survivor.

    Returns (surviving word ids, their original positions, radii). All
    subsampling draws happen before any radius draw.
    """
    n = ids.shape[0]
    kept = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        p = keep_prob[ids[i]]
        if p < 1.0 and next_double(state) >= p:
            continue
        kept[m] = i
        m += 1
    words = np.empty(m, dtype=np.int64)
    radius = np.empty(m, dtype=np.int64)
    for j in range(m):
        words[j] = ids[kept[j]]
    for j in range(m):
        radius[j] = 1 + next_below(state, window)
    return words, kept[:m].copy(), radius


@njit(cache=True, nogil=True)
def build_context(words, i, b, ctx):
    n = words.shape[0]
    lo = max(0, i - b)
    hi = min(n, i + b + 1)
    c = 0
    for j in range(lo, hi):
        if j != i:
            ctx[c] = words[j]
            c += 1
    return c


@njit(cache=True, nogil=True)
def hidden(ctx, n_ctx, doc_vec, w_in, h):
    dim = h.shape[0]
    for d in range(dim):
        h[d] = doc_vec[d]
    for c in range(n_ctx):
        row = w_in[ctx[c]]
        for d in range(dim):
            h[d] += row[d]
    inv = 1.0 / (n_ctx + 1)
    for d in range(dim):
        h[d] *= inv


@njit(cache=True, nogil=True)
def apply_example(ctx, n_ctx, doc_vec, target, negs, w_in, w_out, lr, h, neu, coef, update_words):
    """One SGD step on a single example; returns the loss before the step.

    Every gradient is taken at the pre-step parameters, so the update equals
    ``-lr * grad`` exactly, repeated rows included. The output coefficient
    uses the clipped dot product.
    """
    dim = h.shape[0]
    k = negs.shape[0]
    hidden(ctx, n_ctx, doc_vec, w_in, h)
    loss = 0.0
    for j in range(k + 1):
        o = target if j == 0 else negs[j - 1]
        row = w_out[o]
        f = 0.0
        for d in range(dim):
            f += h[d] * row[d]
        if f > MAX_DOT:
            f = MAX_DOT
        elif f < -MAX_DOT:
            f = -MAX_DOT
        s = 1.0 / (1.0 + math.exp(-f))
        if j == 0:
            loss += log1pexp(-f)
            coef[j] = 1.0 - s
        else:
            loss += log1pexp(f)
            coef[j] = -s
    for d in range(dim):
        neu[d] = 0.0
    for j in range(k + 1):
        o = target if j == 0 else negs[j - 1]
        row = w_out[o]
        g = coef[j]
        for d in range(dim):
            neu[d] += g * row[d]
    if update_words:
        for j in range(k + 1):
            o = target if j == 0 else negs[j - 1]
            row = w_out[o]
            g = lr * coef[j]
            for d in range(dim):
                row[d] += g * h[d]
    scale = lr / (n_ctx + 1)
    for d in range(dim):
        doc_vec[d] += scale * neu[d]
    if update_words:
        for c in range(n_ctx):
            row = w_in[ctx[c]]
            for d in range(dim):
                row[d] += scale * neu[d]
    return loss


@njit(cache=True, nogil=True)
def train_documents(order, flat_ids, offsets, w_in, w_out, w_doc, cumulative, keep_prob,
                    window, k, lr0, lr_min, progress, total_planned, state, update_words):
    """Train over the documents in ``order``.

    ``progress[0]`` counts in-vocabulary tokens consumed (shared between
    workers); the learning rate decays linearly in it. Returns
    (loss sum, example count).
    """
    dim = w_in.shape[1]
    h = np.empty(dim, dtype=np.float64)
    neu = np.empty(dim, dtype=np.float64)
    coef = np.empty(k + 1, dtype=np.float64)
    negs = np.empty(k, dtype=np.int64)
    ctx = np.empty(2 * window, dtype=np.int64)
    loss_sum = 0.0
    n_examples = 0
    for doc in order:
        ids = flat_ids[offsets[doc]:offsets[doc + 1]]
        words, pos, radius = extract_positions(ids, keep_prob, window, state)
        base = progress[0]
        doc_vec = w_doc[doc]
        for i in range(words.shape[0]):
            n_ctx = build_context(words, i, radius[i], ctx)
            if n_ctx == 0:
                continue
            lr = lr0 * (1.0 - (base + pos[i]) / total_planned)
            if lr < lr_min:
                lr = lr_min
            target = words[i]
            for j in range(k):
                negs[j] = draw_negative(cumulative, target, state)
            loss_sum += apply_example(ctx, n_ctx, doc_vec, target, negs, w_in, w_out, lr,
                                      h, neu, coef, update_words)
            n_examples += 1
        progress[0] += ids.shape[0]
    return loss_sum, n_examples
