import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stylo.corpus import AuthorDocument
from stylo.index import build_index
from stylo.pvdm import (
    DegenerateCorpusError,
    OutOfVocabularyError,
    TrainConfig,
    TrainingExample,
    example_gradients,
    example_loss,
    extract_examples,
    forward_hidden,
    infer_vector,
    init_model,
    sgd_step,
    train,
)
from stylo.rng import make_rng
from stylo.vocab import SubsamplePolicy, Vocabulary, keep_probabilities

from conftest import finite_difference_grads, random_model, rel_err
from oracles import SplitMix64, mean_loss_reference, window_examples

LN2 = math.log(2.0)


def _vocab(n=10):
    return Vocabulary.from_counts({f"w{i}": 100 - i for i in range(n)}, 1)


def _example_and_negs(rng, model, max_ctx=6, k=5):
    n_words = len(model.vocab)
    target = int(rng.integers(n_words))
    ctx = tuple(int(x) for x in rng.integers(0, n_words, int(rng.integers(1, max_ctx + 1))))
    negs = [int(x) for x in rng.choice([w for w in range(n_words) if w != target], k)]
    return TrainingExample(int(rng.integers(len(model.doc_keys))), target, ctx), negs


class TestConfig:
    @pytest.mark.parametrize("bad", [
        dict(epochs=0), dict(dim=1), dict(window=0), dict(negatives=0), dict(lr0=0.0),
        dict(lr_min=0.5, lr0=0.1), dict(workers=0), dict(min_count=0), dict(subsample=0.0),
    ])
    def test_bounds(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)

    def test_dict_round_trip(self):
        cfg = TrainConfig(dim=7, subsample=None)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestInit:
    def test_ranges(self):
        cfg = TrainConfig(dim=12, seed=7)
        m = init_model(_vocab(), ["a", "b", "c"], cfg)
        bound = 0.5 / 12
        assert np.abs(m.w_in).max() <= bound * (1 + 1e-6)
        assert np.abs(m.w_doc).max() <= bound * (1 + 1e-6)
        assert not m.w_out.any()
        assert m.w_in.shape == (10, 12) and m.w_doc.shape == (3, 12)

    def test_seed_reproducible(self):
        cfg = TrainConfig(dim=12, seed=7)
        a = init_model(_vocab(), ["a", "b"], cfg)
        b = init_model(_vocab(), ["a", "b"], cfg)
        assert a.w_in.tobytes() == b.w_in.tobytes() and a.w_doc.tobytes() == b.w_doc.tobytes()

    def test_preconditions(self):
        with pytest.raises(ValueError):
            init_model(Vocabulary.from_counts({"a": 1}, 1), ["d"], TrainConfig())
        with pytest.raises(ValueError):
            init_model(_vocab(), [], TrainConfig())


class TestExtractExamples:
    def test_window_one(self):
        v = Vocabulary.from_counts({"w0": 3, "w1": 2, "w2": 1}, 1)
        ex = list(extract_examples(["w0", "w1", "w2"], 0, v, SubsamplePolicy(None), 1, make_rng(0)))
        assert [(e.target, e.context) for e in ex] == [(0, (1,)), (1, (0, 2)), (2, (1,))]

    def test_single_token(self):
        v = Vocabulary.from_counts({"a": 3, "b": 2}, 1)
        assert list(extract_examples(["a"], 0, v, SubsamplePolicy(None), 5, make_rng(0))) == []

    def test_oov_dropped(self):
        v = Vocabulary.from_counts({"a": 3, "b": 2}, 1)
        ex = list(extract_examples(["a", "zzz", "b"], 0, v, SubsamplePolicy(None), 1, make_rng(0)))
        assert [(e.target, e.context) for e in ex] == [(0, (1,)), (1, (0,))]

    @pytest.mark.parametrize("threshold", [None, 0.02])
    def test_matches_reference_window_rule(self, threshold):
        rnd = np.random.default_rng(3)
        counts = {f"w{i}": int(c) for i, c in enumerate(rnd.integers(1, 400, 25))}
        v = Vocabulary.from_counts(counts, 1)
        tokens = [f"w{i}" for i in rnd.integers(0, 25, 50)]
        policy = SubsamplePolicy(threshold)
        state = make_rng(42)
        oracle_rng = SplitMix64(int(state[0]))
        got = [(e.target, e.context) for e in extract_examples(tokens, 0, v, policy, 5, state)]
        keep = keep_probabilities(v, policy).tolist()
        expected = window_examples([v.word_to_id[t] for t in tokens], keep, 5, oracle_rng)
        assert got == expected
        assert len(expected) > 10
        if threshold is not None:
            assert any(p < 1 for p in keep)


class TestForward:
    def test_zero_rows(self):
        m = init_model(_vocab(), ["d"], TrainConfig(dim=4))
        m.w_in[:] = 0
        m.w_doc[:] = 0
        assert not forward_hidden([1, 2], 0, m).any()

    def test_two_term_mean(self):
        m = init_model(_vocab(), ["d"], TrainConfig(dim=4), dtype=np.float64)
        m.w_in[3] = [1, 2, 3, 4]
        m.w_doc[0] = [3, 2, 1, 0]
        np.testing.assert_array_equal(forward_hidden([3], 0, m), [2, 2, 2, 2])

    def test_random_mean(self):
        rng = np.random.default_rng(0)
        m = random_model(rng, dim=8)
        ctx = [4, 9, 4, 17]
        expected = np.mean(np.vstack([m.w_in[4], m.w_in[9], m.w_in[4], m.w_in[17], m.w_doc[2]]), axis=0)
        np.testing.assert_allclose(forward_hidden(ctx, 2, m), expected, rtol=1e-14)


class TestLoss:
    def test_zero_output_rows(self):
        m = init_model(_vocab(), ["d"], TrainConfig(dim=4))
        h = forward_hidden([1], 0, m)
        assert example_loss(h, 0, [1, 2, 3, 4, 5], m) == pytest.approx(6 * LN2, abs=1e-12)
        assert 6 * LN2 == pytest.approx(4.158883, abs=1e-6)

    def test_clipped_minimum(self):
        m = init_model(_vocab(), ["d"], TrainConfig(dim=2), dtype=np.float64)
        h = np.array([1.0, 0.0])
        m.w_out[0] = [100.0, 0]
        m.w_out[1:4] = [-100.0, 0]
        floor = 4 * math.log1p(math.exp(-6.0))
        assert example_loss(h, 0, [1, 2, 3], m) == pytest.approx(floor, rel=1e-12)
        # anything less extreme cannot go lower
        m.w_out[0] = [5.9, 0]
        assert example_loss(h, 0, [1, 2, 3], m) > floor

    def test_matches_high_precision(self):
        rng = np.random.default_rng(8)
        m = random_model(rng, dim=8, k=3, scale=1.0)
        h = rng.normal(0, 1.0, 8)
        negs = [5, 6, 7]
        ref = mean_loss_reference(h, m.w_out[2], [m.w_out[n] for n in negs])
        assert example_loss(h, 2, negs, m) == pytest.approx(float(ref), rel=1e-12)


class TestGradients:
    def test_against_finite_differences(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            m = random_model(rng, n_words=int(rng.integers(6, 50)), dim=int(rng.integers(2, 17)))
            ex, negs = _example_and_negs(rng, m)
            _, g_in, g_out, g_doc = example_gradients(ex, negs, m)
            f_in, f_out, f_doc = finite_difference_grads(m, ex, negs)
            for w in f_in:
                assert rel_err(g_in[w], f_in[w]) < 1e-4
            for o in f_out:
                assert rel_err(g_out[o], f_out[o]) < 1e-4
            assert rel_err(g_doc, f_doc) < 1e-4

    def test_sgd_step_applies_negative_gradient(self):
        rng = np.random.default_rng(5)
        m = random_model(rng, dim=6)
        ex = TrainingExample(1, 3, (4, 4, 8))
        negs = [0, 0, 9, 11, 12]
        _, g_in, g_out, g_doc = example_gradients(ex, negs, m)
        before = (m.w_in.copy(), m.w_out.copy(), m.w_doc.copy())
        sgd_step(ex, m, 0.1, negatives=negs)
        for w, g in g_in.items():
            np.testing.assert_allclose(m.w_in[w] - before[0][w], -0.1 * g, atol=1e-14)
        for o, g in g_out.items():
            np.testing.assert_allclose(m.w_out[o] - before[1][o], -0.1 * g, atol=1e-14)
        np.testing.assert_allclose(m.w_doc[1] - before[2][1], -0.1 * g_doc, atol=1e-14)


class TestSgdStep:
    def test_zero_lr(self):
        rng = np.random.default_rng(1)
        m = random_model(rng)
        snap = [x.copy() for x in (m.w_in, m.w_out, m.w_doc)]
        sgd_step(TrainingExample(0, 1, (2, 3)), m, 0.0, make_rng(1))
        for a, b in zip(snap, (m.w_in, m.w_out, m.w_doc)):
            assert a.tobytes() == b.tobytes()

    def test_decreases_loss(self):
        rng = np.random.default_rng(2)
        m = random_model(rng)
        ex = TrainingExample(0, 1, (2, 3, 7))
        negs = [4, 5, 6, 8, 9]

        def loss():
            return example_loss(forward_hidden(ex.context, 0, m), ex.target, negs, m)

        before = loss()
        step_loss, _ = sgd_step(ex, m, 0.01, negatives=negs)
        assert step_loss == pytest.approx(before, rel=1e-12)
        assert loss() < before

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_locality(self, seed):
        rng = np.random.default_rng(seed)
        m = random_model(rng, n_words=40, n_docs=5)
        ex, _ = _example_and_negs(rng, m)
        snap = [x.copy() for x in (m.w_in, m.w_out, m.w_doc)]
        _, negs = sgd_step(ex, m, 0.05, make_rng(seed))
        assert ex.target not in negs.tolist()
        touched_in = set(ex.context)
        touched_out = {ex.target, *negs.tolist()}
        for r in range(40):
            if r not in touched_in:
                assert m.w_in[r].tobytes() == snap[0][r].tobytes()
            if r not in touched_out:
                assert m.w_out[r].tobytes() == snap[1][r].tobytes()
        for d in range(5):
            if d != ex.doc_index:
                assert m.w_doc[d].tobytes() == snap[2][d].tobytes()


class TestTrain:
    def test_first_example_loss_is_k_plus_one_ln2(self, small_docs, small_config):
        m = init_model(Vocabulary.from_counts({"a": 5, "b": 4, "c": 2}, 1), ["d"], small_config)
        loss, _ = sgd_step(TrainingExample(0, 0, (1, 2)), m, small_config.lr0, make_rng(0))
        assert loss == pytest.approx(6 * LN2, abs=1e-9)

    def test_mean_loss_trend(self, small_model):
        losses = small_model.epoch_losses
        assert len(losses) == 20
        assert losses[-1] < losses[0]
        # epoch 1 starts at the zero-init loss and can only have moved down from there
        assert losses[0] < 6 * LN2

    def test_shapes_and_finite(self, small_model, small_docs):
        m = small_model
        assert m.w_in.shape == m.w_out.shape == (len(m.vocab), 16)
        assert m.w_doc.shape == (len(small_docs), 16)
        assert m.doc_keys == [d.key for d in small_docs]
        for x in (m.w_in, m.w_out, m.w_doc):
            assert np.isfinite(x).all() and x.dtype == np.float32

    def test_deterministic(self, small_docs, small_config):
        a = train(small_docs, small_config)
        b = train(small_docs, small_config)
        for x, y in ((a.w_in, b.w_in), (a.w_out, b.w_out), (a.w_doc, b.w_doc)):
            assert x.tobytes() == y.tobytes()
        assert a.epoch_losses == b.epoch_losses

    def test_adversarial_inputs_stay_finite(self):
        docs = [AuthorDocument("rep", ["x"] * 500, 1), AuthorDocument("one", ["y"], 1),
                AuthorDocument("mix", ["x", "y"] * 100, 1)]
        cfg = TrainConfig(dim=8, epochs=50, min_count=1, subsample=None, seed=1)
        m = train(docs, cfg)
        for x in (m.w_in, m.w_out, m.w_doc):
            assert np.isfinite(x).all()

    def test_degenerate_corpus(self):
        docs = [AuthorDocument("a", ["x"], 1), AuthorDocument("b", ["y"], 1)]
        with pytest.raises(DegenerateCorpusError):
            train(docs, TrainConfig(dim=4, min_count=1))

    def test_disjoint_authors_separate(self):
        from conftest import synth_documents
        docs = synth_documents(n_authors=2, posts_per_author=300, vocab_shared=1, vocab_per_author=100,
                               author_weight=1.0, style_sigma=0.0, mention_rate=0.0, seed=2)
        m = train(docs, TrainConfig(dim=16, epochs=20, min_count=1, seed=4))
        idx = build_index(m)

        def cos(a, b):
            return float(idx.vectors[idx.row[a]] @ idx.vectors[idx.row[b]])

        assert cos("u0_A", "u1_A") < cos("u0_A", "u0_B")
        assert cos("u0_A", "u1_B") < cos("u0_A", "u0_B")

    def test_parallel_workers(self, small_docs, small_config):
        from dataclasses import replace
        from stylo.evaluate import split_half_eval
        m = train(small_docs, replace(small_config, workers=3))
        assert np.isfinite(m.w_doc).all()
        assert len(m.epoch_losses) == small_config.epochs
        assert split_half_eval(build_index(m)).accuracy >= 0.8


class TestInfer:
    def test_frozen_and_deterministic(self, small_model, small_docs):
        w_in, w_out, w_doc = (small_model.w_in.tobytes(), small_model.w_out.tobytes(), small_model.w_doc.tobytes())
        a = infer_vector(small_docs[0].tokens, small_model, steps=5, seed=11)
        b = infer_vector(small_docs[0].tokens, small_model, steps=5, seed=11)
        assert small_model.w_in.tobytes() == w_in
        assert small_model.w_out.tobytes() == w_out
        assert small_model.w_doc.tobytes() == w_doc
        assert a.tobytes() == b.tobytes()
        assert a.shape == (16,)

    def test_own_tokens_rank_author_first(self, small_model, small_docs):
        idx = build_index(small_model)
        hits = 0
        for doc in small_docs[::2]:
            vec = infer_vector(doc.tokens, small_model, steps=20, seed=1)
            top = idx.query_vector(vec, 2)
            hits += doc.key[:-2] in {k[:-2] for k, _ in top}
        assert hits >= 0.8 * len(small_docs[::2])

    def test_all_oov(self, small_model):
        with pytest.raises(OutOfVocabularyError):
            infer_vector(["never-seen-1", "never-seen-2"], small_model)
