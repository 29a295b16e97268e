import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import BaseEstimator

from chordlab.corpus import make_windows
from chordlab.embeddings import ChordEmbeddings, cosine_similarity, train_embeddings, w2v_similarity
from chordlab.errors import CorruptCheckpoint, EmptyCorpus, EmptyInput, LengthMismatch, VersionMismatch
from chordlab.evaluation import PROB_FLOOR, accuracy, evaluate, mean_similarity, perplexity
from chordlab.ngram import fit_first_order
from chordlab.synthetic import cyclic_corpus
from oracles import naive_perplexity


class FixedProba(BaseEstimator):
    """Returns a preset probability table regardless of input."""

    def __init__(self, probs=None):
        self.probs = probs

    def predict_proba(self, X):
        return np.asarray(self.probs)[: len(X)]


def _identity_embeddings(V):
    return ChordEmbeddings(np.eye(V))


# ---------------------------------------------------------------- accuracy


def test_accuracy_examples():
    t = np.arange(10)
    p = t.copy()
    p[3:] = 99
    assert accuracy(p, t) == 0.3
    assert accuracy(t, t) == 1.0
    assert accuracy(t + 100, t) == 0.0


def test_accuracy_errors():
    with pytest.raises(LengthMismatch):
        accuracy([1, 2], [1])
    with pytest.raises(EmptyInput):
        accuracy([], [])


@given(st.lists(st.integers(0, 5), min_size=1, max_size=50), st.randoms())
def test_accuracy_is_permutation_equivariant(targets, random):
    preds = [(t + (i % 3 == 0)) % 6 for i, t in enumerate(targets)]
    order = list(range(len(targets)))
    random.shuffle(order)
    assert accuracy([preds[i] for i in order], [targets[i] for i in order]) == accuracy(preds, targets)
    assert accuracy(targets, targets) == 1.0


# ---------------------------------------------------------------- perplexity


def test_perplexity_examples():
    assert perplexity([1.0, 1.0]) == 1.0
    assert perplexity([0.1] * 7) == pytest.approx(10.0, abs=1e-9)
    assert perplexity([0.5, 0.25]) == pytest.approx(math.sqrt(8), abs=1e-6)


def test_perplexity_clamps_and_counts():
    value, clamped = perplexity([0.0, 1.0], return_clamped=True)
    assert clamped == 1
    assert value == pytest.approx(math.sqrt(1 / PROB_FLOOR), rel=1e-9)
    with pytest.raises(EmptyInput):
        perplexity([])


@given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=40))
def test_perplexity_is_exp_cross_entropy(ps):
    assert perplexity(ps) == pytest.approx(naive_perplexity(ps), rel=1e-9)


# ---------------------------------------------------------------- similarity


def test_similarity_examples():
    emb = ChordEmbeddings(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [2.0, 0.0]]))
    assert w2v_similarity(0, 1, emb) == 1.0
    assert w2v_similarity(0, 2, emb) == 0.0
    assert w2v_similarity(0, 3, emb) == 0.0
    assert w2v_similarity(0, 4, emb) == pytest.approx(1.0)
    assert w2v_similarity(2, 2, emb) == 1.0


def test_out_of_table_tokens_use_unk():
    emb = ChordEmbeddings(np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]))
    assert w2v_similarity(2, 50, emb) == pytest.approx(0.8)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_similarity_symmetric_and_bounded(u, v):
    emb = ChordEmbeddings(np.array([u, v], dtype=np.float64))
    s = w2v_similarity(0, 1, emb)
    assert s == w2v_similarity(1, 0, emb)
    assert 0.0 <= s <= 1.0
    if np.any(emb.vectors[0]):
        assert cosine_similarity(emb.vectors[0], emb.vectors[0]) == 1.0


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=40),
       st.integers(0, 2**31))
def test_similarity_dominates_accuracy(pairs, seed):
    emb = ChordEmbeddings(np.random.default_rng(seed).normal(size=(6, 4)))
    preds, targets = zip(*pairs)
    assert mean_similarity(preds, targets, emb) >= accuracy(preds, targets)


# ---------------------------------------------------------------- embeddings


def _substitutable_songs(n=60):
    rng = np.random.default_rng(0)
    songs = []
    for _ in range(n):
        songs.append([3, 4 + int(rng.integers(2)), 6, 3, 4 + int(rng.integers(2)), 6])   # A=4, B=5
        songs.append([7, 8, 9, 7, 8, 9])                                                   # C=8
    return songs


def test_substitutable_chords_are_closer():
    wins = 0
    for seed in range(5):
        emb = train_embeddings(_substitutable_songs(), 10, dim=16, epochs=5, seed=seed)
        wins += w2v_similarity(4, 5, emb) > w2v_similarity(4, 8, emb)
    assert wins >= 3


def test_singleton_vocabulary():
    emb = train_embeddings([[3, 3, 3]], 4, dim=8, seed=0)
    assert w2v_similarity(3, 3, emb) == 1.0
    assert np.linalg.norm(emb.vector(3)) > 0


def test_embeddings_are_deterministic():
    a = train_embeddings(_substitutable_songs(10), 10, seed=3)
    b = train_embeddings(_substitutable_songs(10), 10, seed=3)
    c = train_embeddings(_substitutable_songs(10), 10, seed=4)
    assert np.array_equal(a.vectors, b.vectors)
    assert not np.array_equal(a.vectors, c.vectors)


def test_vectors_finite_and_nonzero():
    emb = train_embeddings(_substitutable_songs(10), 10, seed=0)
    assert np.all(np.isfinite(emb.vectors))
    assert np.all(np.linalg.norm(emb.vectors, axis=1) > 0)


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        train_embeddings([[], []], 5)


def test_embedding_file_round_trip(tmp_path):
    emb = train_embeddings(_substitutable_songs(5), 10, dim=4, seed=0, tokens=[f"t{i}" for i in range(10)])
    emb.save(tmp_path / "e.json")
    back = ChordEmbeddings.load(tmp_path / "e.json")
    assert np.array_equal(back.vectors, emb.vectors) and back.tokens == emb.tokens
    (tmp_path / "bad.json").write_text('{"kind": "lstm", "format_version": 1}')
    with pytest.raises(VersionMismatch):
        ChordEmbeddings.load(tmp_path / "bad.json")
    (tmp_path / "cut.json").write_text('{"kind": "w2v"')
    with pytest.raises(CorruptCheckpoint):
        ChordEmbeddings.load(tmp_path / "cut.json")


# ---------------------------------------------------------------- evaluate


def test_oracle_model():
    y = np.array([3, 4, 5, 3])
    probs = np.full((4, 6), 0.04)
    probs[np.arange(4), y] = 0.8
    rep = evaluate(FixedProba(probs), np.zeros((4, 2)), y, _identity_embeddings(6))
    assert rep.accuracy == 1.0 and rep.similarity == 1.0
    assert rep.perplexity == pytest.approx(1 / 0.8)
    assert rep.n == 4 and rep.n_clamped == 0


def test_uniform_model_over_twenty():
    n, V = 10000, 20
    y = np.random.default_rng(0).integers(0, V, size=n)
    rep = evaluate(FixedProba(np.full((n, V), 1.0 / V)), np.zeros((n, 1)), y,
                   ChordEmbeddings(np.random.default_rng(1).normal(size=(V, 8))))
    assert abs(rep.perplexity - 20.0) <= 1e-6
    assert rep.similarity >= rep.accuracy


def test_uniform_random_guesses_hit_one_in_twenty():
    n, V = 10000, 20
    rng = np.random.default_rng(0)
    y = rng.integers(0, V, size=n)
    guesses = rng.integers(0, V, size=n)
    assert abs(accuracy(guesses, y) - 1 / V) <= 0.02


def test_markov_on_order_one_grammar():
    c = cyclic_corpus(seed=0)
    w = make_windows(c, 4)
    emb = train_embeddings([s[0] for s in c.songs], len(c.vocabs["chord"]), seed=0)
    ppl = []
    for alpha in (1.0, 0.1, 1e-3, 0.0):
        rep = evaluate(fit_first_order(w.single(), w.y, alpha=alpha), w.single(), w.y, emb)
        assert rep.accuracy == 1.0
        ppl.append(rep.perplexity)
    assert ppl == sorted(ppl, reverse=True) and ppl[-1] == 1.0


def test_evaluate_errors():
    with pytest.raises(EmptyInput):
        evaluate(FixedProba(np.zeros((0, 3))), np.zeros((0, 2)), [], _identity_embeddings(3))
    with pytest.raises(LengthMismatch):
        evaluate(FixedProba(np.full((2, 3), 1 / 3)), np.zeros((3, 2)), [0, 1, 2], _identity_embeddings(3))
