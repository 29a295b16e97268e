"""Skip-gram chord embeddings trained with negative sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from chordlab._rng import make_rng
from chordlab.corpus import UNK_ID
from chordlab.errors import CorruptCheckpoint, EmptyCorpus, VersionMismatch

FORMAT_VERSION = 1


@dataclass
class ChordEmbeddings:
    vectors: np.ndarray
    tokens: tuple | None = None

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def vector(self, token_id):
        token_id = int(token_id)
        if not 0 <= token_id < len(self):
            token_id = UNK_ID
        return self.vectors[token_id]

    def similarity(self, a, b):
        return w2v_similarity(a, b, self)

    def to_dict(self):
        return {"format_version": FORMAT_VERSION, "kind": "w2v",
                "tokens": list(self.tokens) if self.tokens is not None else None,
                "params": [{"name": "vectors", "shape": list(self.vectors.shape),
                            "data": self.vectors.reshape(-1).tolist()}]}

    @classmethod
    def from_dict(cls, doc):
        if doc.get("kind") != "w2v" or doc.get("format_version") != FORMAT_VERSION:
            raise VersionMismatch("not a w2v embedding document")
        try:
            p = doc["params"][0]
            vectors = np.asarray(p["data"], dtype=np.float64).reshape(p["shape"])
        except (KeyError, IndexError, ValueError) as exc:
            raise CorruptCheckpoint(f"malformed embedding document: {exc}") from None
        tokens = tuple(doc["tokens"]) if doc.get("tokens") is not None else None
        return cls(vectors, tokens)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path):
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorruptCheckpoint(str(exc)) from None
        return cls.from_dict(doc)


def cosine_similarity(u, v):
    if np.array_equal(u, v) and np.any(u):
        return 1.0
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def w2v_similarity(c1, c2, emb):
    """``max(1 - cosine_distance, 0)`` between two token ids' vectors, in [0, 1].

    Identical ids score exactly 1; ids outside the table use UNK's vector.
    """
    if int(c1) == int(c2):
        return 1.0
    s = cosine_similarity(emb.vector(c1), emb.vector(c2))
    return min(max(s, 0.0), 1.0)


def _skipgram_pairs(sequences, window):
    centers, contexts = [], []
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        T = len(seq)
        for off in range(1, window + 1):
            if T > off:
                centers += [seq[:-off], seq[off:]]
                contexts += [seq[off:], seq[:-off]]
    if not centers:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def train_embeddings(sequences, vocab_size, dim=32, window=2, epochs=5, negatives=5,
                     lr=0.025, batch_size=64, seed=0, tokens=None):
    """Train skip-gram vectors on id sequences.

    Negatives are drawn from the unigram distribution raised to 0.75. The
    learning rate decays linearly to 1e-4 of its start value. Deterministic
    for a fixed seed.
    """
    sequences = [np.asarray(s, dtype=np.int64) for s in sequences]
    if not any(len(s) for s in sequences):
        raise EmptyCorpus("no tokens to train embeddings on")
    rng = make_rng(seed, 0xE3B)
    V = int(vocab_size)
    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(V, dim))
    w_out = np.zeros((V, dim))
    counts = np.bincount(np.concatenate(sequences), minlength=V).astype(np.float64)[:V]
    noise = counts ** 0.75
    noise /= noise.sum()
    centers, contexts = _skipgram_pairs(sequences, window)
    n = len(centers)
    total_steps = max(epochs * ((n + batch_size - 1) // batch_size), 1)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            c, o = centers[idx], contexts[idx]
            neg = rng.choice(V, size=(len(idx), negatives), p=noise)
            alpha = lr * max(1e-4, 1.0 - step / total_steps)
            step += 1
            v = w_in[c]                                   # (b, d)
            targets = np.concatenate([o[:, None], neg], axis=1)
            u = w_out[targets]                            # (b, 1+k, d)
            score = np.einsum("bkd,bd->bk", u, v)
            label = np.zeros_like(score)
            label[:, 0] = 1.0
            g = (0.5 * (1.0 + np.tanh(0.5 * score)) - label) * alpha  # d(loss)/d(score)
            grad_v = np.einsum("bk,bkd->bd", g, u)
            grad_u = g[:, :, None] * v[:, None, :]
            np.add.at(w_out, targets.reshape(-1), -grad_u.reshape(-1, dim))
            np.add.at(w_in, c, -grad_v)
    return ChordEmbeddings(w_in, tuple(tokens) if tokens is not None else None)
