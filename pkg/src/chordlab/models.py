"""Registry of all predictor kinds and a format-sniffing model loader."""

from __future__ import annotations

import inspect
import json
from pathlib import Path

from chordlab import ngram
from chordlab.errors import CorruptCheckpoint, VersionMismatch
from chordlab.neural.checkpoint import from_checkpoint_dict, save_checkpoint
from chordlab.neural.estimators import NEURAL_KINDS

STATISTICAL_KINDS = {
    "markov": ngram.MarkovPredictor,
    "vom": ngram.VariableOrderMarkovPredictor,
}
MODEL_KINDS = {**STATISTICAL_KINDS, **NEURAL_KINDS}


def model_class(kind):
    try:
        return MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; valid kinds: {', '.join(MODEL_KINDS)}") from None


def accepted_params(kind):
    return [p for p in inspect.signature(model_class(kind).__init__).parameters if p != "self"]


def make_model(kind, **params):
    """Instantiate ``kind``, silently dropping parameters it does not accept."""
    cls = model_class(kind)
    names = set(accepted_params(kind))
    return cls(**{k: v for k, v in params.items() if k in names and v is not None})


def is_multi_feature(kind):
    return model_class(kind).multi_feature


def save_model(model, path, corpus=None):
    if model.kind in STATISTICAL_KINDS:
        vocab = None
        if corpus is not None:
            vocab = corpus.vocabs["chord" if "chord" in corpus.features else corpus.features[0]].tokens
        doc = model.to_dict(vocab)
        if corpus is not None:
            doc["features"] = list(corpus.features)
        Path(path).write_text(json.dumps(doc), encoding="utf-8")
    else:
        features = corpus.features if corpus is not None else None
        vocabs = {f: corpus.vocabs[f].tokens for f in corpus.features} if corpus is not None else None
        save_checkpoint(model, path, features, vocabs)


def load_model(path):
    """Load any saved predictor (Markov, VOM or neural)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from None
    if isinstance(doc, dict) and "type" in doc:
        model = ngram.from_dict(doc)
        model.features_ = tuple(doc["features"]) if doc.get("features") else None
        model.vocab_tokens_ = None
        if doc.get("vocab") is not None:
            feature = "chord"
            if model.features_ and "chord" not in model.features_:
                feature = model.features_[0]
            model.vocab_tokens_ = {feature: list(doc["vocab"])}
        return model
    if isinstance(doc, dict) and doc.get("kind") == "w2v":
        raise VersionMismatch("file holds chord embeddings, not a predictor")
    return from_checkpoint_dict(doc)
