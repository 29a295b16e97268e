"""JSON checkpoints for neural predictors.

Parameters are stored as flat float lists; Python's shortest round-trip float
repr makes reloading bit-exact for both float32 and float64 weights.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from chordlab.errors import CorruptCheckpoint, VersionMismatch

FORMAT_VERSION = 1


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, tuple):
        return list(v)
    return v


def checkpoint_dict(model, features=None, vocabs=None):
    net = model.network_
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "hyperparams": {k: _jsonable(v) for k, v in model.get_params().items()},
        "vocab_sizes": _jsonable(model.vocab_),
        "features": list(features) if features is not None else None,
        "vocabs": {f: list(toks) for f, toks in vocabs.items()} if vocabs else None,
        "dtype": str(net.parameters()[0].data.dtype),
        "params": [{"name": name, "shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
                   for name, p in net.named_parameters()],
    }


def save_checkpoint(model, path, features=None, vocabs=None):
    """Write ``model`` to ``path``; ``vocabs`` maps feature name -> token list."""
    Path(path).write_text(json.dumps(checkpoint_dict(model, features, vocabs)), encoding="utf-8")


def from_checkpoint_dict(doc):
    from chordlab.neural.estimators import NEURAL_KINDS

    if not isinstance(doc, dict) or "kind" not in doc or "type" in doc:
        raise VersionMismatch("document is not a neural checkpoint")
    if doc.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported checkpoint version {doc.get('format_version')!r}")
    kind = doc["kind"]
    if kind not in NEURAL_KINDS:
        raise VersionMismatch(f"checkpoint kind {kind!r} is not a neural model")
    try:
        cls = NEURAL_KINDS[kind]
        params = dict(doc["hyperparams"])
        for key in ("vocab_sizes",):
            if params.get(key) is not None:
                params[key] = tuple(params[key])
        model = cls(**params)
        vocab = doc["vocab_sizes"]
        model.init_network(tuple(vocab) if isinstance(vocab, list) else int(vocab))
        dtype = np.dtype(doc["dtype"])
        state = {p["name"]: np.asarray(p["data"], dtype=dtype).reshape(p["shape"]) for p in doc["params"]}
        model.network_.astype(dtype)
        model.network_.load_state_dict(state)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"malformed checkpoint: {exc}") from None
    model.features_ = tuple(doc["features"]) if doc.get("features") else None
    model.vocab_tokens_ = doc.get("vocabs")
    return model


def load_checkpoint(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from None
    return from_checkpoint_dict(doc)
