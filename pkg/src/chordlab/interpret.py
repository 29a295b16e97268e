"""Occlusion analysis: how much each context position (and feature) moves the
probability of the true next chord when it is replaced by the MASK token.

Only samples the unmasked model already predicts correctly are used:

    influence[p] = (1/N) * sum_i |P_orig,i - P_masked,i(p)|
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from chordlab.corpus import MASK_ID
from chordlab.errors import NoCorrectPredictions, NotMultiFeature
from chordlab.validation import check_targets


@dataclass
class InfluenceProfile:
    offsets: np.ndarray      # -L .. -1
    influence: np.ndarray
    n: int

    def rows(self):
        return [(int(o), float(v)) for o, v in zip(self.offsets, self.influence)]


@dataclass
class AttributionGrid:
    features: tuple
    offsets: np.ndarray
    influence: np.ndarray    # (n_features, L)
    n: int

    def rows(self):
        return [(f, int(o), float(self.influence[i, j]))
                for i, f in enumerate(self.features) for j, o in enumerate(self.offsets)]

    def argmax(self):
        """(feature, offset) of the largest cell."""
        i, j = np.unravel_index(int(np.argmax(self.influence)), self.influence.shape)
        return self.features[i], int(self.offsets[j])


def _true_probs(model, X, y):
    probs = model.predict_proba(X)
    return probs[np.arange(len(y)), y]


def _correct_subset(model, X, y):
    X = np.asarray(X, dtype=np.int64)
    y = check_targets(y, len(X))
    probs = model.predict_proba(X)
    correct = np.argmax(probs, axis=1) == y
    if not correct.any():
        raise NoCorrectPredictions("the model predicts none of the samples correctly")
    return X[correct], y[correct], probs[correct, y[correct]]


def _masked_delta(model, Xc, yc, p_orig, position, lane=None):
    Xm = Xc.copy()
    if lane is None:
        Xm[:, position] = MASK_ID           # every feature lane for 3-D inputs
    else:
        Xm[:, position, lane] = MASK_ID
    return float(np.mean(np.abs(p_orig - _true_probs(model, Xm, yc))))


def position_influence(model, X, y):
    """Influence of each context offset -L..-1 on the true-target probability.

    For multi-feature inputs every feature at the offset is masked together.
    """
    Xc, yc, p_orig = _correct_subset(model, X, y)
    L = Xc.shape[1]
    values = np.array([_masked_delta(model, Xc, yc, p_orig, j) for j in range(L)])
    return InfluenceProfile(np.arange(-L, 0), values, len(yc))


def feature_attribution(model, X, y, features=None):
    """Per (feature, offset) influence, masking one feature lane at a time."""
    X = np.asarray(X)
    if not getattr(model, "multi_feature", False) or X.ndim != 3 or X.shape[2] < 2:
        raise NotMultiFeature("feature attribution needs a model reading two or more features")
    Xc, yc, p_orig = _correct_subset(model, X, y)
    _, L, F = Xc.shape
    if features is None:
        features = getattr(model, "features_", None) or tuple(f"feature{i}" for i in range(F))
    grid = np.array([[_masked_delta(model, Xc, yc, p_orig, j, lane=f) for j in range(L)]
                     for f in range(F)])
    return AttributionGrid(tuple(features), np.arange(-L, 0), grid, len(yc))


def _header(obj):
    return ["position", "influence"] if isinstance(obj, InfluenceProfile) else \
        ["feature", "position", "influence"]


def export_figure_data(obj, path, format=None):
    """Write a profile or grid as CSV or JSON (format inferred from the suffix).

    Rows are ordered by position ascending; grids list features in corpus order.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "csv").lower()
    if fmt not in ("csv", "json"):
        raise ValueError(f"unsupported export format {fmt!r}; use csv or json")
    rows = obj.rows()
    if not rows:
        warnings.warn(f"no influence values to export; writing header only to {path}", stacklevel=2)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _header(obj)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows([[*r[:-1], repr(r[-1])] for r in rows])
    else:
        doc = {"type": "profile" if isinstance(obj, InfluenceProfile) else "grid", "n": int(obj.n),
               "columns": header, "rows": [list(r) for r in rows]}
        path.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return path


def load_figure_data(path):
    """Read back a JSON export as a profile or grid."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rows = doc["rows"]
    if doc["type"] == "profile":
        return InfluenceProfile(np.array([r[0] for r in rows], dtype=np.int64),
                                np.array([r[1] for r in rows], dtype=np.float64), doc["n"])
    features = tuple(dict.fromkeys(r[0] for r in rows))
    offsets = np.array(sorted({r[1] for r in rows}), dtype=np.int64)
    grid = np.array([r[2] for r in rows], dtype=np.float64).reshape(len(features), len(offsets))
    return AttributionGrid(features, offsets, grid, doc["n"])


def export_gnuplot(obj, directory, stem="influence"):
    """One whitespace-separated ``position influence`` file per series."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, InfluenceProfile):
        series = {stem: obj.influence}
    else:
        series = {f"{stem}_{f}": obj.influence[i] for i, f in enumerate(obj.features)}
    paths = []
    for name, values in series.items():
        p = directory / f"{name}.dat"
        lines = ["# position influence"] + [f"{int(o)} {float(v)!r}" for o, v in zip(obj.offsets, values)]
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(p)
    return paths
