"""Song-level k-fold cross-validation and random hyperparameter search."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from chordlab._rng import derive_seed, make_rng
from chordlab.corpus import DEFAULT_CONTEXT_LENGTH, make_windows, split_kfold
from chordlab.embeddings import train_embeddings
from chordlab.errors import DivergedLoss, EmptyInput
from chordlab.evaluation import evaluate
from chordlab.train.tracking import RunRecord, record_run

VALIDATION_FRACTION = 0.1
TRANSFORMER_KINDS = {"transformer", "gpt", "multi-transformer", "multi-gpt"}


def _models():
    # deferred import: chordlab.models imports the estimators, which import this package
    from chordlab import models
    return models


def fold_seed(seed, fold):
    return derive_seed(seed, 0xF01D, fold)


def _carve_validation(train_ids, seed, fold):
    """Hold out ~10% of the training songs (at least one) for early stopping."""
    if len(train_ids) < 2:
        return train_ids, train_ids[:0]
    perm = make_rng(seed, 0xC4A7, fold).permutation(train_ids)
    n_val = max(1, int(round(VALIDATION_FRACTION * len(train_ids))))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def run_fold(kind, params, corpus, train_ids, test_ids, fold, seed, context_length=DEFAULT_CONTEXT_LENGTH,
             target_feature="chord", embedding_params=None, checkpoint_path=None):
    """Fit on ``train_ids``, evaluate on ``test_ids``; returns a fold metrics dict."""
    models = _models()
    if set(train_ids.tolist()) & set(test_ids.tolist()):
        raise AssertionError(f"fold {fold}: train and test songs overlap")
    fseed = fold_seed(seed, fold)
    t = corpus.feature_index(target_feature)
    sizes = corpus.vocab_sizes()
    multi = models.is_multi_feature(kind)
    statistical = kind in models.STATISTICAL_KINDS
    fit_ids, val_ids = (train_ids, train_ids[:0]) if statistical else _carve_validation(train_ids, seed, fold)
    train_w = make_windows(corpus, context_length, target_feature, fit_ids)
    test_w = make_windows(corpus, context_length, target_feature, test_ids)
    out = {"fold": fold, "n_train_songs": len(fit_ids), "n_val_songs": len(val_ids),
           "n_test_songs": len(test_ids), "test_songs": test_ids.tolist(), "status": "ok"}
    if len(train_w) == 0 or len(test_w) == 0:
        raise EmptyInput(f"fold {fold}: no windows to train on or evaluate")
    model = models.make_model(kind, **{**params, "seed": fseed, "context_length": context_length,
                                       "vocab_size": sizes[t], "vocab_sizes": tuple(sizes),
                                       "target_feature": t})
    try:
        if statistical:
            model.fit(train_w.single(), train_w.y)
        else:
            val_w = make_windows(corpus, context_length, target_feature, val_ids)
            val_args = (val_w.inputs_for(multi), val_w.y) if len(val_w) else (None, None)
            model.fit(train_w.inputs_for(multi), train_w.y, *val_args)
    except DivergedLoss as exc:
        out.update(status="failed", error=str(exc))
        return out
    emb_params = {"dim": 32, "window": 2, "epochs": 5, **(embedding_params or {})}
    embeddings = train_embeddings([corpus.songs[s][t] for s in train_ids], sizes[t], seed=fseed,
                                  **emb_params)
    report = evaluate(model, test_w.inputs_for(multi), test_w.y, embeddings)
    out.update(report.to_dict())
    if statistical:
        out["n_clamped"] = int(report.n_clamped)
    else:
        out["epochs_run"] = model.result_.epochs_run
    if checkpoint_path is not None:
        Path(checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
        models.save_model(model, checkpoint_path, corpus)
        out["checkpoint"] = str(checkpoint_path)
    return out


def _run_fold_star(args):
    return run_fold(*args[0], **args[1])


def cross_validate(kind, corpus, k=5, params=None, seed=42, context_length=DEFAULT_CONTEXT_LENGTH,
                   target_feature="chord", dataset=None, jobs=1, embedding_params=None,
                   checkpoint_dir=None, trial=None):
    """Song-level k-fold evaluation of one configuration, returned as a RunRecord.

    Neural models hold out part of each training split as validation for early
    stopping; statistical models fit on the whole training split. A diverged
    fold marks the record ``failed`` instead of raising.
    """
    _models().model_class(kind)
    params = dict(params or {})
    start = time.perf_counter()
    folds = split_kfold(corpus, k, seed)
    tests = [set(te.tolist()) for _, te in folds]
    for i in range(len(tests)):
        for j in range(i + 1, len(tests)):
            if tests[i] & tests[j]:
                raise AssertionError("test folds overlap")
    jobs_args = []
    for i, (tr, te) in enumerate(folds):
        ckpt = None
        if checkpoint_dir is not None:
            tag = f"{kind}-seed{seed}" + (f"-trial{trial}" if trial is not None else "")
            ckpt = Path(checkpoint_dir) / f"{tag}-fold{i}.json"
        jobs_args.append(((kind, params, corpus, tr, te, i, seed),
                          {"context_length": context_length, "target_feature": target_feature,
                           "embedding_params": embedding_params, "checkpoint_path": ckpt}))
    if jobs > 1 and len(folds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(folds))) as pool:
            results = list(pool.map(_run_fold_star, jobs_args))
    else:
        results = [_run_fold_star(a) for a in jobs_args]
    record = RunRecord(kind=kind, hyperparams=_clean(params), folds=results, seed=int(seed), k=int(k),
                       dataset=dataset or corpus.name, trial=trial,
                       checkpoints=[r["checkpoint"] for r in results if "checkpoint" in r])
    record.aggregate()
    errors = [r["error"] for r in results if r.get("status") == "failed"]
    if errors:
        record.error = errors[0]
    record.wall_time = time.perf_counter() - start
    return record


def _clean(params):
    out = {}
    for key, v in params.items():
        if isinstance(v, np.integer):
            v = int(v)
        elif isinstance(v, np.floating):
            v = float(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[key] = v
    return out


def _log_uniform(rng, lo, hi):
    if lo == hi:
        return lo
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


@dataclass(frozen=True)
class SearchSpace:
    """Sampling ranges; numeric bounds are inclusive and equal bounds pin a value."""

    n_layers: tuple = (1, 4)
    embed_dim: tuple = (16, 256)
    hidden_dim: tuple = (32, 512)
    lr: tuple = (1e-4, 1e-2)
    n_heads: tuple = (1, 2, 4, 8)
    alpha: tuple = (1e-3, 1.0)
    max_order: tuple = (1, 8)

    def __post_init__(self):
        for name in ("n_layers", "embed_dim", "hidden_dim", "lr", "alpha", "max_order"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"invalid range for {name}: {(lo, hi)}")
        if not self.n_heads or any(h not in (1, 2, 4, 8) for h in self.n_heads):
            raise ValueError("n_heads choices must come from {1, 2, 4, 8}")

    @classmethod
    def fixed(cls, **values):
        """Degenerate space pinning the given hyperparameters."""
        ranges = {k: ((v,) if k == "n_heads" else (v, v)) for k, v in values.items()}
        return cls(**ranges)

    def sample(self, rng, kind):
        """Draw a configuration for ``kind`` (only the hyperparameters it uses)."""
        models = _models()
        if kind == "markov":
            return {"alpha": _log_uniform(rng, *self.alpha)}
        if kind == "vom":
            return {"alpha": _log_uniform(rng, *self.alpha),
                    "max_order": int(rng.integers(self.max_order[0], self.max_order[1] + 1))}
        models.model_class(kind)
        lo, hi = self.embed_dim
        lo8, hi8 = int(math.ceil(lo / 8.0)) * 8, int(hi // 8) * 8
        embed = int(round(_log_uniform(rng, lo, hi) / 8.0)) * 8
        embed = int(lo) if lo8 > hi8 else min(max(embed, lo8), hi8)
        params = {
            "n_layers": int(rng.integers(self.n_layers[0], self.n_layers[1] + 1)),
            "embed_dim": embed,
            "hidden_dim": int(round(_log_uniform(rng, *self.hidden_dim))),
            "lr": _log_uniform(rng, *self.lr),
        }
        if kind in TRANSFORMER_KINDS:
            params["n_heads"] = int(self.n_heads[int(rng.integers(len(self.n_heads)))])
        return params


def best_record(records):
    """Highest mean accuracy among successful records; ties go to lower perplexity."""
    ok = [r for r in records if r.status == "ok" and r.mean]
    if not ok:
        return None
    return min(ok, key=lambda r: (-r.mean["accuracy"], r.mean["perplexity"],
                                  r.trial if r.trial is not None else 0))


def _trial(args):
    kind, corpus, params, k, seed, t, kwargs = args
    return cross_validate(kind, corpus, k, params, seed, trial=t, **kwargs)


def search(kind, corpus, space=None, n_trials=10, seed=42, k=5, base_params=None, jobs=1,
           store_path=None, **cv_kwargs):
    """Random search over ``space``; returns ``(best_record, trials)``.

    Trial ``t`` samples its configuration from a stream derived from
    ``(seed, t)``, so results do not depend on scheduling. Folds and model
    initialization depend only on ``seed``, so identical configurations give
    identical metrics. Records are appended to ``store_path`` when given, and
    returned sorted by trial index.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    space = space or SearchSpace()
    base_params = dict(base_params or {})
    jobs_args = []
    for t in range(n_trials):
        sampled = space.sample(make_rng(seed, 0x5EA, t), kind)
        jobs_args.append((kind, corpus, {**base_params, **sampled}, k, seed, t, cv_kwargs))
    records = []
    if jobs > 1 and n_trials > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, n_trials)) as pool:
            for rec in pool.map(_trial, jobs_args):
                if store_path is not None:
                    record_run(rec, store_path)
                records.append(rec)
    else:
        for a in jobs_args:
            rec = _trial(a)
            if store_path is not None:
                record_run(rec, store_path)
            records.append(rec)
    records.sort(key=lambda r: r.trial)
    return best_record(records), records
