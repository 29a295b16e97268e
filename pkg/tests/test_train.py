import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chordlab._rng import make_rng
from chordlab.corpus import make_windows
from chordlab.errors import DivergedLoss, StoreCorrupt
from chordlab.models import make_model
from chordlab.synthetic import cyclic_corpus, random_corpus
from chordlab.train import RunRecord, SearchSpace, best_record, cross_validate, list_runs, record_run, search
from chordlab.train.loop import EarlyStopping, TrainConfig, evaluate_loss, train_model
from chordlab.train.tracking import METRICS, new_ulid

TINY = dict(embed_dim=8, hidden_dim=8, n_layers=1, max_epochs=2, batch_size=64)


# ---------------------------------------------------------------- loop


def test_train_config_validation():
    for bad in (dict(lr=0), dict(patience=0), dict(batch_size=0), dict(max_epochs=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_patience_three_with_worsening_loss():
    stopper = EarlyStopping(3)
    decisions = [stopper.update(v, e) for e, v in enumerate([1.0, 1.1, 1.2, 1.3, 1.4])]
    assert decisions == [False, False, False, True, True]
    assert stopper.best_epoch == 0


def test_patience_resets_on_improvement():
    stopper = EarlyStopping(2)
    assert [stopper.update(v, e) for e, v in enumerate([1.0, 1.2, 0.9, 1.0, 1.1])] == [
        False, False, False, False, True]


def _val_conflict_data(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.integers(3, 9, size=(64, 4))
    y = rng.integers(3, 9, size=64)
    # validation asks for different answers on the same contexts, so it worsens as training fits
    return X, y, X.copy(), (y - 3 + 1) % 6 + 3


def test_early_stopping_restores_best_validation_state():
    X, y, Xv, yv = _val_conflict_data()
    model = make_model("lstm", embed_dim=16, hidden_dim=16, n_layers=1, context_length=4, seed=0)
    model.init_network(9)
    config = TrainConfig(lr=1e-2, batch_size=16, max_epochs=100, patience=3, seed=0, min_loss=None)
    result = train_model(model.network_, X, y, Xv, yv, config)
    assert result.stopped_early
    assert result.epochs_run == result.best_epoch + 1 + 3
    best = min(result.val_losses)
    assert result.val_losses[result.best_epoch] == best
    assert evaluate_loss(model.network_, Xv, yv) == pytest.approx(best, rel=1e-6)


def test_min_loss_stops_training():
    X = np.array([[3, 4]] * 16)
    y = np.array([5] * 16)
    model = make_model("lstm", embed_dim=8, hidden_dim=8, n_layers=1, context_length=2, seed=0)
    model.init_network(6)
    result = train_model(model.network_, X, y, config=TrainConfig(lr=5e-2, max_epochs=500, min_loss=0.01))
    assert result.train_losses[-1] < 0.01 and result.epochs_run < 500


def test_training_is_deterministic():
    c = random_corpus(n_songs=6, seed=1)
    w = make_windows(c, 8)

    def run():
        m = make_model("gpt", embed_dim=8, hidden_dim=8, n_layers=1, n_heads=2, context_length=8,
                       max_epochs=3, seed=5).fit(w.single(), w.y)
        return m.loss_curve_, m.decision_function(w.single())
    (la, pa), (lb, pb) = run(), run()
    assert la == lb and np.array_equal(pa, pb)


def test_diverged_loss_raises():
    X = np.array([[3, 4]] * 8)
    y = np.array([5] * 8)
    model = make_model("lstm", embed_dim=8, hidden_dim=8, n_layers=1, context_length=2, seed=0)
    model.init_network(6)
    model.network_.head.weight.data[...] = np.nan
    with pytest.raises(DivergedLoss):
        train_model(model.network_, X, y, config=TrainConfig(max_epochs=1))


# ---------------------------------------------------------------- cross-validation


def test_k5_on_ten_songs():
    c = random_corpus(n_songs=10, seed=0)
    rec = cross_validate("markov", c, k=5, seed=3)
    assert rec.status == "ok" and len(rec.folds) == 5
    for m in METRICS:
        vals = [f[m] for f in rec.folds]
        assert rec.mean[m] == pytest.approx(float(np.mean(vals)), abs=1e-12)
        assert rec.std[m] == pytest.approx(float(np.std(vals)), abs=1e-12)


def test_test_folds_are_disjoint_and_cover():
    c = random_corpus(n_songs=13, seed=0)
    rec = cross_validate("vom", c, k=4, seed=0)
    tests = [set(f["test_songs"]) for f in rec.folds]
    assert sum(len(t) for t in tests) == 13 and set().union(*tests) == set(range(13))


def test_markov_is_perfect_on_order_one_grammar():
    rec = cross_validate("markov", cyclic_corpus(seed=0), k=5, params={"alpha": 0.01}, seed=0)
    assert rec.mean["accuracy"] == 1.0
    assert rec.mean["similarity"] == 1.0


def test_neural_folds_carve_validation_songs():
    c = random_corpus(n_songs=12, seed=0)
    rec = cross_validate("lstm", c, k=3, params=TINY, seed=0, embedding_params={"epochs": 1})
    assert rec.status == "ok"
    for f in rec.folds:
        assert f["n_val_songs"] == 1 and f["n_train_songs"] == 7 and f["n_test_songs"] == 4
        assert f["epochs_run"] <= 2


def test_cross_validate_is_deterministic():
    c = random_corpus(n_songs=9, seed=2)
    a = cross_validate("transformer", c, k=3, params={**TINY, "n_heads": 2}, seed=1,
                       embedding_params={"epochs": 1})
    b = cross_validate("transformer", c, k=3, params={**TINY, "n_heads": 2}, seed=1,
                       embedding_params={"epochs": 1})
    assert a.folds == b.folds and a.mean == b.mean and a.run_id != b.run_id


def test_parallel_folds_match_serial():
    c = random_corpus(n_songs=9, seed=2)
    a = cross_validate("vom", c, k=3, seed=1)
    b = cross_validate("vom", c, k=3, seed=1, jobs=3)
    assert a.folds == b.folds


def test_failed_fold_marks_record_failed(monkeypatch):
    import chordlab.neural.estimators as est

    def boom(*args, **kwargs):
        raise DivergedLoss("non-finite training loss at epoch 0")
    monkeypatch.setattr(est, "train_model", boom)
    rec = cross_validate("lstm", random_corpus(n_songs=6, seed=0), k=2, params=TINY)
    assert rec.status == "failed" and "non-finite" in rec.error
    assert all(f["status"] == "failed" for f in rec.folds)
    assert rec.mean == {}


def test_checkpoints_are_written(tmp_path):
    rec = cross_validate("markov", random_corpus(n_songs=6, seed=0), k=2, checkpoint_dir=tmp_path)
    assert len(rec.checkpoints) == 2
    assert all((tmp_path / p.split("/")[-1]).exists() for p in rec.checkpoints)


def test_unknown_kind():
    with pytest.raises(ValueError):
        cross_validate("hmm", random_corpus(n_songs=6), k=2)


# ---------------------------------------------------------------- search space


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1),
       st.sampled_from(["markov", "vom", "lstm", "lstm-attn", "transformer", "gpt", "multi-gpt"]))
def test_sampled_points_are_in_range(seed, kind):
    space = SearchSpace()
    p = space.sample(make_rng(seed), kind)
    if kind in ("markov", "vom"):
        assert 1e-3 <= p["alpha"] <= 1.0
        if kind == "vom":
            assert 1 <= p["max_order"] <= 8
        return
    assert 1 <= p["n_layers"] <= 4
    assert 16 <= p["embed_dim"] <= 256 and p["embed_dim"] % 8 == 0
    assert 32 <= p["hidden_dim"] <= 512
    assert 1e-4 <= p["lr"] <= 1e-2
    if "n_heads" in p:
        assert p["n_heads"] in (1, 2, 4, 8) and p["embed_dim"] % p["n_heads"] == 0
    else:
        assert kind in ("lstm", "lstm-attn")


def test_fixed_space_pins_values():
    space = SearchSpace.fixed(n_layers=2, embed_dim=24, hidden_dim=40, lr=3e-3, n_heads=4)
    for seed in range(5):
        assert space.sample(make_rng(seed), "gpt") == dict(n_layers=2, embed_dim=24, hidden_dim=40,
                                                           lr=3e-3, n_heads=4)


def test_invalid_space():
    with pytest.raises(ValueError):
        SearchSpace(lr=(1e-2, 1e-4))
    with pytest.raises(ValueError):
        SearchSpace(n_heads=(3,))


# ---------------------------------------------------------------- search


def test_single_trial_is_best():
    best, records = search("markov", random_corpus(n_songs=8, seed=0), n_trials=1, k=2)
    assert len(records) == 1 and best is records[0]


def test_degenerate_space_gives_identical_trials():
    space = SearchSpace.fixed(alpha=0.1, max_order=3)
    _, records = search("vom", random_corpus(n_songs=8, seed=0), space, n_trials=3, k=2, seed=7)
    assert len({json.dumps(r.folds, sort_keys=True) for r in records}) == 1
    assert [r.trial for r in records] == [0, 1, 2]


def test_best_at_least_median(tmp_path):
    store = tmp_path / "runs.jsonl"
    best, records = search("vom", cyclic_corpus(n_songs=10, seed=1), n_trials=10, k=3, store_path=store)
    accs = [r.mean["accuracy"] for r in records]
    assert best.mean["accuracy"] == max(accs) >= float(np.median(accs))
    assert len(list_runs(store)) == 10


def test_parallel_search_matches_serial():
    c = random_corpus(n_songs=8, seed=0)
    _, a = search("vom", c, n_trials=3, k=2, seed=4)
    _, b = search("vom", c, n_trials=3, k=2, seed=4, jobs=2)
    assert [r.folds for r in a] == [r.folds for r in b]
    assert [r.hyperparams for r in a] == [r.hyperparams for r in b]


def test_search_rejects_zero_trials():
    with pytest.raises(ValueError):
        search("markov", random_corpus(n_songs=6), n_trials=0)


def _record(kind="markov", acc=0.5, ppl=3.0, status="ok", trial=None, dataset="corpus"):
    r = RunRecord(kind=kind, hyperparams={}, folds=[], seed=0, k=2, trial=trial, dataset=dataset,
                  status=status)
    r.mean = {"accuracy": acc, "perplexity": ppl, "similarity": acc}
    return r


def test_best_record_tie_breaks():
    a, b, c = _record(acc=0.5, ppl=3.0, trial=0), _record(acc=0.5, ppl=2.0, trial=1), _record(acc=0.4, trial=2)
    assert best_record([a, b, c]) is b
    assert best_record([_record(acc=0.9, status="failed"), c]) is c
    assert best_record([_record(status="failed")]) is None


# ---------------------------------------------------------------- tracking


def test_ulid_shape_and_order():
    a, b = new_ulid(1000), new_ulid(2000)
    assert len(a) == 26 and a < b
    assert set(a) <= set("0123456789ABCDEFGHJKMNPQRSTVWXYZ")


def test_record_round_trip(tmp_path):
    rec = cross_validate("markov", random_corpus(n_songs=6, seed=0), k=2)
    store = tmp_path / "runs.jsonl"
    record_run(rec, store)
    (back,) = list_runs(store)
    assert back.to_dict() == rec.to_dict()


def test_aggregate_requires_k_folds():
    r = RunRecord(kind="markov", hyperparams={}, seed=0, k=3,
                  folds=[{"status": "ok", "accuracy": 1.0, "perplexity": 1.0, "similarity": 1.0}] * 2)
    r.aggregate()
    assert r.status == "failed"


def test_filters(tmp_path):
    store = tmp_path / "runs.jsonl"
    for kind, ds, st_ in [("markov", "a", "ok"), ("vom", "a", "ok"), ("vom", "b", "failed")]:
        record_run(_record(kind=kind, dataset=ds, status=st_), store)
    assert [r.kind for r in list_runs(store, kind="vom")] == ["vom", "vom"]
    assert [r.kind for r in list_runs(store, dataset="a")] == ["markov", "vom"]
    assert len(list_runs(store, status="ok")) == 2
    assert list_runs(tmp_path / "missing.jsonl") == []


def test_store_is_append_only(tmp_path):
    store = tmp_path / "runs.jsonl"
    record_run(_record(), store)
    first = store.read_text()
    record_run(_record(kind="vom"), store)
    assert store.read_text().startswith(first)
    assert len(store.read_text().splitlines()) == 2


def test_corrupt_line_names_line(tmp_path):
    store = tmp_path / "runs.jsonl"
    record_run(_record(), store)
    with open(store, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(StoreCorrupt) as exc:
        list_runs(store)
    assert exc.value.line == 2 and "2" in str(exc.value)


def test_store_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("CHORDLAB_STORE", str(tmp_path / "env.jsonl"))
    record_run(_record())
    assert (tmp_path / "env.jsonl").exists() and len(list_runs()) == 1
