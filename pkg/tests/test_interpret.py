import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chordlab.corpus import MASK_ID, PAD_ID, make_windows
from chordlab.errors import NoCorrectPredictions, NotMultiFeature
from chordlab.interpret import (
    AttributionGrid,
    InfluenceProfile,
    export_figure_data,
    export_gnuplot,
    feature_attribution,
    load_figure_data,
    position_influence,
)
from chordlab.models import make_model
from chordlab.ngram import fit_first_order, fit_variable_order
from chordlab.synthetic import cyclic_corpus, order2_corpus
from oracles import naive_occlusion


class ConstantModel:
    multi_feature = False

    def __init__(self, V=6, target=3):
        self.V, self.target = V, target

    def predict_proba(self, X):
        p = np.full((len(X), self.V), 0.5 / (self.V - 1))
        p[:, self.target] = 0.5
        return p


class FirstSlotModel:
    """Confident in token 3 exactly when the oldest context slot is PAD."""

    multi_feature = False

    def predict_proba(self, X):
        X = np.asarray(X)
        p = np.full((len(X), 5), 0.1)
        p[:, 3] = np.where(X[:, 0] == PAD_ID, 0.6, 0.3)
        p[:, 4] = 1.0 - p[:, :4].sum(axis=1)
        return p


class LaneModel:
    """Multi-feature stand-in: the probability of token 3 reads lane 1 at the last step."""

    multi_feature = True
    features_ = ("chord", "melody")

    def predict_proba(self, X):
        X = np.asarray(X)
        p = np.full((len(X), 5), 0.1)
        p[:, 3] = np.where(X[:, -1, 1] == MASK_ID, 0.2, 0.6)
        p[:, 4] = 1.0 - p[:, :4].sum(axis=1)
        return p


@pytest.fixture(scope="module")
def markov_on_cycle():
    c = cyclic_corpus(seed=0)
    w = make_windows(c, 16)
    return fit_first_order(w.single(), w.y, alpha=0.01), w


def test_constant_model_has_zero_influence():
    X = np.random.default_rng(0).integers(0, 6, size=(20, 5))
    prof = position_influence(ConstantModel(), X, np.full(20, 3))
    assert prof.n == 20
    assert np.array_equal(prof.influence, np.zeros(5))
    assert prof.offsets.tolist() == [-5, -4, -3, -2, -1]


def test_markov_influence_exactly_zero_beyond_last_position(markov_on_cycle):
    model, w = markov_on_cycle
    prof = position_influence(model, w.single(), w.y)
    assert np.all(np.abs(prof.influence[:-1]) <= 1e-9)
    assert prof.influence[-1] > 0 and int(np.argmax(prof.influence)) == len(prof.influence) - 1


def test_matches_per_sample_oracle():
    c = order2_corpus(seed=1)
    w = make_windows(c, 6)
    model = fit_variable_order(w.single(), w.y, alpha=0.05, max_order=3)
    prof = position_influence(model, w.single(), w.y)
    expected, n = naive_occlusion(model.predict_proba, w.single(), w.y, MASK_ID)
    assert prof.n == n
    assert np.allclose(prof.influence, expected, rtol=0, atol=1e-12)


def test_conditioning_on_correct_samples(markov_on_cycle):
    model, w = markov_on_cycle
    X, y = w.single(), w.y.copy()
    y[::3] = (y[::3] - 3 + 1) % 8 + 3          # a third of the samples become wrong
    correct = model.predict(X) == y
    a = position_influence(model, X, y)
    b = position_influence(model, X[correct], y[correct])
    assert a.n == int(correct.sum())
    assert np.array_equal(a.influence, b.influence)


def test_single_correct_sample_is_its_own_delta():
    model = FirstSlotModel()
    X = np.array([[PAD_ID, 4, 4], [3, 4, 4]])
    y = np.array([3, 0])                       # only the first sample is predicted correctly
    prof = position_influence(model, X, y)
    assert prof.n == 1
    assert prof.influence.tolist() == [pytest.approx(0.3), 0.0, 0.0]


def test_masking_pad_counts_as_a_change():
    prof = position_influence(FirstSlotModel(), np.array([[PAD_ID, 3]]), np.array([3]))
    assert prof.influence[0] == pytest.approx(0.3)


def test_no_correct_predictions():
    with pytest.raises(NoCorrectPredictions):
        position_influence(ConstantModel(target=3), np.zeros((4, 3), dtype=int), np.full(4, 4))


def test_influence_is_deterministic(markov_on_cycle):
    model, w = markov_on_cycle
    a, b = position_influence(model, w.single(), w.y), position_influence(model, w.single(), w.y)
    assert np.array_equal(a.influence, b.influence)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 6))
def test_influence_nonnegative(seed, L):
    rng = np.random.default_rng(seed)
    X = rng.integers(3, 8, size=(30, L))
    y = rng.integers(3, 8, size=30)
    model = fit_variable_order(X, y, alpha=0.1, max_order=L)
    prof = position_influence(model, X, y)
    assert np.all(prof.influence >= 0)


# ---------------------------------------------------------------- feature attribution


def test_feature_attribution_masks_one_lane():
    X = np.full((3, 4, 2), 5)
    grid = feature_attribution(LaneModel(), X, np.full(3, 3))
    assert grid.features == ("chord", "melody")
    assert grid.influence.shape == (2, 4)
    assert grid.argmax() == ("melody", -1)
    expected = np.zeros((2, 4))
    expected[1, 3] = 0.4
    assert np.allclose(grid.influence, expected, atol=1e-15)
    lane, n = naive_occlusion(LaneModel().predict_proba, X, np.full(3, 3), MASK_ID, lane=1)
    assert n == 3 and np.allclose(grid.influence[1], lane)


def test_position_influence_masks_all_lanes_of_multi_feature_input():
    prof = position_influence(LaneModel(), np.full((2, 3, 2), 5), np.full(2, 3))
    assert np.allclose(prof.influence, [0.0, 0.0, 0.4])


def test_not_multi_feature(markov_on_cycle):
    model, w = markov_on_cycle
    with pytest.raises(NotMultiFeature):
        feature_attribution(model, w.single(), w.y)
    single_lane = make_model("multi-lstm", embed_dim=8, hidden_dim=8, n_layers=1, context_length=4)
    single_lane.init_network((6,))
    with pytest.raises(NotMultiFeature):
        feature_attribution(single_lane, np.full((2, 4, 1), 3), np.array([3, 3]))


# ---------------------------------------------------------------- export


def _profile(L=4):
    return InfluenceProfile(np.arange(-L, 0), np.linspace(0.1, 0.4, L), 7)


def _grid():
    return AttributionGrid(("chord", "melody", "duration"), np.arange(-3, 0),
                           np.arange(9, dtype=float).reshape(3, 3) / 10, 5)


def test_profile_csv(tmp_path):
    path = export_figure_data(_profile(), tmp_path / "p.csv")
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["position", "influence"]
    assert len(rows) == 5
    assert [int(r[0]) for r in rows[1:]] == [-4, -3, -2, -1]
    assert [float(r[1]) for r in rows[1:]] == _profile().influence.tolist()


def test_grid_csv_order(tmp_path):
    rows = list(csv.reader(open(export_figure_data(_grid(), tmp_path / "g.csv"))))
    assert rows[0] == ["feature", "position", "influence"]
    assert [r[0] for r in rows[1:]] == ["chord"] * 3 + ["melody"] * 3 + ["duration"] * 3
    assert [int(r[1]) for r in rows[1:4]] == [-3, -2, -1]


def test_json_round_trip(tmp_path):
    for obj in (_profile(), _grid()):
        back = load_figure_data(export_figure_data(obj, tmp_path / "x.json"))
        assert type(back) is type(obj) and back.n == obj.n
        assert np.array_equal(back.influence, obj.influence)
        assert np.array_equal(back.offsets, obj.offsets)
    assert json.loads((tmp_path / "x.json").read_text())["type"] == "grid"


def test_empty_export_warns(tmp_path):
    empty = InfluenceProfile(np.zeros(0, dtype=int), np.zeros(0), 0)
    with pytest.warns(UserWarning):
        path = export_figure_data(empty, tmp_path / "e.csv")
    assert path.read_text().strip() == "position,influence"


def test_unknown_export_format(tmp_path):
    with pytest.raises(ValueError):
        export_figure_data(_profile(), tmp_path / "p.xlsx")


def test_gnuplot_one_file_per_series(tmp_path):
    paths = export_gnuplot(_grid(), tmp_path, "fig")
    assert [p.name for p in paths] == ["fig_chord.dat", "fig_melody.dat", "fig_duration.dat"]
    data = np.loadtxt(paths[1])
    assert data[:, 0].tolist() == [-3, -2, -1]
    assert np.array_equal(data[:, 1], _grid().influence[1])
    (single,) = export_gnuplot(_profile(), tmp_path)
    assert single.name == "influence.dat"
