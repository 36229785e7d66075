import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalforge.classifier import (
    ForestConfig,
    ForestModel,
    SchemaMismatchError,
    Tree,
    balanced_accuracy,
    load_model,
    permutation_importance,
    predict_proba,
    predict_proba_many,
    save_model,
    train,
)
from fractalforge.features import FEATURE_COLUMNS, FeatureMatrix, extract
from fractalforge.ifs import sample_naive

COLS = ["f0", "f1", "f2", "f3", "f4"]


def separable(rng, n_per_class=500):
    good = rng.uniform(0, 1, (n_per_class, 2)) + [1.2, 0.0]
    bad = rng.uniform(0, 1, (n_per_class, 2))
    x = np.vstack([good, bad])
    y = np.r_[np.ones(n_per_class), np.zeros(n_per_class)].astype(int)
    return FeatureMatrix(["a", "b"], x, y)


def planted(rng, n=400, d=5):
    x = rng.uniform(0, 1, (n, d))
    return FeatureMatrix(COLS[:d], x, (x[:, 0] > 0.5).astype(int))


def test_separable_training_accuracy(rng):
    m = separable(rng)
    model = train(m, ForestConfig(n_trees=20), rng)
    acc = np.mean((predict_proba_many(model, m) > 0.5) == m.labels)
    assert acc >= 0.99


def test_separable_held_out_accuracy(rng):
    fit, test = separable(rng), separable(rng)
    model = train(fit, ForestConfig(n_trees=20), rng)
    assert np.mean((predict_proba_many(model, test) > 0.5) == test.labels) >= 0.95


def test_class_weighting_helps_minority_recall():
    # overlapping classes in the 244 : 1779 proportion of the reference corpus
    rng = np.random.default_rng(21)

    def draw(n_good, n_bad):
        g = rng.normal(0.8, 1.0, (n_good, 3))
        b = rng.normal(0.0, 1.0, (n_bad, 3))
        return FeatureMatrix(COLS[:3], np.vstack([g, b]),
                             np.r_[np.ones(n_good), np.zeros(n_bad)].astype(int))

    fit, test = draw(244, 1779), draw(244, 1779)
    recall = {}
    for mode in ("balanced", None):
        cfg = ForestConfig(n_trees=30, min_samples_leaf=5, class_weight=mode)
        model = train(fit, cfg, np.random.default_rng(0))
        pred = predict_proba_many(model, test) > 0.5
        recall[mode] = pred[test.labels == 1].mean()
    assert recall["balanced"] >= recall[None]


def test_duplicated_rows_give_identical_predictions(rng):
    m = planted(rng, 200)
    doubled = FeatureMatrix(m.columns, np.vstack([m.x, m.x]), np.r_[m.labels, m.labels])
    a = train(m, ForestConfig(n_trees=15), np.random.default_rng(3))
    b = train(doubled, ForestConfig(n_trees=15), np.random.default_rng(3))
    probe = np.random.default_rng(4).uniform(0, 1, (500, 5))
    np.testing.assert_array_equal(predict_proba_many(a, probe), predict_proba_many(b, probe))


def test_row_order_does_not_matter(rng):
    m = planted(rng, 150)
    perm = rng.permutation(len(m))
    shuffled = FeatureMatrix(m.columns, m.x[perm], m.labels[perm])
    a = train(m, ForestConfig(n_trees=10), np.random.default_rng(8))
    b = train(shuffled, ForestConfig(n_trees=10), np.random.default_rng(8))
    assert a.to_json() == b.to_json()


def test_same_seed_same_bytes(rng, tmp_path):
    m = planted(rng, 150)
    a = train(m, ForestConfig(n_trees=10), np.random.default_rng(1))
    b = train(m, ForestConfig(n_trees=10), np.random.default_rng(1))
    save_model(a, tmp_path / "a.json")
    save_model(b, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_model_round_trip(rng, tmp_path):
    m = planted(rng, 150)
    model = train(m, ForestConfig(n_trees=5), rng)
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(predict_proba_many(back, m), predict_proba_many(model, m))
    assert back.schema_hash == model.schema_hash


def test_model_file_validation(rng, tmp_path):
    model = train(planted(rng, 100), ForestConfig(n_trees=2), rng)
    d = model.to_dict()
    d["columns"] = ["x"] * 5
    with pytest.raises(SchemaMismatchError):
        ForestModel.from_dict(d)
    d = model.to_dict()
    d["version"] = 99
    with pytest.raises(ValueError):
        ForestModel.from_dict(d)


def test_stub_forests():
    one = ForestModel([Tree.leaf(1)], ["a"])
    assert predict_proba(one, [0.3]) == 1.0
    split = ForestModel([Tree.leaf(1), Tree.leaf(0)], ["a"])
    assert predict_proba(split, [0.3]) == 0.5


def test_schema_checks():
    model = ForestModel([Tree.leaf(1)], list(FEATURE_COLUMNS))
    fv = extract(sample_naive(np.random.default_rng(0), 3))
    assert predict_proba(model, fv) == 1.0
    with pytest.raises(SchemaMismatchError):
        predict_proba(model, [1.0, 2.0])
    with pytest.raises(SchemaMismatchError):
        predict_proba(ForestModel([Tree.leaf(1)], ["missing"]), fv)
    with pytest.raises(SchemaMismatchError):
        predict_proba_many(model, np.ones((3, 2)))


def test_training_input_validation(rng):
    x = rng.uniform(size=(10, 2))
    with pytest.raises(ValueError):
        train(FeatureMatrix(["a", "b"], x, np.zeros(10, dtype=int)))
    with pytest.raises(ValueError):
        train(FeatureMatrix(["a", "b"], x))
    bad = x.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        train(FeatureMatrix(["a", "b"], bad, np.arange(10) % 2))
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)


@settings(max_examples=25)
@given(st.integers(0, 2**31))
def test_probabilities_are_vote_fractions(seed):
    rng = np.random.default_rng(seed)
    m = planted(rng, 60)
    model = train(m, ForestConfig(n_trees=7), rng)
    p = predict_proba_many(model, m)
    assert ((p >= 0) & (p <= 1)).all()
    np.testing.assert_allclose(p * 7, np.round(p * 7), atol=1e-12)
    row = m.x[0]
    assert predict_proba(model, row) == pytest.approx(p[0])


def test_vote_one_matches_vote_many(rng):
    m = planted(rng, 200)
    model = train(m, ForestConfig(n_trees=5), rng)
    probe = rng.uniform(size=(100, 5))
    for t in model.trees:
        np.testing.assert_array_equal(t.vote_many(probe), [t.vote_one(r) for r in probe])


def test_planted_signal_importance(rng):
    fit, test = planted(rng), planted(rng)
    model = train(fit, ForestConfig(n_trees=25), rng)
    rep = permutation_importance(model, test, 20, rng)
    assert rep.columns[0] == "f0" and rep.mean[0] > 0.2
    assert np.abs(rep.mean[1:]).max() < 0.05
    assert rep.n_runs == 20
    assert list(rep.mean) == sorted(rep.mean, reverse=True)


def test_constant_column_importance_is_zero(rng):
    m = planted(rng, 200)
    m.x[:, 3] = 0.25
    model = train(m, ForestConfig(n_trees=10), rng)
    rep = permutation_importance(model, m, 5, rng)
    assert rep.mean[rep.columns.index("f3")] == 0.0


def test_balanced_accuracy():
    y = np.array([1, 1, 0, 0, 0, 0])
    assert balanced_accuracy(y, np.array([1, 0, 0, 0, 0, 0])) == pytest.approx(0.75)
    assert balanced_accuracy(y, y) == 1.0
