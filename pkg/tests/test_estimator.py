import dataclasses

import numpy as np
import pytest
from sklearn.base import clone

from stlstm import STLSTMClassifier, SequenceScaler
from stlstm.data.synthetic import SyntheticSpec, synth_splits

FAST = dict(hidden_dense=4, hidden_sparse=4, embedding_dim=3, max_epochs=3, patience=2)


@pytest.fixture(scope="module")
def task():
    splits, _ = synth_splits(SyntheticSpec(n_samples=90, min_length=6, max_length=9, seed=2), (90, 30, 30))
    return splits


def test_get_set_params_and_clone():
    est = STLSTMClassifier(cell="tlstm", hidden_dense=7)
    params = est.get_params()
    assert params["cell"] == "tlstm" and params["hidden_dense"] == 7
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(aggregation="max")
    assert est.aggregation == "max"


def test_fit_predict(task, tmp_path):
    est = STLSTMClassifier(**FAST).fit(task["train"], X_val=task["val"])
    proba = est.predict_proba(task["test"])
    assert proba.shape == (30, 3)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert set(est.predict(task["test"])) <= set(est.classes_)
    assert est.best_score_ == max(r.val_macro_f1 for r in est.history_)
    assert est.evaluate(task["val"])["macro_f1"] == est.best_score_
    est.save(tmp_path / "e.npz")
    back = STLSTMClassifier.load(tmp_path / "e.npz")
    assert np.array_equal(back.predict_proba(task["test"]), proba)
    assert back.get_params() == est.get_params()


def test_string_labels_and_internal_validation(task):
    names = np.array(["down", "flat", "up"])
    y = names[[s.label for s in task["train"]]]
    est = STLSTMClassifier(**FAST, validation_fraction=0.2).fit(task["train"], y)
    assert list(est.classes_) == ["down", "flat", "up"]
    assert set(est.predict(task["test"])) <= set(names)


def test_unfitted_raises(task):
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        STLSTMClassifier().predict(task["test"])


@pytest.mark.parametrize(
    "mutate, err",
    [
        (lambda s: dataclasses.replace(s, delta=-s.delta - 1), "negative delta"),
        (lambda s: dataclasses.replace(s, dense=s.dense[:, :1]), "feature dims"),
        (lambda s: dataclasses.replace(s, values=s.values * np.nan), "non-finite"),
    ],
)
def test_input_validation(task, mutate, err):
    bad = list(task["train"][:5]) + [mutate(task["train"][5])]
    with pytest.raises(ValueError, match=err):
        STLSTMClassifier(**FAST).fit(bad)


def test_rejects_wrong_types(task):
    with pytest.raises(TypeError):
        STLSTMClassifier(**FAST).fit([np.zeros((3, 2))])
    with pytest.raises(ValueError):
        STLSTMClassifier(**FAST).fit([])
    with pytest.raises(ValueError):
        STLSTMClassifier(**FAST).fit(task["train"], y=np.zeros(3))


def test_single_class_rejected(task):
    with pytest.raises(ValueError, match="two classes"):
        STLSTMClassifier(**FAST).fit(task["train"], y=np.zeros(len(task["train"]), int), X_val=task["val"], y_val=np.zeros(30, int))


def test_scaler_keeps_masked_zero(task):
    sc = SequenceScaler().fit(task["train"])
    out = sc.transform(task["train"])
    for a, b in zip(task["train"], out):
        assert np.all(b.values[~a.masks] == 0)
    dense = np.concatenate([s.dense for s in out])
    np.testing.assert_allclose(dense.mean(axis=0), 0, atol=1e-12)
    present = np.concatenate([s.values[s.masks[:, 0], 0] for s in out])
    assert present.mean() == pytest.approx(0, abs=1e-12)
    back = SequenceScaler.from_dict(sc.to_dict())
    assert np.array_equal(back.transform(task["val"])[0].dense, sc.transform(task["val"])[0].dense)


def test_initialize_builds_untrained_model(task):
    est = STLSTMClassifier(**FAST).initialize(task["train"])
    assert est.network_.params["l0.W_h"].shape[0] == 8
    assert est.predict_proba(task["val"]).shape == (30, 3)
