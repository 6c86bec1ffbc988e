import numpy as np
import pytest

from stlstm.data.synthetic import SyntheticSpec, class_thresholds, rule_predict, synth_generate, synth_splits


def test_rule_recovers_clean_labels():
    spec = SyntheticSpec(n_samples=400, seed=1)
    thr = class_thresholds(spec)
    data = synth_generate(spec, stream=5, thresholds=thr)
    clean = np.array([s.meta["clean_label"] for s in data])
    pred = np.array([rule_predict(s, spec, thr) for s in data])
    assert np.mean(pred == clean) == 1.0
    # against the noisy labels the rule is still near perfect
    assert np.mean(pred == np.array([s.label for s in data])) >= 0.95


def test_label_marginals():
    spec = SyntheticSpec(n_samples=3000, seed=2, label_noise=0.0)
    labels = np.array([s.label for s in synth_generate(spec)])
    np.testing.assert_allclose(np.bincount(labels, minlength=3) / len(labels), 1 / 3, atol=0.05)


def test_unbalanced_marginals():
    spec = SyntheticSpec(n_samples=3000, seed=3, class_balance=[0.7, 0.2, 0.1], label_noise=0.0)
    labels = np.array([s.label for s in synth_generate(spec)])
    np.testing.assert_allclose(np.bincount(labels, minlength=3) / len(labels), [0.7, 0.2, 0.1], atol=0.05)


def test_structure():
    spec = SyntheticSpec(n_samples=50, min_length=10, max_length=20, sparse_ratio=0.1)
    for s in synth_generate(spec):
        assert 10 <= s.length <= 20
        assert s.masks[0].all()
        assert np.all(s.values[~s.masks] == 0)
        assert s.delta[0, 0] == 0 and np.all(s.delta >= 0)
        assert s.static_dense.sum() == 1 and s.static_delta[0] >= 0


def test_ratio_one_is_dense():
    spec = SyntheticSpec(n_samples=20, sparse_ratio=1.0)
    assert all(s.masks.all() for s in synth_generate(spec))


def test_reproducible_and_streams_independent():
    spec = SyntheticSpec(n_samples=30, seed=7)
    a, ma = synth_splits(spec)
    b, mb = synth_splits(spec)
    assert ma == mb
    for x, y in zip(a["train"], b["train"]):
        assert np.array_equal(x.values, y.values) and x.label == y.label
    assert not np.array_equal(a["train"][0].dense, a["val"][0].dense)
    assert ma["counts"] == {"train": 30, "val": 7, "test": 7}


@pytest.mark.parametrize("kw", [dict(min_length=0), dict(sparse_ratio=0.0), dict(n_sparse=4), dict(class_balance=[0.5, 0.6])])
def test_invalid_spec(kw):
    with pytest.raises(ValueError):
        SyntheticSpec(**kw)
