import json

import numpy as np
import pytest
from sklearn.metrics import f1_score

from stlstm.data.synthetic import SyntheticSpec, synth_splits
from stlstm.model import ModelConfig, Network
from stlstm.training import (
    GroupedData,
    TrainConfig,
    confusion_matrix,
    evaluate,
    macro_f1,
    majority_baseline,
    train,
)


def reference_macro_f1(preds, labels, k):
    f1s = []
    for c in range(k):
        tp = sum(1 for p, y in zip(preds, labels) if p == c and y == c)
        fp = sum(1 for p, y in zip(preds, labels) if p == c and y != c)
        fn = sum(1 for p, y in zip(preds, labels) if p != c and y == c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(f1s) / k


class TestMetrics:
    def test_perfect(self):
        y = np.array([0, 1, 2, 2, 1])
        assert macro_f1(y, y, 3) == 1.0

    def test_two_class_half(self):
        preds, labels = np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1])
        cm = confusion_matrix(preds, labels, 2)
        assert cm[0, 0] == 1 and cm[1, 0] == 1 and cm[0, 1] == 1
        assert macro_f1(preds, labels, 2) == pytest.approx(0.5)

    def test_random_against_oracles(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            labels = rng.integers(0, 3, 60)
            preds = rng.integers(0, 3, 60)
            ours = macro_f1(preds, labels, 3)
            assert ours == pytest.approx(reference_macro_f1(preds, labels, 3), abs=1e-12)
            assert ours == pytest.approx(f1_score(labels, preds, average="macro", labels=[0, 1, 2], zero_division=0), abs=1e-12)

    def test_absent_class_scores_zero(self):
        assert macro_f1(np.zeros(4, int), np.zeros(4, int), 3) == pytest.approx(1 / 3)

    def test_errors(self):
        with pytest.raises(ValueError):
            macro_f1([], [], 3)
        with pytest.raises(ValueError):
            macro_f1([0, 1], [0], 3)

    def test_majority_baseline_accuracy(self):
        labels = np.array([0] * 70 + [1] * 20 + [2] * 10)
        out = majority_baseline(labels, labels, 3)
        assert out["class"] == 0 and out["accuracy"] == pytest.approx(0.70)


@pytest.fixture(scope="module")
def tiny_task():
    spec = SyntheticSpec(n_samples=120, min_length=8, max_length=12, seed=0)
    splits, _ = synth_splits(spec, (120, 40, 40))
    return splits


def tiny_net(splits, seed=0, **kw):
    from stlstm.data.samples import feature_dims

    cfg = ModelConfig(hidden_dense=6, hidden_sparse=6, embedding_dim=4, seed=seed, **feature_dims(splits["train"]), **kw)
    return Network(cfg)


class TestEvaluate:
    def test_confusion_rows_are_support(self, tiny_task):
        net = tiny_net(tiny_task)
        m = evaluate(net, tiny_task["val"])
        support = np.bincount([s.label for s in tiny_task["val"]], minlength=3)
        assert np.array_equal(np.sum(m["confusion"], axis=1), support)
        assert m == evaluate(net, tiny_task["val"])

    def test_grouped_batches_cover_everything(self, tiny_task):
        data = GroupedData(tiny_task["train"])
        seen = np.concatenate([idx for idx, _ in data.batches(16, np.random.default_rng(0))])
        assert sorted(seen.tolist()) == list(range(len(tiny_task["train"])))
        for idx, batch in data.batches(16):
            assert len({tiny_task["train"][i].length for i in idx}) == 1
            assert np.array_equal(batch.labels, [tiny_task["train"][i].label for i in idx])


class TestTrain:
    def test_lr_zero_is_identity(self, tiny_task):
        net = tiny_net(tiny_task)
        before = {k: v.copy() for k, v in net.params.items()}
        train(net, tiny_task["train"], tiny_task["val"], TrainConfig(lr=0.0, max_epochs=2, patience=5))
        for k in before:
            assert np.array_equal(before[k], net.params[k])

    def test_flat_history_stops_after_patience_plus_one(self, tiny_task):
        net = tiny_net(tiny_task)
        result = train(net, tiny_task["train"], tiny_task["val"], TrainConfig(lr=0.0, max_epochs=100, patience=15))
        assert len(result.reports) == 16
        assert result.best_epoch == 1

    def test_loss_decreases_and_best_is_returned(self, tiny_task, tmp_path):
        net = tiny_net(tiny_task)
        cfg = TrainConfig(lr=0.01, max_epochs=12, patience=4, checkpoint_path=str(tmp_path / "ck.npz"), log_path=str(tmp_path / "log.jsonl"))
        result = train(net, tiny_task["train"], tiny_task["val"], cfg)
        losses = [r.train_loss for r in result.reports]
        assert losses[0] > losses[1] > losses[2]
        f1s = [r.val_macro_f1 for r in result.reports]
        assert result.best_f1 == max(f1s)
        assert result.best_epoch == int(np.argmax(f1s)) + 1
        assert len(result.reports) <= min(result.best_epoch + cfg.patience, cfg.max_epochs)
        assert evaluate(net, tiny_task["val"])["macro_f1"] == result.best_f1
        ck, meta = Network.load(tmp_path / "ck.npz")
        assert meta["epoch"] == result.best_epoch
        assert all(np.array_equal(ck.params[k], net.params[k]) for k in net.params)
        records = [json.loads(line) for line in (tmp_path / "log.jsonl").read_text().splitlines()]
        assert [r["epoch"] for r in records] == list(range(1, len(result.reports) + 1))
        assert "wall_time" not in records[0]

    def test_bit_reproducible(self, tiny_task, tmp_path):
        outs = []
        for name in ("a", "b"):
            net = tiny_net(tiny_task, seed=3)
            cfg = TrainConfig(lr=0.01, max_epochs=3, seed=3, checkpoint_path=str(tmp_path / f"{name}.npz"), log_path=str(tmp_path / f"{name}.jsonl"))
            train(net, tiny_task["train"], tiny_task["val"], cfg)
            outs.append(((tmp_path / f"{name}.npz").read_bytes(), (tmp_path / f"{name}.jsonl").read_bytes()))
        assert outs[0] == outs[1]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_diagnostics(self, tiny_task):
        net = tiny_net(tiny_task)
        net.params["decoder.W"] = net.params["decoder.W"] * np.inf
        from stlstm.training import TrainingDiverged

        with pytest.raises(TrainingDiverged, match="epoch 1.*batch 0.*norms"):
            train(net, tiny_task["train"], tiny_task["val"], TrainConfig(max_epochs=1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(patience=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
