"""ADAM training with validation macro-F1 early stopping."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data.samples import Batch, collate
from .model import Network
from .numeric import AdamState, adam_step, clip_global_norm

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 15
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    seed: int = 0
    checkpoint_path: str | None = None
    log_path: str | None = None
    log_wall_time: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    val_macro_f1: float
    val_precision: list = field(default_factory=list)
    val_recall: list = field(default_factory=list)
    wall_time: float = 0.0


@dataclass
class TrainResult:
    params: dict
    reports: list
    best_epoch: int
    best_f1: float


# metrics ---------------------------------------------------------------------


def confusion_matrix(preds, labels, num_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def precision_recall_f1(cm: np.ndarray):
    tp = np.diag(cm).astype(float)
    pred_pos = cm.sum(axis=0)
    true_pos = cm.sum(axis=1)
    precision = np.divide(tp, pred_pos, out=np.zeros_like(tp), where=pred_pos > 0)
    recall = np.divide(tp, true_pos, out=np.zeros_like(tp), where=true_pos > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def macro_f1(preds, labels, num_classes: int) -> float:
    """Unweighted mean of per-class F1; a class with P + R = 0 scores 0."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels differ in length")
    if preds.size == 0:
        raise ValueError("macro_f1 of an empty set")
    _, _, f1 = precision_recall_f1(confusion_matrix(preds, labels, num_classes))
    return float(f1.mean())


# batching --------------------------------------------------------------------


class GroupedData:
    """Samples pre-stacked by sequence length for fast minibatch slicing."""

    def __init__(self, samples):
        self.samples = list(samples)
        if not self.samples:
            raise ValueError("empty dataset")
        groups: dict[int, list[int]] = {}
        for i, s in enumerate(self.samples):
            groups.setdefault(s.length, []).append(i)
        self.lengths = sorted(groups)
        self.index = {L: np.array(groups[L]) for L in self.lengths}
        self.stacked = {L: collate([self.samples[i] for i in groups[L]]) for L in self.lengths}

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples])

    def batches(self, batch_size: int, rng=None):
        """Yield ``(sample_indices, Batch)``; shuffled when ``rng`` is given."""
        plan = []
        for L in self.lengths:
            n = len(self.index[L])
            order = rng.permutation(n) if rng is not None else np.arange(n)
            plan.extend((L, order[j : j + batch_size]) for j in range(0, n, batch_size))
        if rng is not None:
            plan = [plan[k] for k in rng.permutation(len(plan))]
        for L, rows in plan:
            yield self.index[L][rows], _take(self.stacked[L], rows)


def _take(b: Batch, rows) -> Batch:
    return Batch(
        dense=b.dense[rows],
        delta=b.delta[rows],
        masks=b.masks[rows],
        values=b.values[rows],
        static_dense=b.static_dense[rows],
        static_delta=b.static_delta[rows],
        labels=None if b.labels is None else b.labels[rows],
    )


def as_grouped(data) -> GroupedData:
    return data if isinstance(data, GroupedData) else GroupedData(data)


# evaluation ------------------------------------------------------------------


def predict_proba(net: Network, data, batch_size: int = 256, params: dict | None = None) -> np.ndarray:
    data = as_grouped(data)
    out = np.zeros((len(data), net.config.num_classes))
    for idx, batch in data.batches(batch_size):
        out[idx] = net.predict_proba(batch, params)
    return out


def evaluate(net: Network, data, batch_size: int = 256, params: dict | None = None) -> dict:
    """Macro-F1, accuracy, confusion matrix and per-class precision/recall."""
    data = as_grouped(data)
    k = net.config.num_classes
    preds = predict_proba(net, data, batch_size, params).argmax(axis=1)
    labels = data.labels
    cm = confusion_matrix(preds, labels, k)
    precision, recall, f1 = precision_recall_f1(cm)
    return {
        "macro_f1": float(f1.mean()),
        "accuracy": float(np.mean(preds == labels)),
        "confusion": cm.tolist(),
        "precision": precision.tolist(),
        "recall": recall.tolist(),
        "f1": f1.tolist(),
        "n": int(len(labels)),
    }


def majority_baseline(train_labels, eval_labels, num_classes: int) -> dict:
    """Metrics of always predicting the most frequent training class."""
    train_labels = np.asarray(train_labels)
    eval_labels = np.asarray(eval_labels)
    major = int(np.bincount(train_labels, minlength=num_classes).argmax())
    preds = np.full_like(eval_labels, major)
    return {
        "class": major,
        "macro_f1": macro_f1(preds, eval_labels, num_classes),
        "accuracy": float(np.mean(preds == eval_labels)),
    }


# training --------------------------------------------------------------------


def _param_norms(params: dict) -> dict:
    return {k: float(np.linalg.norm(v)) for k, v in params.items()}


def train(net: Network, train_data, val_data, cfg: TrainConfig) -> TrainResult:
    """Fit ``net`` in place; its parameters end at the best validation epoch.

    Training stops once validation macro-F1 has not strictly improved for
    ``cfg.patience`` consecutive epochs, or after ``cfg.max_epochs``.
    """
    train_data = as_grouped(train_data)
    val_data = as_grouped(val_data)
    rng = np.random.default_rng([cfg.seed, 7])
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    params = net.params
    best_f1, best_epoch, best_params = -np.inf, 0, {k: v.copy() for k, v in params.items()}
    since = 0
    reports = []
    log = None
    if cfg.log_path:
        Path(cfg.log_path).parent.mkdir(parents=True, exist_ok=True)
        log = open(cfg.log_path, "w")
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            t0 = time.perf_counter()
            total, count = 0.0, 0
            for b, (_, batch) in enumerate(train_data.batches(cfg.batch_size, rng)):
                loss, grads = net.loss_and_grad(batch, params)
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch {b}; parameter norms: {_param_norms(params)}"
                    )
                if cfg.clip_norm:
                    grads, _ = clip_global_norm(grads, cfg.clip_norm)
                params = adam_step(params, grads, state)
                net.params = params
                total += loss * batch.size
                count += batch.size
            metrics = evaluate(net, val_data)
            f1 = metrics["macro_f1"]
            report = EpochReport(
                epoch=epoch,
                train_loss=total / count,
                val_macro_f1=f1,
                val_precision=metrics["precision"],
                val_recall=metrics["recall"],
                wall_time=time.perf_counter() - t0,
            )
            reports.append(report)
            if f1 > best_f1:
                best_f1, best_epoch, since = f1, epoch, 0
                best_params = {k: v.copy() for k, v in params.items()}
                if cfg.checkpoint_path:
                    Network(net.config, best_params).save(cfg.checkpoint_path, {"epoch": epoch, "val_macro_f1": f1})
            else:
                since += 1
            if log is not None:
                rec = asdict(report)
                if not cfg.log_wall_time:
                    rec.pop("wall_time")
                log.write(json.dumps(rec) + "\n")
                log.flush()
            logger.info("epoch %d loss %.4f val F1 %.4f", epoch, report.train_loss, f1)
            if since >= cfg.patience:
                break
    finally:
        if log is not None:
            log.close()
    net.params = best_params
    return TrainResult(params=best_params, reports=reports, best_epoch=best_epoch, best_f1=float(best_f1))
