"""scikit-learn compatible classifier around :class:`~stlstm.model.Network`."""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data.samples import SequenceSample, feature_dims
from .io import load_npz, save_npz
from .model import ModelConfig, Network
from .training import TrainConfig, evaluate, predict_proba, train
from .validation import check_sequences


class SequenceScaler:
    """Per-channel standardization of dense columns and present sparse values.

    Statistics come from the fitting set; sparse statistics use only the
    positions where the mask is 1, and masked positions stay exactly 0.
    """

    def fit(self, samples):
        dense = np.concatenate([s.dense for s in samples])
        self.dense_mean_ = dense.mean(axis=0) if dense.size else np.zeros(dense.shape[1])
        self.dense_scale_ = _safe_std(dense)
        m = samples[0].masks.shape[1]
        self.sparse_mean_ = np.zeros(m)
        self.sparse_scale_ = np.ones(m)
        if m:
            masks = np.concatenate([s.masks for s in samples]).astype(bool)
            values = np.concatenate([s.values for s in samples])
            for k in range(m):
                v = values[masks[:, k], k]
                if v.size:
                    self.sparse_mean_[k] = v.mean()
                    self.sparse_scale_[k] = _safe_std(v[:, None])[0]
        return self

    def transform(self, samples):
        out = []
        for s in samples:
            values = np.where(s.masks, (s.values - self.sparse_mean_) / self.sparse_scale_, 0.0)
            out.append(
                dataclasses.replace(s, dense=(s.dense - self.dense_mean_) / self.dense_scale_, values=values)
            )
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("dense_mean_", "dense_scale_", "sparse_mean_", "sparse_scale_")}

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceScaler":
        obj = cls()
        for k, v in d.items():
            setattr(obj, k, np.asarray(v, dtype=float))
        return obj


def _safe_std(a):
    sd = a.std(axis=0) if a.size else np.ones(a.shape[1])
    return np.where(sd > 0, sd, 1.0)


class STLSTMClassifier(ClassifierMixin, BaseEstimator):
    """Stacked recurrent sequence classifier for the five feature types.

    ``X`` is always a list of :class:`~stlstm.data.samples.SequenceSample`.

    Parameters
    ----------
    cell : {'stlstm', 'tlstm', 'lstm'}, default='stlstm'
        Bottom cell. Non-sparse cells receive the sparse channels forward
        filled as extra dense inputs.
    n_upper : int, default=1
        Plain LSTM layers stacked on the bottom cell.
    hidden_dense, hidden_sparse : int, default=32
        Hidden split of the bottom cell. Cells without sparse inputs use
        their sum as hidden size.
    hidden_upper : int or None, default=None
        Hidden size of upper layers; defaults to ``hidden_dense + hidden_sparse``.
    embedding_dim : int, default=64
        Width of the static dense embedding.
    aggregation : {'dense_layer', 'average', 'max'}, default='dense_layer'
    candidate_activation : {'tanh', 'sigmoid'}, default='tanh'
    share_sparse_weights : bool, default=False
    use_static_dense, use_static_delta : bool, default=True
    standardize : bool, default=True
        Standardize dense and sparse value channels with training statistics.
    batch_size, max_epochs, patience, learning_rate, beta1, beta2, epsilon, clip_norm
        Optimization settings, see :class:`~stlstm.training.TrainConfig`.
    validation_fraction : float, default=0.1
        Share of the training set held out for early stopping when no
        explicit validation set is passed to :meth:`fit`.
    random_state : int, default=0
        Seeds initialization, shuffling and the validation split.

    Attributes
    ----------
    classes_ : ndarray
    network_ : Network
    history_ : list of EpochReport
    best_score_ : float
        Best validation macro-F1.
    """

    def __init__(
        self,
        cell="stlstm",
        n_upper=1,
        hidden_dense=32,
        hidden_sparse=32,
        hidden_upper=None,
        embedding_dim=64,
        aggregation="dense_layer",
        candidate_activation="tanh",
        share_sparse_weights=False,
        use_static_dense=True,
        use_static_delta=True,
        standardize=True,
        batch_size=32,
        max_epochs=200,
        patience=15,
        learning_rate=1e-3,
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-8,
        clip_norm=None,
        validation_fraction=0.1,
        random_state=0,
    ):
        self.cell = cell
        self.n_upper = n_upper
        self.hidden_dense = hidden_dense
        self.hidden_sparse = hidden_sparse
        self.hidden_upper = hidden_upper
        self.embedding_dim = embedding_dim
        self.aggregation = aggregation
        self.candidate_activation = candidate_activation
        self.share_sparse_weights = share_sparse_weights
        self.use_static_dense = use_static_dense
        self.use_static_delta = use_static_delta
        self.standardize = standardize
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.clip_norm = clip_norm
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    # helpers --------------------------------------------------------------

    def _model_config(self, samples, n_classes) -> ModelConfig:
        return ModelConfig(
            cell=self.cell,
            n_upper=self.n_upper,
            hidden_dense=self.hidden_dense,
            hidden_sparse=self.hidden_sparse,
            hidden_upper=self.hidden_upper,
            embedding_dim=self.embedding_dim,
            num_classes=n_classes,
            aggregation=self.aggregation,
            candidate_activation=self.candidate_activation,
            share_sparse_weights=self.share_sparse_weights,
            use_static_dense=self.use_static_dense,
            use_static_delta=self.use_static_delta,
            seed=int(self.random_state),
            **feature_dims(samples),
        )

    def _train_config(self, **overrides) -> TrainConfig:
        kw = dict(
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            lr=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.epsilon,
            clip_norm=self.clip_norm,
            seed=int(self.random_state),
        )
        kw.update(overrides)
        return TrainConfig(**kw)

    def _encode(self, samples, labels):
        idx = np.searchsorted(self.classes_, labels)
        if np.any(idx >= len(self.classes_)) or np.any(self.classes_[np.minimum(idx, len(self.classes_) - 1)] != labels):
            raise ValueError("y contains labels not seen during fit")
        return [dataclasses.replace(s, label=int(k)) for s, k in zip(samples, idx)]

    def _prepare(self, X):
        samples, _ = check_sequences(X)
        if self.scaler_ is not None:
            samples = self.scaler_.transform(samples)
        return samples

    # API ------------------------------------------------------------------

    def initialize(self, X, y=None, n_classes=None):
        """Build an untrained network for ``X`` without fitting weights."""
        samples, labels = check_sequences(X, y, require_labels=n_classes is None)
        self.classes_ = np.arange(n_classes) if n_classes is not None else np.unique(labels)
        self.scaler_ = SequenceScaler().fit(samples) if self.standardize else None
        self.network_ = Network(self._model_config(samples, len(self.classes_)))
        self.history_ = []
        self.best_score_ = float("nan")
        return self

    def fit(self, X, y=None, X_val=None, y_val=None, log_path=None, checkpoint_path=None):
        """Train with early stopping on validation macro-F1.

        Parameters
        ----------
        X : list of SequenceSample
        y : array-like, optional
            Labels; defaults to the ``label`` stored on each sample.
        X_val, y_val : optional
            Validation set. When omitted, ``validation_fraction`` of ``X`` is
            held out at random.
        """
        samples, labels = check_sequences(X, y, require_labels=True)
        if X_val is None:
            rng = np.random.default_rng([int(self.random_state), 11])
            order = rng.permutation(len(samples))
            n_val = max(1, int(round(self.validation_fraction * len(samples))))
            if n_val >= len(samples):
                raise ValueError("training set too small to hold out a validation split")
            val_idx, tr_idx = np.sort(order[:n_val]), np.sort(order[n_val:])
            val_samples, val_labels = [samples[i] for i in val_idx], labels[val_idx]
            samples, labels = [samples[i] for i in tr_idx], labels[tr_idx]
        else:
            val_samples, val_labels = check_sequences(X_val, y_val, require_labels=True)
        self.classes_ = np.unique(labels)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes to fit a classifier")
        self.scaler_ = SequenceScaler().fit(samples) if self.standardize else None
        tr = self._encode(samples, labels)
        va = self._encode(val_samples, val_labels)
        if self.scaler_ is not None:
            tr, va = self.scaler_.transform(tr), self.scaler_.transform(va)
        self.network_ = Network(self._model_config(tr, len(self.classes_)))
        result = train(self.network_, tr, va, self._train_config(log_path=log_path))
        self.history_ = result.reports
        self.best_score_ = result.best_f1
        self.best_epoch_ = result.best_epoch
        if checkpoint_path:
            self.save(checkpoint_path)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        return predict_proba(self.network_, self._prepare(X))

    def predict(self, X):
        check_is_fitted(self, "network_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def evaluate(self, X, y=None) -> dict:
        """Macro-F1, accuracy and confusion matrix on ``X``."""
        check_is_fitted(self, "network_")
        samples, labels = check_sequences(X, y, require_labels=True)
        samples = self._encode(samples, labels)
        if self.scaler_ is not None:
            samples = self.scaler_.transform(samples)
        return evaluate(self.network_, samples)

    # persistence ------------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self, "network_")
        meta = {
            "model_config": self.network_.config.to_dict(),
            "estimator_params": self.get_params(),
            "classes": self.classes_.tolist(),
            "scaler": None if self.scaler_ is None else self.scaler_.to_dict(),
            "best_score": self.best_score_,
        }
        save_npz(path, self.network_.params, meta)

    @classmethod
    def load(cls, path) -> "STLSTMClassifier":
        arrays, meta = load_npz(path)
        est = cls(**meta["estimator_params"])
        cfg = ModelConfig.from_dict(meta["model_config"])
        est.network_ = Network(cfg, params={k: arrays[k] for k in Network(cfg).params})
        est.classes_ = np.asarray(meta["classes"])
        est.scaler_ = None if meta["scaler"] is None else SequenceScaler.from_dict(meta["scaler"])
        est.best_score_ = meta.get("best_score", float("nan"))
        est.history_ = []
        return est


__all__ = ["STLSTMClassifier", "SequenceScaler", "SequenceSample"]
