"""Synthetic asynchronous sequences with rare, informative sparse events.

Each sequence has irregular step times, a few noise dense channels and
``n_sparse`` sparse channels. Step 0 reports every sparse channel's initial
level; afterwards a channel reports a fresh N(0, 1) value with probability
``sparse_ratio``. The class depends on a score built from those later
events, each weighted by how recently it happened relative to the
prediction time::

    score = sum_k w_k * sum_{events e of k} v_e * exp(-(t_pred - t_e) / recency)
            + category_effect[c]

where ``t_pred`` is the last step time plus the static delta and ``c`` is
the static category. Scores are cut into classes at quantiles estimated
from a pilot draw, so label marginals follow ``class_balance``; a fraction
``label_noise`` of labels is then replaced by a different random class.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .samples import SequenceSample


@dataclass
class SyntheticSpec:
    n_samples: int = 1000
    min_length: int = 30
    max_length: int = 30
    n_dense: int = 2
    n_sparse: int = 3
    sparse_ratio: float = 0.05
    sparse_weights: list = field(default_factory=lambda: [1.0, -1.0, 0.5])
    recency: float = 15.0
    mean_gap: float = 1.0
    mean_final_gap: float = 5.0
    n_categories: int = 4
    category_effect: float = 0.6
    class_balance: list = field(default_factory=lambda: [1 / 3, 1 / 3, 1 / 3])
    label_noise: float = 0.02
    pilot_size: int = 20000
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("need 1 <= min_length <= max_length")
        if not 0.0 < self.sparse_ratio <= 1.0:
            raise ValueError("sparse_ratio must lie in (0, 1]")
        if len(self.sparse_weights) < self.n_sparse:
            raise ValueError("need one weight per sparse channel")
        if not np.isclose(sum(self.class_balance), 1.0) or len(self.class_balance) < 2:
            raise ValueError("class_balance must have >= 2 entries summing to 1")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError("label_noise must lie in [0, 1)")

    @property
    def num_classes(self) -> int:
        return len(self.class_balance)

    def category_offsets(self) -> np.ndarray:
        if self.n_categories <= 1:
            return np.zeros(max(self.n_categories, 1))
        return np.linspace(-1.0, 1.0, self.n_categories) * self.category_effect


def _draw(spec: SyntheticSpec, rng):
    T = int(rng.integers(spec.min_length, spec.max_length + 1))
    gaps = rng.exponential(spec.mean_gap, size=T)
    gaps[0] = 0.0
    times = np.cumsum(gaps)
    dense = rng.standard_normal((T, spec.n_dense))
    masks = rng.random((T, spec.n_sparse)) < spec.sparse_ratio
    masks[0] = True
    values = np.where(masks, rng.standard_normal((T, spec.n_sparse)), 0.0)
    category = int(rng.integers(spec.n_categories))
    final_gap = float(rng.exponential(spec.mean_final_gap))
    t_pred = times[-1] + final_gap
    w = np.asarray(spec.sparse_weights[: spec.n_sparse], dtype=float)
    recency = np.exp(-(t_pred - times) / spec.recency)
    events = values[1:] * recency[1:, None]
    score = float(events.sum(axis=0) @ w) + spec.category_offsets()[category]
    return T, gaps, times, dense, masks, values, category, final_gap, score


def _delta_features(gaps, times, dense):
    # second delta: time since the first dense channel last exceeded 1
    since = np.zeros(len(times))
    last = times[0]
    for t in range(len(times)):
        since[t] = times[t] - last
        if dense.shape[1] and dense[t, 0] > 1.0:
            last = times[t]
    return np.stack([gaps, since], axis=1)


def class_thresholds(spec: SyntheticSpec) -> np.ndarray:
    """Score cut points giving the requested class marginals."""
    rng = np.random.default_rng([spec.seed, 99])
    scores = np.array([_draw(spec, rng)[-1] for _ in range(spec.pilot_size)])
    return np.quantile(scores, np.cumsum(spec.class_balance)[:-1])


def synth_generate(spec: SyntheticSpec, n: int | None = None, stream: int = 0, thresholds=None) -> list[SequenceSample]:
    """Draw ``n`` samples (default ``spec.n_samples``) from stream ``stream``.

    Different streams of one spec are independent draws sharing the same
    class thresholds, which is how train/val/test splits are produced.
    """
    n = spec.n_samples if n is None else n
    thresholds = class_thresholds(spec) if thresholds is None else np.asarray(thresholds)
    rng = np.random.default_rng([spec.seed, stream])
    onehot = np.eye(spec.n_categories)
    out = []
    for i in range(n):
        T, gaps, times, dense, masks, values, category, final_gap, score = _draw(spec, rng)
        label = int(np.searchsorted(thresholds, score))
        clean = label
        if rng.random() < spec.label_noise:
            label = int((label + rng.integers(1, spec.num_classes)) % spec.num_classes)
        out.append(
            SequenceSample(
                dense=dense,
                delta=_delta_features(gaps, times, dense),
                masks=masks,
                values=values,
                static_dense=onehot[category],
                static_delta=np.array([final_gap]),
                label=label,
                meta={"index": i, "stream": stream, "clean_label": clean},
            )
        )
    return out


def synth_splits(spec: SyntheticSpec, sizes=(None, None, None)):
    """Train/val/test lists drawn from streams 0/1/2 plus a manifest."""
    thresholds = class_thresholds(spec)
    n_tr, n_va, n_te = sizes
    n_tr = spec.n_samples if n_tr is None else n_tr
    n_va = max(1, spec.n_samples // 4) if n_va is None else n_va
    n_te = max(1, spec.n_samples // 4) if n_te is None else n_te
    out = {
        "train": synth_generate(spec, n_tr, 0, thresholds),
        "val": synth_generate(spec, n_va, 1, thresholds),
        "test": synth_generate(spec, n_te, 2, thresholds),
    }
    counts = {k: len(v) for k, v in out.items()}
    dist = {
        k: (np.bincount([s.label for s in v], minlength=spec.num_classes) / len(v)).tolist() for k, v in out.items()
    }
    manifest = {
        "source": "synthetic",
        "spec": asdict(spec),
        "thresholds": thresholds.tolist(),
        "counts": counts,
        "label_distribution": dist,
    }
    return out, manifest


def rule_predict(sample: SequenceSample, spec: SyntheticSpec, thresholds) -> int:
    """Recover the noiseless class from a sample's observable features."""
    times = np.cumsum(sample.delta[:, 0])
    t_pred = times[-1] + sample.static_delta[0]
    w = np.asarray(spec.sparse_weights[: spec.n_sparse], dtype=float)
    score = 0.0
    for t in range(1, sample.length):
        for k in range(spec.n_sparse):
            if sample.masks[t, k]:
                score += w[k] * sample.values[t, k] * np.exp(-(t_pred - times[t]) / spec.recency)
    score += spec.category_offsets()[int(np.argmax(sample.static_dense))]
    return int(np.searchsorted(thresholds, score))
