"""Sequence samples, batches and the on-disk dataset container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..io import load_npz, save_npz

_ARRAY_FIELDS = ("dense", "delta", "masks", "values")


@dataclass
class SequenceSample:
    """One training example.

    Attributes
    ----------
    dense : ndarray (T, d_dense)
    delta : ndarray (T, d_delta)
        Elapsed-time features, non-negative.
    masks : ndarray (T, m) of bool
        Presence flag of each sparse feature at each step.
    values : ndarray (T, m)
        Sparse values; 0 wherever the mask is 0.
    static_dense : ndarray (d_static_dense,)
    static_delta : ndarray (d_static_delta,)
    label : int
    meta : dict
        Free-form provenance (window start, category, ...). Not used by models.
    """

    dense: np.ndarray
    delta: np.ndarray
    masks: np.ndarray
    values: np.ndarray
    static_dense: np.ndarray
    static_delta: np.ndarray
    label: int = -1
    meta: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.dense.shape[0]


@dataclass
class Batch:
    dense: np.ndarray
    delta: np.ndarray
    masks: np.ndarray
    values: np.ndarray
    static_dense: np.ndarray
    static_delta: np.ndarray
    labels: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.dense.shape[0]

    @property
    def length(self) -> int:
        return self.dense.shape[1]


def collate(samples) -> Batch:
    """Stack equal-length samples into a :class:`Batch`."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot collate an empty list of samples")
    lengths = {s.length for s in samples}
    if len(lengths) != 1:
        raise ValueError(f"samples in a batch must share one length, got {sorted(lengths)}")
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return Batch(
        dense=np.stack([s.dense for s in samples]).astype(float),
        delta=np.stack([s.delta for s in samples]).astype(float),
        masks=np.stack([s.masks for s in samples]).astype(bool),
        values=np.stack([s.values for s in samples]).astype(float),
        static_dense=np.stack([s.static_dense for s in samples]).astype(float),
        static_delta=np.stack([s.static_delta for s in samples]).astype(float),
        labels=labels if np.all(labels >= 0) else None,
    )


def length_buckets(samples, batch_size: int, rng=None) -> list[list[int]]:
    """Group sample indices by sequence length into batches.

    With ``rng`` the order inside each length group and the order of the
    resulting batches are shuffled; without it everything stays in index
    order.
    """
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.length, []).append(i)
    batches = []
    for length in sorted(groups):
        idx = np.array(groups[length])
        if rng is not None:
            idx = rng.permutation(idx)
        batches.extend(idx[j : j + batch_size].tolist() for j in range(0, len(idx), batch_size))
    if rng is not None:
        order = rng.permutation(len(batches))
        batches = [batches[k] for k in order]
    return batches


def feature_dims(samples) -> dict:
    s = samples[0]
    return {
        "d_dense": s.dense.shape[1],
        "d_delta": s.delta.shape[1],
        "n_sparse": s.masks.shape[1],
        "d_static_dense": s.static_dense.shape[0],
        "d_static_delta": s.static_delta.shape[0],
    }


# container -------------------------------------------------------------------


def save_samples(path, samples, meta: dict | None = None) -> None:
    """Write samples as one ragged container: time-major arrays are
    concatenated along time and split back using ``lengths``."""
    samples = list(samples)
    if not samples:
        raise ValueError("refusing to write an empty dataset")
    arrays = {name: np.concatenate([getattr(s, name) for s in samples]) for name in _ARRAY_FIELDS}
    arrays["masks"] = arrays["masks"].astype(np.uint8)
    arrays["lengths"] = np.array([s.length for s in samples], dtype=np.int64)
    arrays["static_dense"] = np.stack([s.static_dense for s in samples])
    arrays["static_delta"] = np.stack([s.static_delta for s in samples])
    arrays["label"] = np.array([s.label for s in samples], dtype=np.int64)
    meta = dict(meta or {})
    meta["sample_meta"] = [s.meta for s in samples]
    save_npz(path, arrays, meta)


def load_samples(path) -> tuple[list[SequenceSample], dict]:
    arrays, meta = load_npz(path)
    meta = meta or {}
    sample_meta = meta.pop("sample_meta", None)
    offsets = np.concatenate([[0], np.cumsum(arrays["lengths"])])
    out = []
    for i in range(len(arrays["lengths"])):
        a, b = offsets[i], offsets[i + 1]
        out.append(
            SequenceSample(
                dense=arrays["dense"][a:b],
                delta=arrays["delta"][a:b],
                masks=arrays["masks"][a:b].astype(bool),
                values=arrays["values"][a:b],
                static_dense=arrays["static_dense"][i],
                static_delta=arrays["static_delta"][i],
                label=int(arrays["label"][i]),
                meta=sample_meta[i] if sample_meta else {},
            )
        )
    return out, meta
