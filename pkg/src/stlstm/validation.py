"""Input checks for lists of :class:`SequenceSample`."""

from __future__ import annotations

import numpy as np

from .data.samples import SequenceSample


def check_sequences(X, y=None, *, require_labels: bool = False):
    """Validate a list of samples and return ``(samples, labels)``.

    All samples must share feature dimensions, have at least one step, hold
    finite features and non-negative delta features. ``y`` overrides the
    labels stored on the samples.
    """
    if isinstance(X, SequenceSample):
        raise TypeError("expected a sequence of SequenceSample, got a single sample")
    samples = list(X)
    if not samples:
        raise ValueError("found an empty list of sequences")
    for i, s in enumerate(samples):
        if not isinstance(s, SequenceSample):
            raise TypeError(f"item {i} is {type(s).__name__}, not SequenceSample")
    dims = _dims(samples[0])
    for i, s in enumerate(samples):
        if s.length < 1:
            raise ValueError(f"sequence {i} is empty")
        if _dims(s) != dims:
            raise ValueError(f"sequence {i} has feature dims {_dims(s)}, expected {dims}")
        n = s.length
        if s.delta.shape[0] != n or s.masks.shape[0] != n or s.values.shape[0] != n:
            raise ValueError(f"sequence {i} has inconsistent step counts")
        for name in ("dense", "delta", "values", "static_dense", "static_delta"):
            if not np.all(np.isfinite(getattr(s, name))):
                raise ValueError(f"sequence {i} has non-finite {name}")
        if np.any(s.delta < 0) or np.any(s.static_delta < 0):
            raise ValueError(f"sequence {i} has negative delta features")
    if y is None:
        labels = np.array([s.label for s in samples])
        if require_labels and np.any(labels < 0):
            raise ValueError("some samples carry no label and y was not given")
    else:
        labels = np.asarray(y)
        if labels.shape != (len(samples),):
            raise ValueError(f"y has shape {labels.shape}, expected ({len(samples)},)")
    return samples, labels


def _dims(s: SequenceSample):
    return (s.dense.shape[1], s.delta.shape[1], s.masks.shape[1], s.static_dense.shape[0], s.static_delta.shape[0])
