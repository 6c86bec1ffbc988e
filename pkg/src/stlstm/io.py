"""Deterministic ``.npz`` containers.

``numpy.savez`` stamps each zip member with the wall-clock time, so two
saves of identical arrays differ byte-wise. These helpers pin the member
timestamp and ordering; the files stay readable with :func:`numpy.load`.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)
META_KEY = "__meta__"


def save_npz(path, arrays: dict, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    items = list(arrays.items())
    if meta is not None:
        items.append((META_KEY, np.array(json.dumps(meta, sort_keys=True))))
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in items:
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asanyarray(arr), allow_pickle=False)


def load_npz(path) -> tuple[dict, dict | None]:
    """Return ``(arrays, meta)`` from a file written by :func:`save_npz`."""
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files if k != META_KEY}
        meta = json.loads(str(data[META_KEY])) if META_KEY in data.files else None
    return arrays, meta
