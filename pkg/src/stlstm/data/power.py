"""Sequence construction from the UCI household electric power data.

The raw file is one minute-resolution series. It is gap-filled, cut into
overlapping windows of ``T_s`` records, subsampled to ``T`` records per
window (randomly or in groups of five), given sparse, delta and static
features, and labelled by the direction of the future voltage mean.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .samples import SequenceSample

logger = logging.getLogger(__name__)

POWER_COLUMNS = (
    "Global_active_power",
    "Global_reactive_power",
    "Voltage",
    "Global_intensity",
    "Sub_metering_1",
    "Sub_metering_2",
    "Sub_metering_3",
)
LABELS = ("down", "flat", "up")
TIME_OF_DAY = ("night", "morning", "afternoon", "evening")
N_STATIC_DENSE = 7 + 31 + 4


class DataError(Exception):
    """Input data violates the expected format or ordering."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SamplingError(RuntimeError):
    """Group sampling ran out of attempts; retry with a fresh seed."""


@dataclass
class SequenceSpec:
    """How sequences are cut from the record stream.

    ``sample_time`` (T_s) and ``horizon`` are in minutes, ``length`` (T) in
    records. ``sparse_ratios`` is either one ratio per sparse feature or a
    single ratio shared by all of them.
    """

    sample_time: int = 120
    shift: int = 30
    length: int = 50
    sampling: str = "random"
    sparse_features: list = field(default_factory=list)
    sparse_ratios: list = field(default_factory=list)
    horizon: int = 30
    label_mean: str = "window"
    seed: int = 0

    def __post_init__(self):
        if self.sampling not in ("random", "group5"):
            raise ValueError("sampling must be 'random' or 'group5'")
        if not 1 <= self.length <= self.sample_time:
            raise ValueError("need 1 <= length <= sample_time")
        if self.shift < 1 or self.horizon < 1:
            raise ValueError("shift and horizon must be >= 1")
        if self.sampling == "group5" and self.length % 5:
            raise ValueError("group5 sampling needs a length divisible by 5")
        if self.label_mean not in ("window", "kept"):
            raise ValueError("label_mean must be 'window' or 'kept'")
        unknown = set(self.sparse_features) - set(POWER_COLUMNS)
        if unknown:
            raise ValueError(f"unknown sparse features: {sorted(unknown)}")
        if len(set(self.sparse_features)) != len(self.sparse_features):
            raise ValueError("duplicate sparse features")
        self.sparse_ratios = list(self.ratios())

    def ratios(self) -> list[float]:
        m = len(self.sparse_features)
        r = list(self.sparse_ratios)
        if m == 0:
            return []
        if len(r) == 1:
            r = r * m
        if len(r) != m:
            raise ValueError("need one sparse ratio per sparse feature (or a single shared one)")
        if any(not 0.0 < x <= 1.0 for x in r):
            raise ValueError("sparse ratios must lie in (0, 1]")
        return [float(x) for x in r]

    @property
    def dense_features(self) -> list[str]:
        return [c for c in POWER_COLUMNS if c not in self.sparse_features]


# parsing ---------------------------------------------------------------------


def parse_power_csv(path) -> pd.DataFrame:
    """Read the semicolon-separated UCI file into a gap-filled frame.

    The result is indexed by minute timestamps and holds the seven
    measurement columns plus a boolean ``missing`` column. Missing fields
    (``?``) and missing minutes are filled with the preceding record's
    values; records before the first complete one are dropped.
    """
    try:
        raw = pd.read_csv(path, sep=";", dtype=str, keep_default_na=False, on_bad_lines="error")
    except pd.errors.ParserError as exc:
        raise ParseError(str(exc)) from exc
    expected = ["Date", "Time", *POWER_COLUMNS]
    if list(raw.columns) != expected:
        raise ParseError(f"unexpected header {list(raw.columns)}", line=1)
    if raw.empty:
        raise DataError("no records")

    ts = pd.to_datetime(raw["Date"] + " " + raw["Time"], format="%d/%m/%Y %H:%M:%S", errors="coerce")
    bad = np.flatnonzero(ts.isna().to_numpy())
    if bad.size:
        raise ParseError(f"bad timestamp {raw['Date'][bad[0]]!r} {raw['Time'][bad[0]]!r}", line=int(bad[0]) + 2)

    values = np.empty((len(raw), len(POWER_COLUMNS)))
    missing = np.zeros(len(raw), dtype=bool)
    for j, col in enumerate(POWER_COLUMNS):
        s = raw[col].str.strip()
        miss = (s == "?") | (s == "")
        num = pd.to_numeric(s.where(~miss), errors="coerce")
        bad = np.flatnonzero((num.isna() & ~miss).to_numpy())
        if bad.size:
            raise ParseError(f"non-numeric {col} value {raw[col][bad[0]]!r}", line=int(bad[0]) + 2)
        values[:, j] = num.to_numpy(dtype=float)
        missing |= miss.to_numpy()

    index = pd.DatetimeIndex(ts)
    step = np.diff(index.asi8)
    if np.any(step <= 0):
        i = int(np.flatnonzero(step <= 0)[0]) + 1
        raise DataError(f"timestamps not strictly increasing at line {i + 2}")
    frame = pd.DataFrame(values, index=index, columns=list(POWER_COLUMNS))
    frame["missing"] = missing
    full = pd.date_range(index[0], index[-1], freq="min")
    if len(full) != len(frame):
        flags = frame["missing"].reindex(full, fill_value=True)
        frame = frame[list(POWER_COLUMNS)].reindex(full)
        frame["missing"] = flags.to_numpy(dtype=bool)
    frame[list(POWER_COLUMNS)] = frame[list(POWER_COLUMNS)].ffill()
    complete = frame[list(POWER_COLUMNS)].notna().all(axis=1).to_numpy()
    if not complete.any():
        raise DataError("no complete record in file")
    first = int(np.argmax(complete))
    frame = frame.iloc[first:].copy()
    frame["missing"] = frame["missing"].astype(bool)
    frame.index.name = "timestamp"
    return frame


def filled_fraction(records: pd.DataFrame) -> float:
    return float(records["missing"].mean())


# windows and subsampling -----------------------------------------------------


def window_starts(n_records: int, sample_time: int, shift: int) -> np.ndarray:
    """Start indices of every full window; a trailing partial window is dropped."""
    if n_records < sample_time:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_records - sample_time + 1, shift, dtype=np.int64)


def window(records, sample_time: int, shift: int) -> np.ndarray:
    """Windows of ``sample_time`` consecutive rows, as a read-only view.

    Returns an array of shape ``(n_windows, sample_time, ...)``.
    """
    arr = np.asarray(records)
    view = np.lib.stride_tricks.sliding_window_view(arr, sample_time, axis=0)[::shift]
    return np.moveaxis(view, -1, 1)


def subsample_random(sample_time: int, length: int, rng) -> np.ndarray:
    """Keep offset 0 and ``length - 1`` further offsets drawn without replacement."""
    if not 1 <= length <= sample_time:
        raise ValueError("need 1 <= length <= sample_time")
    rest = rng.choice(np.arange(1, sample_time), size=length - 1, replace=False)
    return np.concatenate([[0], np.sort(rest)]).astype(np.int64)


def subsample_group(sample_time: int, length: int, rng, max_attempts: int = 1000) -> np.ndarray:
    """Keep runs of five consecutive offsets.

    The first run is offsets 0-4. Each further run is centred on a random
    offset in ``[8, sample_time)`` and rejected if it leaves the window or
    overlaps an existing run. Runs may abut.
    """
    if length % 5 or not 5 <= length <= sample_time:
        raise ValueError("length must be a multiple of 5 within the window")
    taken = np.zeros(sample_time, dtype=bool)
    taken[:5] = True
    for _ in range(length // 5 - 1):
        for _ in range(max_attempts):
            c = int(rng.integers(8, sample_time))
            lo, hi = c - 2, c + 3
            if hi > sample_time or taken[lo:hi].any():
                continue
            taken[lo:hi] = True
            break
        else:
            raise SamplingError(f"no free group of 5 after {max_attempts} attempts")
    return np.flatnonzero(taken).astype(np.int64)


def sparsify(columns, ratios, rng):
    """Turn ``(T, m)`` readings into a sparse stream ``(masks, values)``.

    Each step after the first is kept independently with the column's
    ratio; step 0 is always kept. Dropped positions carry value 0.
    """
    columns = np.asarray(columns, dtype=float)
    T, m = columns.shape
    ratios = np.asarray(ratios, dtype=float).reshape(-1)
    if ratios.shape[0] != m:
        raise ValueError("one ratio per sparse column required")
    masks = rng.random((T, m)) < ratios[None, :]
    masks[0] = True
    return masks, np.where(masks, columns, 0.0)


def time_of_day(hour: int) -> int:
    """Bin an hour: night [0, 6), morning [6, 12), afternoon [12, 18), evening [18, 24)."""
    return hour // 6


def statics(first_time: pd.Timestamp, offsets, sample_time: int):
    """One-hot calendar statics of the first record and the static delta.

    Returns ``(static_dense (42,), static_delta (1,))``; the delta is the
    number of minutes from the last kept record to the prediction time.
    """
    x = np.zeros(N_STATIC_DENSE)
    x[first_time.dayofweek] = 1.0
    x[7 + first_time.day - 1] = 1.0
    x[38 + time_of_day(first_time.hour)] = 1.0
    return x, np.array([float(sample_time - offsets[-1])])


def label_direction(voltage, start: int, offsets, sample_time: int, horizon: int, sigma: float, label_mean="window") -> int:
    """0 = down, 1 = flat, 2 = up, comparing the future voltage mean with the
    sequence mean against half a training standard deviation."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pred = start + sample_time
    if pred + horizon >= len(voltage):
        raise ValueError("not enough future records for the label")
    future = voltage[pred + 1 : pred + horizon + 1].mean()
    if label_mean == "window":
        past = voltage[start : start + sample_time].mean()
    else:
        past = voltage[start + np.asarray(offsets)].mean()
    diff = future - past
    if diff > sigma / 2:
        return 2
    if diff < -sigma / 2:
        return 0
    return 1


# splitting -------------------------------------------------------------------


def split_windows(starts, sample_time: int, fractions=(0.7, 0.15, 0.15)):
    """Chronological train/val/test split of window start indices.

    Validation windows sharing a record with any training window are
    dropped, and test windows sharing a record with any kept training or
    validation window are dropped.
    """
    fractions = np.asarray(fractions, dtype=float)
    if fractions.shape != (3,) or np.any(fractions < 0) or not np.isclose(fractions.sum(), 1.0):
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    starts = np.sort(np.asarray(starts))
    n = len(starts)
    n_tr = int(np.floor(fractions[0] * n))
    n_va = int(np.floor(fractions[1] * n))
    train = starts[:n_tr]
    val = starts[n_tr : n_tr + n_va]
    test = starts[n_tr + n_va :]
    if len(train):
        val = val[val >= train[-1] + sample_time]
        test = test[test >= train[-1] + sample_time]
    if len(val):
        test = test[test >= val[-1] + sample_time]
    return train, val, test


# assembly --------------------------------------------------------------------


def build_sample(records_values, timestamps, voltage, start, spec: SequenceSpec, sigma, ratios, dense_idx, sparse_idx):
    for attempt in range(5):
        rng = np.random.default_rng([spec.seed, int(start), attempt])
        try:
            if spec.sampling == "random":
                offsets = subsample_random(spec.sample_time, spec.length, rng)
            else:
                offsets = subsample_group(spec.sample_time, spec.length, rng)
            break
        except SamplingError:
            continue
    else:
        raise SamplingError(f"group sampling failed for window at {start}")
    rows = records_values[start + offsets]
    masks, values = sparsify(rows[:, sparse_idx], ratios, rng) if sparse_idx else (
        np.zeros((spec.length, 0), dtype=bool),
        np.zeros((spec.length, 0)),
    )
    delta = np.zeros((spec.length, 1))
    delta[1:, 0] = np.diff(offsets)
    sd, sdelta = statics(timestamps[start], offsets, spec.sample_time)
    label = label_direction(voltage, start, offsets, spec.sample_time, spec.horizon, sigma, spec.label_mean)
    return SequenceSample(
        dense=rows[:, dense_idx],
        delta=delta,
        masks=masks,
        values=values,
        static_dense=sd,
        static_delta=sdelta,
        label=label,
        meta={"start": int(start)},
    )


def build_power_datasets(records: pd.DataFrame, spec: SequenceSpec, fractions=(0.7, 0.15, 0.15)):
    """Run the full construction; returns ``({split: samples}, manifest)``."""
    values = records[list(POWER_COLUMNS)].to_numpy(dtype=float)
    timestamps = records.index
    steps = np.diff(timestamps.asi8)
    if len(steps) and np.any(steps != 60_000_000_000):
        raise DataError("records must be consecutive minutes (use parse_power_csv)")
    voltage = values[:, POWER_COLUMNS.index("Voltage")]
    n = len(values)
    starts = window_starts(n, spec.sample_time, spec.shift)
    usable = starts[starts + spec.sample_time + spec.horizon < n]
    train, val, test = split_windows(usable, spec.sample_time, fractions)
    if len(train) == 0:
        raise DataError("no training windows; the record stream is too short")
    lo, hi = train[0], train[-1] + spec.sample_time
    sigma = float(np.std(voltage[lo:hi]))
    if sigma <= 0:
        raise DataError("voltage has zero variance over the training split")
    dense_idx = [POWER_COLUMNS.index(c) for c in spec.dense_features]
    sparse_idx = [POWER_COLUMNS.index(c) for c in spec.sparse_features]
    ratios = spec.ratios()
    out = {}
    for name, split_starts in (("train", train), ("val", val), ("test", test)):
        out[name] = [
            build_sample(values, timestamps, voltage, s, spec, sigma, ratios, dense_idx, sparse_idx) for s in split_starts
        ]
    manifest = {
        "source": "power",
        "spec": asdict(spec),
        "sigma": sigma,
        "fractions": list(map(float, fractions)),
        "dense_features": spec.dense_features,
        "sparse_features": list(spec.sparse_features),
        "labels": list(LABELS),
        "n_windows": int(len(starts)),
        "n_usable": int(len(usable)),
        "dropped_overlap": int(len(usable) - len(train) - len(val) - len(test)),
        "filled_fraction": filled_fraction(records),
        "counts": {k: len(v) for k, v in out.items()},
        "label_distribution": {k: label_distribution(v, len(LABELS)) for k, v in out.items()},
    }
    return out, manifest


def label_distribution(samples, num_classes: int) -> list[float]:
    if not samples:
        return [0.0] * num_classes
    counts = np.bincount([s.label for s in samples], minlength=num_classes)
    return (counts / counts.sum()).tolist()
