"""Experiment configuration: nested dataclasses loaded from YAML/JSON.

Unknown keys are rejected. ``key=value`` overrides address nested fields
with dots, e.g. ``data.sequence.length=40``; values are parsed as YAML
scalars so ``0.1``, ``true`` and ``[a, b]`` get their natural types.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    cell: str = "stlstm"
    n_upper: int = 1
    hidden_dense: int = 32
    hidden_sparse: int = 32
    hidden_upper: int | None = None
    embedding_dim: int = 64
    aggregation: str = "dense_layer"
    candidate_activation: str = "tanh"
    share_sparse_weights: bool = False
    use_static_dense: bool = True
    use_static_delta: bool = True
    standardize: bool = True


@dataclass
class TrainSection:
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 15
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None


@dataclass
class SequenceSection:
    sample_time: int = 120
    shift: int = 30
    length: int = 50
    sampling: str = "random"
    sparse_features: list = field(default_factory=lambda: ["Voltage"])
    sparse_ratios: list = field(default_factory=lambda: [0.07])
    horizon: int = 30
    label_mean: str = "window"


@dataclass
class SyntheticSection:
    n_samples: int = 1000
    n_val: int = 250
    n_test: int = 250
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


@dataclass
class DataSection:
    source: str = "power"
    csv_path: str = "household_power_consumption.txt"
    start_date: str | None = None
    end_date: str | None = None
    fractions: list = field(default_factory=lambda: [0.7, 0.15, 0.15])
    sequence: SequenceSection = field(default_factory=SequenceSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)


@dataclass
class GradcheckSection:
    hidden_dense: int = 4
    hidden_sparse: int = 4
    length: int = 6
    batch: int = 3
    n_dense: int = 3
    n_delta: int = 2
    n_sparse: int = 2
    n_static_dense: int = 3
    n_static_delta: int = 1
    embedding_dim: int = 3
    n_upper: int = 1
    eps: float = 1e-5
    tolerance: float = 1e-4


@dataclass
class SweepSection:
    seeds: list = field(default_factory=lambda: [0])
    sparsity_values: list = field(default_factory=lambda: [0.03, 0.07, 0.11, 0.15])
    sparsity: float | list = 0.07
    aggregations: list = field(default_factory=lambda: ["dense_layer", "average", "max"])
    statics: list = field(default_factory=lambda: ["none", "static_dense", "static_delta", "both"])
    subsets: list = field(default_factory=lambda: [["Voltage"], ["Voltage", "Global_intensity"]])


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)
    gradcheck: GradcheckSection = field(default_factory=GradcheckSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(unknown))}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        key = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, key)
        else:
            kwargs[name] = _coerce(value, hints[name], key)
    return cls(**kwargs)


def _coerce(value, hint, key):
    """Check scalar fields against their annotation.

    YAML reads ``1e-8`` as a string, so strings are accepted for floats.
    """
    allowed = typing.get_args(hint) or (hint,)
    if value is None:
        if type(None) in allowed:
            return None
        raise ConfigError(f"{key} may not be null")
    if list in allowed and isinstance(value, (list, tuple)):
        return list(value)
    if str in allowed and isinstance(value, (datetime.date, datetime.datetime)):
        # YAML turns bare dates into date objects
        return value.isoformat()
    if float in allowed and not isinstance(value, bool):
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if int in allowed:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if bool in allowed:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} must be true or false, got {value!r}")
    if list in allowed:
        if isinstance(value, (list, tuple)):
            return list(value)
        raise ConfigError(f"{key} must be a list, got {value!r}")
    if str in allowed:
        if isinstance(value, str):
            return value
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {}, "")


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings to a nested dict (in place)."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse value of {key!r}: {exc}") from exc
        node = data
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key!r} does not address a nested section")
        node[parts[-1]] = value
    return data


def load_config(path=None, overrides=None) -> ExperimentConfig:
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(apply_overrides(data, overrides))
