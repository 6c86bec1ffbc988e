"""Sparse Time LSTM: recurrent classification of asynchronous sequences."""

from .config import ConfigError, ExperimentConfig, load_config
from .data.samples import SequenceSample
from .estimator import SequenceScaler, STLSTMClassifier
from .model import ModelConfig, Network, gradient_check
from .training import TrainConfig, evaluate, macro_f1, train

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ModelConfig",
    "Network",
    "STLSTMClassifier",
    "SequenceSample",
    "SequenceScaler",
    "TrainConfig",
    "evaluate",
    "gradient_check",
    "load_config",
    "macro_f1",
    "train",
]
