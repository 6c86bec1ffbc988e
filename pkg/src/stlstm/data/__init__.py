"""Datasets: the household power pipeline and a synthetic generator."""

from .power import DataError, ParseError, SequenceSpec, build_power_datasets, parse_power_csv
from .samples import Batch, SequenceSample, collate, load_samples, save_samples
from .synthetic import SyntheticSpec, synth_generate, synth_splits

__all__ = [
    "Batch",
    "DataError",
    "ParseError",
    "SequenceSample",
    "SequenceSpec",
    "SyntheticSpec",
    "build_power_datasets",
    "collate",
    "load_samples",
    "parse_power_csv",
    "save_samples",
    "synth_generate",
    "synth_splits",
]
