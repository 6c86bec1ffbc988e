"""Glue between :class:`ExperimentConfig` and the library: datasets,
estimators, the tiny gradient-check problem and comparison sweeps."""

from __future__ import annotations

import copy
import csv
import dataclasses
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .config import ConfigError, ExperimentConfig
from .data.power import DataError, SequenceSpec, build_power_datasets, parse_power_csv
from .data.samples import SequenceSample, collate, save_samples, load_samples
from .data.synthetic import SyntheticSpec, synth_splits
from .estimator import STLSTMClassifier
from .model import ModelConfig, Network, gradient_check

SPLITS = ("train", "val", "test")
SWEEP_AXES = ("sparsity", "sparse-subset", "aggregation", "statics")
SWEEP_COLUMNS = ("axis", "value", "sparsity", "n_seeds", "f1_tlstm", "f1_stlstm", "rel_change", "rel_change_vs_none")
RUN_COLUMNS = ("axis", "value", "sparsity", "seed", "f1_tlstm", "f1_stlstm", "rel_change", "rel_change_vs_none")
STATICS = {
    "none": (False, False),
    "static_dense": (True, False),
    "static_delta": (False, True),
    "both": (True, True),
}


# data ------------------------------------------------------------------------


def sequence_spec(cfg: ExperimentConfig) -> SequenceSpec:
    try:
        return SequenceSpec(seed=cfg.seed, **dataclasses.asdict(cfg.data.sequence))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"data.sequence: {exc}") from exc


def synthetic_spec(cfg: ExperimentConfig) -> SyntheticSpec:
    kw = dataclasses.asdict(cfg.data.synthetic)
    kw.pop("n_val")
    kw.pop("n_test")
    try:
        return SyntheticSpec(seed=cfg.seed, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"data.synthetic: {exc}") from exc


def load_records(cfg: ExperimentConfig) -> pd.DataFrame:
    """Parse the power CSV and cut it to ``[start_date, end_date]``."""
    path = Path(cfg.data.csv_path)
    if not path.is_file():
        raise DataError(f"power data file not found: {path}")
    records = parse_power_csv(path)
    if cfg.data.start_date or cfg.data.end_date:
        try:
            records = records.loc[cfg.data.start_date : cfg.data.end_date]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad date range: {exc}") from exc
        if records.empty:
            raise DataError("no records inside the requested date range")
    return records


def build_datasets(cfg: ExperimentConfig):
    """Return ``({split: [SequenceSample]}, manifest)`` for ``cfg.data``."""
    if cfg.data.source == "synthetic":
        syn = cfg.data.synthetic
        return synth_splits(synthetic_spec(cfg), (syn.n_samples, syn.n_val, syn.n_test))
    if cfg.data.source == "power":
        spec = sequence_spec(cfg)
        if len(cfg.data.fractions) != 3 or not np.isclose(sum(cfg.data.fractions), 1.0):
            raise ConfigError("data.fractions must be three numbers summing to 1")
        records = load_records(cfg)
        splits, manifest = build_power_datasets(records, spec, cfg.data.fractions)
        for name in SPLITS:
            if not splits[name]:
                raise DataError(f"the {name} split is empty; use a longer date range")
        manifest["csv_path"] = str(cfg.data.csv_path)
        manifest["date_range"] = [cfg.data.start_date, cfg.data.end_date]
        return splits, manifest
    raise ConfigError(f"data.source must be 'power' or 'synthetic', got {cfg.data.source!r}")


def write_datasets(splits, manifest, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        save_samples(out_dir / f"{name}.npz", splits[name], {"split": name})
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_datasets(data_dir):
    data_dir = Path(data_dir)
    if not (data_dir / "manifest.json").is_file():
        raise DataError(f"no prepared dataset in {data_dir}")
    splits = {name: load_samples(data_dir / f"{name}.npz")[0] for name in SPLITS}
    manifest = json.loads((data_dir / "manifest.json").read_text())
    return splits, manifest


# models ----------------------------------------------------------------------


def make_estimator(cfg: ExperimentConfig, **overrides) -> STLSTMClassifier:
    m, t = cfg.model, cfg.train
    params = dict(
        cell=m.cell,
        n_upper=m.n_upper,
        hidden_dense=m.hidden_dense,
        hidden_sparse=m.hidden_sparse,
        hidden_upper=m.hidden_upper,
        embedding_dim=m.embedding_dim,
        aggregation=m.aggregation,
        candidate_activation=m.candidate_activation,
        share_sparse_weights=m.share_sparse_weights,
        use_static_dense=m.use_static_dense,
        use_static_delta=m.use_static_delta,
        standardize=m.standardize,
        batch_size=t.batch_size,
        max_epochs=t.max_epochs,
        patience=t.patience,
        learning_rate=t.lr,
        beta1=t.beta1,
        beta2=t.beta2,
        epsilon=t.eps,
        clip_norm=t.clip_norm,
        random_state=cfg.seed,
    )
    params.update(overrides)
    return STLSTMClassifier(**params)


def fit_and_score(cfg: ExperimentConfig, splits, **overrides) -> dict:
    est = make_estimator(cfg, **overrides).fit(splits["train"], X_val=splits["val"])
    return {"val": est.evaluate(splits["val"])["macro_f1"], "test": est.evaluate(splits["test"])["macro_f1"]}


# gradient check ----------------------------------------------------------------


def tiny_problem(cfg: ExperimentConfig, cell: str):
    """A small network with perturbed weights and a random batch."""
    g = cfg.gradcheck
    rng = np.random.default_rng([cfg.seed, 5])
    B, T = g.batch, g.length
    masks = rng.random((B, T, g.n_sparse)) < 0.4
    masks[:, 0] = True
    samples = [
        SequenceSample(
            dense=rng.standard_normal((T, g.n_dense)),
            delta=rng.uniform(0.0, 2.0, (T, g.n_delta)),
            masks=masks[b],
            values=np.where(masks[b], rng.standard_normal((T, g.n_sparse)), 0.0),
            static_dense=rng.standard_normal(g.n_static_dense),
            static_delta=rng.uniform(0.0, 2.0, g.n_static_delta),
            label=int(rng.integers(3)),
        )
        for b in range(B)
    ]
    mcfg = ModelConfig(
        cell=cell,
        n_upper=g.n_upper,
        hidden_dense=g.hidden_dense,
        hidden_sparse=g.hidden_sparse,
        embedding_dim=g.embedding_dim,
        num_classes=3,
        aggregation=cfg.model.aggregation,
        candidate_activation=cfg.model.candidate_activation,
        share_sparse_weights=cfg.model.share_sparse_weights,
        seed=cfg.seed,
        d_dense=g.n_dense,
        d_delta=g.n_delta,
        n_sparse=g.n_sparse,
        d_static_dense=g.n_static_dense,
        d_static_delta=g.n_static_delta,
    )
    net = Network(mcfg)
    prng = np.random.default_rng([cfg.seed, 6])
    params = {}
    for k, v in net.params.items():
        p = v + 0.1 * prng.standard_normal(v.shape)
        params[k] = np.abs(p) if k.endswith("alpha") else p
    net.params = params
    return net, collate(samples)


def run_gradcheck(cfg: ExperimentConfig, cells=("lstm", "tlstm", "stlstm"), corrupt: bool = False) -> dict:
    """``{cell: {tensor: relative error}}`` on the tiny problem.

    ``corrupt`` perturbs one analytic gradient entry so callers can confirm
    that a broken gradient is reported.
    """
    out = {}
    for cell in cells:
        net, batch = tiny_problem(cfg, cell)
        analytic = None
        if corrupt:
            _, analytic = net.loss_and_grad(batch)
            name = sorted(analytic)[0]
            analytic[name] = analytic[name].copy()
            analytic[name].flat[0] += 1.0
        out[cell] = gradient_check(net, batch, eps=cfg.gradcheck.eps, analytic=analytic)
    return out


# sweeps ----------------------------------------------------------------------


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _with(cfg: ExperimentConfig, seed=None, sparsity=None, subset=None) -> ExperimentConfig:
    c = copy.deepcopy(cfg)
    if seed is not None:
        c.seed = int(seed)
    if sparsity is not None:
        c.data.synthetic.sparse_ratio = float(sparsity)
        c.data.sequence.sparse_ratios = [float(sparsity)]
    if subset is not None:
        if c.data.source == "synthetic":
            c.data.synthetic.n_sparse = int(subset)
        else:
            c.data.sequence.sparse_features = _as_list(subset)
            c.data.sequence.sparse_ratios = c.data.sequence.sparse_ratios[:1]
    return c


def _label(v) -> str:
    return "+".join(map(str, v)) if isinstance(v, (list, tuple)) else str(v)


def _rel(a, b):
    return (a - b) / b if b else float("nan")


def sweep_points(cfg: ExperimentConfig, axis: str):
    """Yield ``(value, sparsity)`` pairs of a sweep axis."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    sw = cfg.sweep
    if axis == "sparsity":
        return [(v, v) for v in sw.sparsity_values]
    if axis == "sparse-subset":
        return [(v, _as_list(sw.sparsity)[0]) for v in sw.subsets]
    values = sw.aggregations if axis == "aggregation" else sw.statics
    for v in values:
        if axis == "statics" and v not in STATICS:
            raise ConfigError(f"unknown statics variant {v!r}; choose from {tuple(STATICS)}")
    return [(v, s) for s in _as_list(sw.sparsity) for v in values]


def run_sweep(cfg: ExperimentConfig, axis: str, out_dir=None, log=print) -> tuple[list[dict], list[dict]]:
    """Train TLSTM and STLSTM with matched data and seeds at every point.

    Returns ``(summary_rows, run_rows)``; summary rows average the per-seed
    test macro-F1 and report ``(STLSTM - TLSTM) / TLSTM``. On the statics
    axis ``rel_change_vs_none`` compares STLSTM with and without statics.
    When ``out_dir`` is given each run writes ``<point>/result.json`` and
    the merged tables go to ``sweep_<axis>.csv`` and ``sweep_<axis>_runs.csv``.
    """
    points = sweep_points(cfg, axis)
    runs = []
    cache = {}
    for seed in cfg.sweep.seeds:
        for value, sparsity in points:
            subset = value if axis == "sparse-subset" else None
            c = _with(cfg, seed=seed, sparsity=sparsity, subset=subset)
            key = (seed, sparsity, _label(subset))
            if key not in cache:
                cache[key] = {"splits": build_datasets(c)[0]}
            entry = cache[key]
            splits = entry["splits"]
            kw = {}
            if axis == "aggregation":
                kw["aggregation"] = value
            if axis == "statics":
                kw["use_static_dense"], kw["use_static_delta"] = STATICS[value]
            # TLSTM ignores the aggregation mode, so one run per data draw serves all modes
            t_key = ("tlstm", kw.get("use_static_dense"), kw.get("use_static_delta"))
            if t_key not in entry:
                entry[t_key] = fit_and_score(c, splits, cell="tlstm", **{k: v for k, v in kw.items() if k != "aggregation"})
            f_t = entry[t_key]["test"]
            f_s = fit_and_score(c, splits, cell="stlstm", **kw)["test"]
            row = {
                "axis": axis,
                "value": _label(value),
                "sparsity": sparsity,
                "seed": seed,
                "f1_tlstm": f_t,
                "f1_stlstm": f_s,
                "rel_change": _rel(f_s, f_t),
                "rel_change_vs_none": "",
            }
            runs.append(row)
            log(f"{axis}={row['value']} sparsity={sparsity} seed={seed}: TLSTM {f_t:.4f} STLSTM {f_s:.4f}")
            if out_dir is not None:
                d = Path(out_dir) / f"sweep_{axis}" / f"{row['value']}_sp{sparsity}_seed{seed}"
                d.mkdir(parents=True, exist_ok=True)
                (d / "result.json").write_text(json.dumps(row, sort_keys=True) + "\n")
    if axis == "statics":
        for row in runs:
            base = next(
                (r["f1_stlstm"] for r in runs if r["value"] == "none" and r["seed"] == row["seed"] and r["sparsity"] == row["sparsity"]),
                None,
            )
            if base is not None:
                row["rel_change_vs_none"] = _rel(row["f1_stlstm"], base)
    summary = summarize(runs)
    if out_dir is not None:
        write_table(Path(out_dir) / f"sweep_{axis}.csv", summary, SWEEP_COLUMNS)
        write_table(Path(out_dir) / f"sweep_{axis}_runs.csv", runs, RUN_COLUMNS)
    return summary, runs


def summarize(runs: list[dict]) -> list[dict]:
    """Average run rows per ``(value, sparsity)``, keeping first-seen order."""
    groups: dict = {}
    for r in runs:
        groups.setdefault((r["value"], r["sparsity"]), []).append(r)
    out = []
    for (value, sparsity), rows in groups.items():
        f_t = float(np.mean([r["f1_tlstm"] for r in rows]))
        f_s = float(np.mean([r["f1_stlstm"] for r in rows]))
        vs = [r["rel_change_vs_none"] for r in rows if r["rel_change_vs_none"] != ""]
        out.append(
            {
                "axis": rows[0]["axis"],
                "value": value,
                "sparsity": sparsity,
                "n_seeds": len(rows),
                "f1_tlstm": f_t,
                "f1_stlstm": f_s,
                "rel_change": _rel(f_s, f_t),
                "rel_change_vs_none": float(np.mean(vs)) if vs else "",
            }
        )
    return out


def write_table(path, rows, columns) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
