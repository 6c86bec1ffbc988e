import json

import pytest

from stlstm.config import ConfigError, ExperimentConfig, apply_overrides, from_dict, load_config


def test_defaults_documented_values():
    cfg = ExperimentConfig()
    seq = cfg.data.sequence
    assert (seq.sample_time, seq.shift, seq.length, seq.horizon) == (120, 30, 50, 30)
    assert cfg.train.patience == 15
    assert (cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.eps) == (1e-3, 0.9, 0.999, 1e-8)
    assert cfg.model.candidate_activation == "tanh"


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        from_dict({"bogus": 1})
    with pytest.raises(ConfigError, match="model"):
        from_dict({"model": {"hiddn_dense": 3}})
    with pytest.raises(ConfigError):
        from_dict({"model": 3})


def test_overrides_typed():
    d = apply_overrides({}, ["model.hidden_dense=8", "train.clip_norm=1.5", "model.use_static_delta=false",
                             "data.sequence.sparse_features=[Voltage, Global_intensity]"])
    cfg = from_dict(d)
    assert cfg.model.hidden_dense == 8 and cfg.train.clip_norm == 1.5 and cfg.model.use_static_delta is False
    assert cfg.data.sequence.sparse_features == ["Voltage", "Global_intensity"]
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_file_round_trip(tmp_path):
    (tmp_path / "c.yaml").write_text("seed: 4\nmodel:\n  cell: tlstm\n")
    cfg = load_config(tmp_path / "c.yaml", ["train.batch_size=8"])
    assert cfg.seed == 4 and cfg.model.cell == "tlstm" and cfg.train.batch_size == 8
    cfg.dump(tmp_path / "eff.json")
    again = load_config(tmp_path / "eff.json")
    assert again == cfg
    assert json.loads((tmp_path / "eff.json").read_text())["train"]["batch_size"] == 8


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.yaml")


def test_scalar_types_checked():
    assert from_dict({"train": {"eps": "1e-08"}}).train.eps == 1e-8
    assert from_dict({"train": {"lr": 1}}).train.lr == 1.0
    for bad in ({"train": {"batch_size": 1.5}}, {"model": {"standardize": "yes"}}, {"seed": None}, {"model": {"cell": 3}}):
        with pytest.raises(ConfigError):
            from_dict(bad)


def test_dates_and_scalar_or_list():
    cfg = load_config(None, ["data.start_date=2007-01-01", "sweep.sparsity=[0.03, 0.07]"])
    assert cfg.data.start_date == "2007-01-01"
    assert cfg.sweep.sparsity == [0.03, 0.07]
    assert load_config(None, ["sweep.sparsity=0.1"]).sweep.sparsity == 0.1
