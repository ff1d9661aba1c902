import pytest

from gcnprune.config import coerce, emit_config, parse_config
from gcnprune.exceptions import ConfigError
from gcnprune.workflow import ExperimentConfig


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("", encoding="utf-8")
    cfg, defaulted = parse_config(p)
    assert (cfg.hidden_dim, cfg.lr, cfg.max_epoch) == (64, 0.01, 200)
    assert sorted(defaulted) == sorted(ExperimentConfig.field_names())


def test_flag_overrides_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("hidden_dim = 32\nlr = 0.05\n", encoding="utf-8")
    cfg, defaulted = parse_config(p, {"hidden_dim": "16"})
    assert cfg.hidden_dim == 16 and cfg.lr == 0.05
    assert "hidden_dim" not in defaulted and "lr" not in defaulted


def test_round_trip(tmp_path):
    cfg, _ = parse_config(None, {"weight_target": "61", "grid_w": "[0, 50.5]", "dataset": "d/cora",
                                 "warm_start": "false", "schedule": "geometric"})
    p = tmp_path / "out.toml"
    p.write_text(emit_config(cfg), encoding="utf-8")
    again, _ = parse_config(p)
    assert again == cfg


def test_unknown_key_and_type_errors(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("hiden_dim = 3\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="hiden_dim"):
        parse_config(p)
    with pytest.raises(ConfigError, match="hidden_dim"):
        coerce("hidden_dim", "abc")
    with pytest.raises(ConfigError, match="max_epoch"):
        parse_config(None, {"max_epoch": "-3"})
    p.write_text("[table]\nx = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        parse_config(p)


def test_int_promotes_to_float_not_bool():
    assert coerce("lr", 1) == 1.0
    with pytest.raises(ConfigError):
        coerce("hidden_dim", True)
