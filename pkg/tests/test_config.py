import pytest
import yaml

from flipuplift.config import BenchConfig, ClassifConfig, dump_config, load_config, parse_overrides
from flipuplift.errors import ConfigError


def _write(path, obj):
    path.write_text(yaml.safe_dump(obj))
    return path


def test_bench_config_round_trip(tmp_path):
    path = _write(tmp_path / "b.yaml", {
        "synthetic_n": 500, "synthetic_p": 1, "beta_control": [-2.0, 0.5], "beta_uplift": [0.1, 0.2],
        "metamodels": ["CVT", "flipped_cvt"], "learners": ["LR", "DT_0.05"], "reps": 3,
    })
    cfg = load_config(path, BenchConfig)
    assert cfg.metamodels == ["cvt", "flipped_cvt"]
    assert [c.name for c in cfg.learner_configs()] == ["LR", "DT_0.05"]
    dump_config(cfg, tmp_path / "out.yaml")
    assert load_config(tmp_path / "out.yaml", BenchConfig) == cfg


def test_schema_alias(tmp_path):
    path = _write(tmp_path / "b.yaml", {"dataset": "hill.csv", "schema": "hillstrom"})
    cfg = load_config(path, BenchConfig)
    assert cfg.schema_name == "hillstrom"
    assert "schema: hillstrom" in dump_config(cfg)


def test_overrides():
    assert parse_overrides(["reps=5", "learners=[LR, RF_10_0.05]", "out_dir=runs/a"]) == {
        "reps": 5, "learners": ["LR", "RF_10_0.05"], "out_dir": "runs/a",
    }
    with pytest.raises(ConfigError):
        parse_overrides(["reps"])


def test_overrides_win_over_file(tmp_path):
    path = _write(tmp_path / "c.yaml", {"reps": 10, "n": 300})
    cfg = load_config(path, ClassifConfig, {"reps": 2})
    assert cfg.reps == 2 and cfg.n == 300


@pytest.mark.parametrize("obj", [
    {"synthetic_n": 100, "optimizer": {"l2_penalty": 1.0}},
    {"synthetic_n": 100, "dataset": "x.csv"},
    {"reps": 3},
    {"synthetic_n": 100, "learners": ["SVM"]},
    {"synthetic_n": 100, "metamodels": ["XLearner"]},
    {"synthetic_n": 100, "unknown_key": 1},
    {"dataset": "x.csv", "schema": "nope"},
])
def test_invalid_bench_configs(tmp_path, obj):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path / "b.yaml", obj), BenchConfig)


def test_invalid_classif_sizes(tmp_path):
    with pytest.raises(ConfigError, match="n_minority"):
        load_config(_write(tmp_path / "c.yaml", {"n": 20, "n_minority": 20}), ClassifConfig)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.yaml", BenchConfig)
    bad = tmp_path / "bad.yaml"
    bad.write_text("- a\n- b\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(bad, BenchConfig)


def test_seeds_span_64_bits(tmp_path):
    path = _write(tmp_path / "b.yaml", {"dataset": "x.csv", "seed": 2**63 + 5})
    cfg = load_config(path, BenchConfig)
    assert cfg.seed == 2**63 + 5
    assert all(c.seed == cfg.seed for c in cfg.learner_configs())
    dump_config(cfg, tmp_path / "out.yaml")
    assert load_config(tmp_path / "out.yaml", BenchConfig).seed == cfg.seed
    with pytest.raises(ConfigError):
        load_config(path, BenchConfig, {"seed": 2**64})


def test_classif_minority_rate(tmp_path):
    path = _write(tmp_path / "c.yaml", {"dataset": "breast.csv", "minority_rate": 0.015})
    assert load_config(path, ClassifConfig).minority_rate == 0.015
    with pytest.raises(ConfigError, match="minority_rate"):
        load_config(path, ClassifConfig, {"minority_rate": 0.0})
