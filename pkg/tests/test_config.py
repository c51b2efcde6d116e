"""Config loading: strict key checking, defaults, type errors, and path
resolution relative to the config file."""

import pytest

from motifcat.config import PipelineConfig
from motifcat.errors import ConfigError

MINIMAL = {
    "corpus": {"manifest": "corpus/manifest.yaml"},
    "output": {"dir": "out"},
}


def write_yaml(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestDefaults:
    def test_minimal_config_fills_defaults(self):
        cfg = PipelineConfig.from_dict(dict(MINIMAL), config_dir="/base")
        assert cfg.seed == 0
        assert cfg.tokenizer_name == "unicode-words"
        assert cfg.max_tokens == 1000
        assert cfg.backend_kind == "mock"
        assert cfg.parallelism == 4
        assert cfg.failure_threshold == 0.01
        assert cfg.reducer["method"] == "pca"
        assert cfg.hdbscan["min_cluster_size"] == 10
        assert cfg.k_representatives == 20
        assert cfg.stddev_mode == "population"
        assert cfg.network_threshold == 0.0
        assert cfg.figure_top_k == 5
        assert cfg.uniqueness_top_k == 3
        assert cfg.canned_replies == {}

    def test_paths_resolve_against_config_dir(self):
        cfg = PipelineConfig.from_dict(dict(MINIMAL), config_dir="/base")
        assert str(cfg.corpus_manifest) == "/base/corpus/manifest.yaml"
        assert str(cfg.out_dir) == "/base/out"
        assert str(cfg.cache_dir) == "/base/out/cache"

    def test_explicit_cache_dir(self):
        raw = dict(MINIMAL)
        raw["output"] = {"dir": "out", "cache_dir": "shared-cache"}
        cfg = PipelineConfig.from_dict(raw, config_dir="/base")
        assert str(cfg.cache_dir) == "/base/shared-cache"


class TestRequiredKeys:
    def test_missing_corpus(self):
        with pytest.raises(ConfigError, match="missing required key 'corpus'"):
            PipelineConfig.from_dict({"output": {"dir": "out"}})

    def test_missing_output(self):
        with pytest.raises(ConfigError, match="missing required key 'output'"):
            PipelineConfig.from_dict({"corpus": {"manifest": "m.yaml"}})

    def test_missing_manifest(self):
        raw = {"corpus": {}, "output": {"dir": "out"}}
        with pytest.raises(ConfigError, match="corpus: missing required key"):
            PipelineConfig.from_dict(raw)

    def test_missing_output_dir(self):
        raw = {"corpus": {"manifest": "m.yaml"}, "output": {}}
        with pytest.raises(ConfigError, match="output: missing required key"):
            PipelineConfig.from_dict(raw)


class TestUnknownKeys:
    def test_top_level(self):
        raw = dict(MINIMAL)
        raw["corps"] = {"manifest": "x"}
        with pytest.raises(ConfigError, match=r"config: unknown keys \['corps'\]"):
            PipelineConfig.from_dict(raw)

    def test_nested_section(self):
        raw = dict(MINIMAL)
        raw["tokenizer"] = {"max_token": 500}
        with pytest.raises(ConfigError, match="tokenizer: unknown keys"):
            PipelineConfig.from_dict(raw)

    def test_backend_section(self):
        raw = dict(MINIMAL)
        raw["backend"] = {"api_key": "sk-123"}  # keys never belong in config
        with pytest.raises(ConfigError, match="backend: unknown keys"):
            PipelineConfig.from_dict(raw)


class TestTypeChecking:
    def test_wrong_scalar_type(self):
        raw = dict(MINIMAL)
        raw["seed"] = "seven"
        with pytest.raises(ConfigError, match="config.seed: expected"):
            PipelineConfig.from_dict(raw)

    def test_wrong_section_type(self):
        raw = dict(MINIMAL)
        raw["tokenizer"] = "unicode-words"
        with pytest.raises(ConfigError, match="config.tokenizer: expected"):
            PipelineConfig.from_dict(raw)

    def test_timeout_accepts_int_or_float(self):
        raw = dict(MINIMAL)
        raw["backend"] = {"timeout": 30}
        assert PipelineConfig.from_dict(raw).timeout == 30.0
        raw["backend"] = {"timeout": 30.5}
        assert PipelineConfig.from_dict(raw).timeout == 30.5


class TestValueChecks:
    def test_backend_kind(self):
        raw = dict(MINIMAL)
        raw["backend"] = {"kind": "local"}
        with pytest.raises(ConfigError, match="mock or remote"):
            PipelineConfig.from_dict(raw)

    def test_remote_requires_base_url(self):
        raw = dict(MINIMAL)
        raw["backend"] = {"kind": "remote"}
        with pytest.raises(ConfigError, match="base_url"):
            PipelineConfig.from_dict(raw)

    def test_remote_with_base_url_ok(self):
        raw = dict(MINIMAL)
        raw["backend"] = {"kind": "remote", "base_url": "https://api.example/v1"}
        cfg = PipelineConfig.from_dict(raw)
        assert cfg.base_url == "https://api.example/v1"

    def test_stddev_mode(self):
        raw = dict(MINIMAL)
        raw["analytics"] = {"stddev": "variance"}
        with pytest.raises(ConfigError, match="population or sample"):
            PipelineConfig.from_dict(raw)

    def test_failure_threshold_range(self):
        raw = dict(MINIMAL)
        raw["extraction"] = {"failure_threshold": 1.5}
        with pytest.raises(ConfigError, match=r"failure_threshold"):
            PipelineConfig.from_dict(raw)

    def test_terminators_single_char(self):
        raw = dict(MINIMAL)
        raw["sentences"] = {"extra_terminators": ["··"]}
        with pytest.raises(ConfigError, match="single characters"):
            PipelineConfig.from_dict(raw)
        raw["sentences"] = {"extra_terminators": ["·"]}
        cfg = PipelineConfig.from_dict(raw)
        assert cfg.extra_terminators == ["·"]

    def test_canned_replies_strings_only(self):
        raw = dict(MINIMAL)
        raw["backend"] = {"canned_replies": {"q": 42}}
        with pytest.raises(ConfigError, match="canned_replies"):
            PipelineConfig.from_dict(raw)


class TestFromYaml:
    def test_roundtrip(self, tmp_path):
        path = write_yaml(
            tmp_path / "run.yaml",
            "corpus:\n  manifest: corpus/manifest.yaml\n"
            "seed: 11\n"
            "output:\n  dir: results\n",
        )
        cfg = PipelineConfig.from_yaml(path)
        assert cfg.seed == 11
        assert cfg.corpus_manifest == tmp_path / "corpus/manifest.yaml"
        assert cfg.out_dir == tmp_path / "results"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            PipelineConfig.from_yaml(tmp_path / "absent.yaml")

    def test_unparseable_yaml(self, tmp_path):
        path = write_yaml(tmp_path / "bad.yaml", "corpus: [unclosed\n")
        with pytest.raises(ConfigError, match="does not parse"):
            PipelineConfig.from_yaml(path)

    def test_non_mapping_root(self, tmp_path):
        path = write_yaml(tmp_path / "list.yaml", "- a\n- b\n")
        with pytest.raises(ConfigError, match="mapping"):
            PipelineConfig.from_yaml(path)

    def test_empty_file_is_missing_required(self, tmp_path):
        path = write_yaml(tmp_path / "empty.yaml", "")
        with pytest.raises(ConfigError, match="missing required key"):
            PipelineConfig.from_yaml(path)
