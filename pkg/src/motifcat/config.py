"""Pipeline configuration: one YAML file validated strictly before any
stage runs. Unknown keys are rejected at every level so typos fail fast
instead of silently falling back to defaults. Relative paths resolve
against the config file's directory. API keys never appear here; only the
name of the environment variable that holds one does.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError


def _require(section: dict, where: str, allowed: dict) -> dict:
    """Check unknown keys and types; return the section merged over defaults.

    allowed maps key -> (default, type or tuple of types); a default of
    _REQUIRED marks a mandatory key.
    """
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    merged = {}
    for key, (default, types) in allowed.items():
        if key in section:
            value = section[key]
        elif default is _REQUIRED:
            raise ConfigError(f"{where}: missing required key {key!r}")
        else:
            value = default
        if value is not None and types is not None and not isinstance(value, types):
            raise ConfigError(
                f"{where}.{key}: expected {types}, got {type(value).__name__}"
            )
        merged[key] = value
    return merged


class _Required:
    pass


_REQUIRED = _Required()

_BOOL = bool
_NUM = (int, float)


@dataclass
class PipelineConfig:
    config_dir: Path
    seed: int
    corpus_manifest: Path
    tokenizer_name: str
    max_tokens: int
    extra_terminators: list[str]
    backend_kind: str
    base_url: str | None
    api_key_env: str
    chat_model: str
    embedding_model: str
    label_model: str
    parallelism: int
    max_retries: int
    timeout: float
    failure_threshold: float
    extraction_temperature: float
    extraction_max_output_tokens: int
    reducer: dict
    hdbscan: dict
    k_representatives: int
    max_label_words: int
    label_temperature: float
    label_max_output_tokens: int
    stddev_mode: str
    dedup_chunks: bool
    network_threshold: float
    figure_top_k: int
    uniqueness_top_k: int
    out_dir: Path
    cache_dir: Path
    canned_replies: dict = field(default_factory=dict)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"config does not parse: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        return cls.from_dict(raw, config_dir=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, config_dir: str | Path = ".") -> "PipelineConfig":
        config_dir = Path(config_dir)
        top = _require(
            raw,
            "config",
            {
                "seed": (0, int),
                "corpus": (_REQUIRED, dict),
                "tokenizer": ({}, dict),
                "sentences": ({}, dict),
                "backend": ({}, dict),
                "extraction": ({}, dict),
                "reducer": ({}, dict),
                "hdbscan": ({}, dict),
                "labeling": ({}, dict),
                "analytics": ({}, dict),
                "report": ({}, dict),
                "output": (_REQUIRED, dict),
            },
        )
        corpus = _require(top["corpus"], "corpus", {"manifest": (_REQUIRED, str)})
        tokenizer = _require(
            top["tokenizer"],
            "tokenizer",
            {"name": ("unicode-words", str), "max_tokens": (1000, int)},
        )
        sentences = _require(
            top["sentences"], "sentences", {"extra_terminators": ([], list)}
        )
        backend = _require(
            top["backend"],
            "backend",
            {
                "kind": ("mock", str),
                "base_url": (None, str),
                "api_key_env": ("MOTIFCAT_API_KEY", str),
                "chat_model": ("extraction-mock", str),
                "embedding_model": ("embedding-mock", str),
                "label_model": ("label-mock", str),
                "parallelism": (4, int),
                "max_retries": (2, int),
                "timeout": (60.0, _NUM),
                "canned_replies": ({}, dict),
            },
        )
        extraction = _require(
            top["extraction"],
            "extraction",
            {
                "failure_threshold": (0.01, _NUM),
                "temperature": (0.0, _NUM),
                "max_output_tokens": (512, int),
            },
        )
        reducer = _require(
            top["reducer"],
            "reducer",
            {
                "method": ("pca", str),
                "n_components": (5, int),
                "n_neighbors": (5, int),
                "min_dist": (0.09, _NUM),
                "metric": ("cosine", str),
            },
        )
        hdbscan = _require(
            top["hdbscan"],
            "hdbscan",
            {
                "min_cluster_size": (10, int),
                "min_samples": (10, int),
                "selection": ("eom", str),
                "allow_single_cluster": (False, _BOOL),
            },
        )
        labeling = _require(
            top["labeling"],
            "labeling",
            {
                "k_representatives": (20, int),
                "max_label_words": (30, int),
                "temperature": (0.0, _NUM),
                "max_output_tokens": (128, int),
            },
        )
        analytics = _require(
            top["analytics"],
            "analytics",
            {
                "stddev": ("population", str),
                "dedup_chunks": (False, _BOOL),
                "network_threshold": (0.0, _NUM),
            },
        )
        report = _require(
            top["report"],
            "report",
            {"figure_top_k": (5, int), "uniqueness_top_k": (3, int)},
        )
        output = _require(
            top["output"],
            "output",
            {"dir": (_REQUIRED, str), "cache_dir": (None, str)},
        )

        if backend["kind"] not in ("mock", "remote"):
            raise ConfigError(f"backend.kind must be mock or remote, got {backend['kind']!r}")
        if backend["kind"] == "remote" and not backend["base_url"]:
            raise ConfigError("backend.kind remote requires backend.base_url")
        if analytics["stddev"] not in ("population", "sample"):
            raise ConfigError("analytics.stddev must be population or sample")
        if not 0.0 <= float(extraction["failure_threshold"]) <= 1.0:
            raise ConfigError("extraction.failure_threshold must be in [0, 1]")
        if not all(isinstance(t, str) and len(t) == 1 for t in sentences["extra_terminators"]):
            raise ConfigError("sentences.extra_terminators must be single characters")
        if not all(
            isinstance(k, str) and isinstance(v, str)
            for k, v in backend["canned_replies"].items()
        ):
            raise ConfigError("backend.canned_replies must map strings to strings")

        out_dir = config_dir / output["dir"]
        cache_dir = (
            config_dir / output["cache_dir"]
            if output["cache_dir"]
            else out_dir / "cache"
        )
        return cls(
            config_dir=config_dir,
            seed=top["seed"],
            corpus_manifest=config_dir / corpus["manifest"],
            tokenizer_name=tokenizer["name"],
            max_tokens=tokenizer["max_tokens"],
            extra_terminators=list(sentences["extra_terminators"]),
            backend_kind=backend["kind"],
            base_url=backend["base_url"],
            api_key_env=backend["api_key_env"],
            chat_model=backend["chat_model"],
            embedding_model=backend["embedding_model"],
            label_model=backend["label_model"],
            parallelism=backend["parallelism"],
            max_retries=backend["max_retries"],
            timeout=float(backend["timeout"]),
            failure_threshold=float(extraction["failure_threshold"]),
            extraction_temperature=float(extraction["temperature"]),
            extraction_max_output_tokens=extraction["max_output_tokens"],
            reducer=reducer,
            hdbscan=hdbscan,
            k_representatives=labeling["k_representatives"],
            max_label_words=labeling["max_label_words"],
            label_temperature=float(labeling["temperature"]),
            label_max_output_tokens=labeling["max_output_tokens"],
            stddev_mode=analytics["stddev"],
            dedup_chunks=analytics["dedup_chunks"],
            network_threshold=float(analytics["network_threshold"]),
            figure_top_k=report["figure_top_k"],
            uniqueness_top_k=report["uniqueness_top_k"],
            out_dir=out_dir,
            cache_dir=cache_dir,
            canned_replies=dict(backend["canned_replies"]),
        )
