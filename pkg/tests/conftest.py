"""Shared test fixtures: tiny corpora, mock-backed gateways, and record
builders used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from motifcat.clustering import EmbeddingMatrix
from motifcat.corpus import Corpus, Novel
from motifcat.extraction import MotifRecord
from motifcat.gateway import Gateway, MockBackend


@pytest.fixture
def tiny_corpus() -> Corpus:
    return Corpus(
        novels=[
            Novel(
                id="alpha",
                title="Alpha and Omega",
                period="Imperial",
                author="anonymous",
                text="The ship sailed at dawn. A storm rose fast. They prayed.",
            ),
            Novel(
                id="beta",
                title="Beta",
                period="Komnenian",
                author=None,
                text="A letter arrived at night. The seal was broken. She wept.",
            ),
            Novel(
                id="gamma",
                title="Gamma",
                period="Palaiologan",
                author=None,
                text="The garden bloomed again. An oath was sworn under the pear tree.",
            ),
        ]
    )


@pytest.fixture
def mock_gateway(tmp_path) -> Gateway:
    return Gateway(MockBackend(), cache_dir=tmp_path / "cache", parallelism=2)


def make_records(spec: dict[str, int]) -> list[MotifRecord]:
    """spec maps novel_id -> number of records; sentences are distinct."""
    records = []
    for novel_id, count in spec.items():
        for i in range(count):
            records.append(
                MotifRecord(
                    novel_id=novel_id,
                    chunk_index=i // 3,
                    ordinal=i % 3,
                    sentence=f"{novel_id} motif sentence {i}.",
                )
            )
    return records


def embeddings_for(records: list[MotifRecord], dim: int = 6, seed: int = 0):
    rng = np.random.default_rng(seed)
    vectors = rng.normal(size=(len(records), dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    return EmbeddingMatrix(vectors=vectors, records=records)


def fixture_corpus_manifest() -> str:
    """Absolute path of the packaged two-novel corpus manifest."""
    from importlib.resources import files

    return str(files("motifcat") / "data" / "fixture_corpus" / "manifest.yaml")


def write_pipeline_config(directory, out_dir="out", **overrides) -> str:
    """A ready-to-run config against the packaged fixture corpus, small
    enough to finish a full run in about a second."""
    import yaml

    raw = {
        "seed": 0,
        "corpus": {"manifest": fixture_corpus_manifest()},
        "tokenizer": {"max_tokens": 120},
        "backend": {"kind": "mock", "parallelism": 4},
        "reducer": {"method": "pca", "n_components": 5},
        "hdbscan": {"min_cluster_size": 5, "min_samples": 3},
        "output": {"dir": out_dir},
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            raw.setdefault(key, {}).update(value)
        else:
            raw[key] = value
    path = directory / "pipeline.yaml"
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return str(path)
