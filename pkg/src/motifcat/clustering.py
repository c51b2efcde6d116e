"""Embed motif sentences, reduce dimensionality, and group them into a
motif catalog with density-based clustering; outliers stay out of every
downstream count.

The reducer is a seeded, deterministic PCA (or a pass-through for vectors
reduced elsewhere). Clustering is the in-repo HDBSCAN implementation (see
hdbscan module); cluster ids are re-canonicalized to dense ids ordered by
descending size so downstream reports are stable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ClusteringError
from .extraction import MotifRecord
from .gateway import EmbeddingRequest, Gateway
from .hdbscan import HdbscanResult, run_hdbscan


@dataclass(frozen=True)
class ReducerParams:
    method: str = "pca"  # none | pca | external
    n_components: int = 5
    n_neighbors: int = 5  # recorded for manifest parity; unused by pca
    min_dist: float = 0.09  # recorded for manifest parity; unused by pca
    metric: str = "cosine"  # cosine | euclidean

    def __post_init__(self) -> None:
        if self.method not in ("none", "pca", "external"):
            raise ClusteringError(f"unknown reducer method {self.method!r}")
        if self.n_components < 2:
            raise ClusteringError("n_components must be >= 2")
        if self.metric not in ("cosine", "euclidean"):
            raise ClusteringError(f"unknown reducer metric {self.metric!r}")


@dataclass(frozen=True)
class HdbscanParams:
    min_cluster_size: int = 10
    min_samples: int = 10
    selection: str = "eom"  # eom | leaf
    allow_single_cluster: bool = False

    def __post_init__(self) -> None:
        if self.min_cluster_size < 2:
            raise ClusteringError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ClusteringError("min_samples must be >= 1")
        if self.selection not in ("eom", "leaf"):
            raise ClusteringError(f"unknown selection method {self.selection!r}")


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray  # (n, d) float64
    records: list[MotifRecord]  # row i <-> records[i]

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.records):
            raise ClusteringError("vectors must align 1:1 with records")
        if not np.all(np.isfinite(self.vectors)):
            raise ClusteringError("embedding matrix contains NaN or Inf")


def embed_records(
    records: Sequence[MotifRecord],
    gateway: Gateway,
    model: str,
    normalize: bool = True,
    batch_size: int = 128,
) -> EmbeddingMatrix:
    """One embedding row per record (cache-aware). Rows are L2-normalized
    when the downstream reducer metric is cosine."""
    if not records:
        raise ClusteringError("no records to embed")
    texts = [r.sentence for r in records]
    rows: list[list[float]] = []
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        rows.extend(gateway.embed(EmbeddingRequest(model=model, texts=tuple(batch))))
    vectors = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(vectors)):
        raise ClusteringError("backend returned NaN/Inf embedding values")
    if normalize:
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ClusteringError("cannot normalize a zero embedding vector")
        vectors = vectors / norms
    return EmbeddingMatrix(vectors=vectors, records=list(records))


def reduce(matrix: np.ndarray, params: ReducerParams, seed: int = 0) -> np.ndarray:
    """Project to params.n_components dimensions.

    method "none" and "external" pass the input through unchanged
    ("external" marks vectors reduced outside this package). PCA centers
    the data and projects onto the top principal axes via SVD with a
    deterministic sign convention (the largest-magnitude loading of each
    axis is positive), so results are reproducible bit-for-bit; the seed is
    recorded for provenance but PCA itself is seed-free.
    """
    X = np.asarray(matrix, dtype=np.float64)
    if params.method in ("none", "external"):
        return X
    n, d = X.shape
    if params.n_components >= d:
        raise ClusteringError(
            f"n_components={params.n_components} must be < dimension {d}"
        )
    if n < params.n_components:
        raise ClusteringError(
            f"need at least {params.n_components} points, got {n}"
        )
    centered = X - X.mean(axis=0)
    _, singular_values, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[: params.n_components]
    # sign convention: flip each axis so its largest |loading| is positive
    flips = np.sign(components[np.arange(len(components)), np.abs(components).argmax(axis=1)])
    flips[flips == 0.0] = 1.0
    components = components * flips[:, None]
    return centered @ components.T


def hdbscan(points: np.ndarray, params: HdbscanParams) -> HdbscanResult:
    """Cluster reduced points; labels are -1 for outliers, dense from 0
    otherwise, with an excess-of-mass stability per cluster."""
    return run_hdbscan(
        points,
        min_cluster_size=params.min_cluster_size,
        min_samples=params.min_samples,
        selection=params.selection,
        allow_single_cluster=params.allow_single_cluster,
    )


@dataclass
class MotifCluster:
    cluster_id: int
    member_records: list[MotifRecord]
    occurrence_count: int
    medoid_sentence: str
    stability: float = 0.0
    label: str | None = None
    label_fallback: bool = False
    label_truncated: bool = False


@dataclass
class MotifCatalog:
    clusters: list[MotifCluster]
    outlier_records: list[MotifRecord]
    params: dict = field(default_factory=dict)

    def total_records(self) -> int:
        return sum(len(c.member_records) for c in self.clusters) + len(
            self.outlier_records
        )


def _medoid_index(member_rows: np.ndarray) -> int:
    """Row index minimizing summed cosine distance to co-members; ties go
    to the lower index (argmin convention)."""
    norms = np.linalg.norm(member_rows, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = member_rows / safe[:, None]
    cosine = unit @ unit.T
    total_distance = (1.0 - cosine).sum(axis=1)
    return int(np.argmin(total_distance))


def build_catalog(
    records: Sequence[MotifRecord],
    labels: np.ndarray,
    embeddings: EmbeddingMatrix,
    stabilities: dict[int, float] | None = None,
    dedup_chunks: bool = False,
    params: dict | None = None,
) -> MotifCatalog:
    """Partition records into clusters and outliers.

    Cluster ids are re-assigned densely from 0, ordered by descending
    member count with ties broken by the smallest member row index.
    occurrence_count counts member records, or distinct source chunks when
    dedup_chunks is set.
    """
    if len(records) != len(labels):
        raise ClusteringError("labels must align with records")
    if embeddings.records != list(records):
        raise ClusteringError("embedding matrix is for a different record set")
    stabilities = stabilities or {}

    groups: dict[int, list[int]] = {}
    outliers: list[MotifRecord] = []
    for i, (record, label) in enumerate(zip(records, labels)):
        if label < 0:
            outliers.append(record)
        else:
            groups.setdefault(int(label), []).append(i)

    ordering = sorted(groups, key=lambda g: (-len(groups[g]), min(groups[g])))
    clusters = []
    for dense_id, group in enumerate(ordering):
        row_indices = groups[group]
        members = [records[i] for i in row_indices]
        if dedup_chunks:
            count = len({(m.novel_id, m.chunk_index) for m in members})
        else:
            count = len(members)
        medoid_row = row_indices[_medoid_index(embeddings.vectors[row_indices])]
        clusters.append(
            MotifCluster(
                cluster_id=dense_id,
                member_records=members,
                occurrence_count=count,
                medoid_sentence=records[medoid_row].sentence,
                stability=float(stabilities.get(group, 0.0)),
            )
        )
    return MotifCatalog(
        clusters=clusters, outlier_records=outliers, params=dict(params or {})
    )


def relabel_cluster(
    cluster: MotifCluster, label: str, fallback: bool, truncated: bool
) -> MotifCluster:
    return replace(
        cluster, label=label, label_fallback=fallback, label_truncated=truncated
    )


# --- catalog and embedding file formats ---


def _record_ref(r: MotifRecord) -> list:
    return [r.novel_id, r.chunk_index, r.ordinal, r.sentence]


def _ref_record(ref: list) -> MotifRecord:
    return MotifRecord(
        novel_id=ref[0], chunk_index=ref[1], ordinal=ref[2], sentence=ref[3]
    )


def write_catalog(catalog: MotifCatalog, path: str | Path) -> None:
    doc = {
        "params": catalog.params,
        "clusters": [
            {
                "cluster_id": c.cluster_id,
                "occurrence_count": c.occurrence_count,
                "medoid_sentence": c.medoid_sentence,
                "stability": c.stability,
                "label": c.label,
                "label_fallback": c.label_fallback,
                "label_truncated": c.label_truncated,
                "members": [_record_ref(m) for m in c.member_records],
            }
            for c in catalog.clusters
        ],
        "outliers": [_record_ref(r) for r in catalog.outlier_records],
    }
    Path(path).write_text(
        json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=1) + "\n",
        encoding="utf-8",
    )


def read_catalog(path: str | Path) -> MotifCatalog:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    clusters = [
        MotifCluster(
            cluster_id=c["cluster_id"],
            member_records=[_ref_record(m) for m in c["members"]],
            occurrence_count=c["occurrence_count"],
            medoid_sentence=c["medoid_sentence"],
            stability=c.get("stability", 0.0),
            label=c.get("label"),
            label_fallback=c.get("label_fallback", False),
            label_truncated=c.get("label_truncated", False),
        )
        for c in doc["clusters"]
    ]
    return MotifCatalog(
        clusters=clusters,
        outlier_records=[_ref_record(r) for r in doc["outliers"]],
        params=doc.get("params", {}),
    )


_EMB_MAGIC = b"MCEB"
_EMB_VERSION = 1
_EMB_DTYPE_F64 = 1

# Byte layout (little-endian): 4s magic "MCEB" | u32 version | u32 dtype
# code (1 = float64) | u64 row count | u64 dimension | rows * dim float64
# values, row-major.
_EMB_HEADER = struct.Struct("<4sIIQQ")


def write_embeddings(path: str | Path, vectors: np.ndarray) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(
            _EMB_HEADER.pack(
                _EMB_MAGIC, _EMB_VERSION, _EMB_DTYPE_F64, *vectors.shape
            )
        )
        fh.write(vectors.tobytes())


def read_embeddings(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_EMB_HEADER.size)
        if len(header) != _EMB_HEADER.size:
            raise ClusteringError(f"{path}: truncated embedding header")
        magic, version, dtype_code, count, dim = _EMB_HEADER.unpack(header)
        if magic != _EMB_MAGIC:
            raise ClusteringError(f"{path}: not an embedding file")
        if version != _EMB_VERSION or dtype_code != _EMB_DTYPE_F64:
            raise ClusteringError(
                f"{path}: unsupported version/dtype ({version}, {dtype_code})"
            )
        data = np.frombuffer(fh.read(), dtype="<f8")
        if data.size != count * dim:
            raise ClusteringError(f"{path}: truncated embedding payload")
        return data.reshape(count, dim).copy()
