"""All quantitative metrics over the labeled catalog: the novel x motif
count matrix, per-period relative frequencies, fluctuation (std dev across
periods), persistence (mean across periods), novel-pair cosine similarity,
per-novel uniqueness lift, and the node-link network export.

Conventions: novel vectors are raw counts (cosine is magnitude-invariant);
fluctuation uses the population standard deviation by default because the
period set is the whole population under study (a sample-mode flag exists);
uniqueness lift = (count / novel total) / (motif total / grand total), so a
motif spread proportionally to novel sizes scores exactly 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import MotifCatalog
from .corpus import Corpus
from .errors import AnalyticsError
from .extraction import MotifRecord


@dataclass
class MotifMatrix:
    counts: np.ndarray  # (n_novels, n_motifs) int64
    novel_ids: list[str]
    titles: list[str]
    periods: list[str]  # per novel
    cluster_ids: list[int]
    labels: list[str | None]

    def __post_init__(self) -> None:
        n, m = self.counts.shape
        if not (
            len(self.novel_ids) == len(self.titles) == len(self.periods) == n
            and len(self.cluster_ids) == len(self.labels) == m
        ):
            raise AnalyticsError("matrix metadata does not match counts shape")
        if np.any(self.counts < 0):
            raise AnalyticsError("counts must be nonnegative")


@dataclass
class PeriodFreqTable:
    periods: list[str]
    frequencies: np.ndarray  # (n_periods, n_motifs), each row sums to 1
    cluster_ids: list[int]
    labels: list[str | None]


@dataclass
class SimilarityMatrix:
    values: np.ndarray  # (n, n), symmetric, diagonal 1
    novel_ids: list[str]
    titles: list[str]
    periods: list[str]


@dataclass
class UniquenessTable:
    lift: np.ndarray  # (n_novels, n_motifs)
    counts: np.ndarray
    novel_ids: list[str]
    titles: list[str]
    cluster_ids: list[int]
    labels: list[str | None]

    def top_k(self, novel_index: int, k: int) -> list[tuple[int, float, int]]:
        """(cluster_id, lift, count) rows, highest lift first; ties prefer
        the larger count, then the lower cluster id."""
        row = self.lift[novel_index]
        counts = self.counts[novel_index]
        order = sorted(
            range(len(row)),
            key=lambda j: (-row[j], -counts[j], self.cluster_ids[j]),
        )
        return [
            (self.cluster_ids[j], float(row[j]), int(counts[j]))
            for j in order[:k]
        ]


def build_motif_matrix(
    records: Sequence[MotifRecord],
    catalog: MotifCatalog,
    corpus: Corpus,
    dedup_chunks: bool = False,
) -> MotifMatrix:
    """counts[n][m] = motif records of novel n in cluster m (or distinct
    chunks when dedup_chunks is set, matching the catalog's own counting)."""
    novel_ids = [novel.id for novel in corpus.novels]
    row_of = {novel_id: i for i, novel_id in enumerate(novel_ids)}
    for record in records:
        if record.novel_id not in row_of:
            raise AnalyticsError(f"record references unknown novel {record.novel_id!r}")
    counts = np.zeros((len(novel_ids), len(catalog.clusters)), dtype=np.int64)
    for col, cluster in enumerate(catalog.clusters):
        if cluster.cluster_id != col:
            raise AnalyticsError("catalog cluster ids are not dense")
        if dedup_chunks:
            seen = {(m.novel_id, m.chunk_index) for m in cluster.member_records}
            for novel_id, _ in seen:
                counts[row_of[novel_id], col] += 1
        else:
            for member in cluster.member_records:
                counts[row_of[member.novel_id], col] += 1
        if counts[:, col].sum() != cluster.occurrence_count:
            raise AnalyticsError(
                f"cluster {col}: column sum != occurrence_count "
                f"({counts[:, col].sum()} != {cluster.occurrence_count})"
            )
    return MotifMatrix(
        counts=counts,
        novel_ids=novel_ids,
        titles=[novel.title for novel in corpus.novels],
        periods=[novel.period for novel in corpus.novels],
        cluster_ids=[c.cluster_id for c in catalog.clusters],
        labels=[c.label for c in catalog.clusters],
    )


def period_relative_frequencies(matrix: MotifMatrix) -> PeriodFreqTable:
    """rel_freq[p][m] = clustered records of motif m in period p / all
    clustered records in period p."""
    period_order: list[str] = []
    for period in matrix.periods:
        if period not in period_order:
            period_order.append(period)
    frequencies = np.empty((len(period_order), matrix.counts.shape[1]))
    for i, period in enumerate(period_order):
        rows = [j for j, p in enumerate(matrix.periods) if p == period]
        period_counts = matrix.counts[rows].sum(axis=0).astype(np.float64)
        total = period_counts.sum()
        if total == 0:
            raise AnalyticsError(f"period {period!r} has zero clustered records")
        frequencies[i] = period_counts / total
    return PeriodFreqTable(
        periods=period_order,
        frequencies=frequencies,
        cluster_ids=list(matrix.cluster_ids),
        labels=list(matrix.labels),
    )


def fluctuation_scores(table: PeriodFreqTable, sample: bool = False) -> np.ndarray:
    """Per-motif standard deviation across periods (population by default)."""
    ddof = 1 if sample else 0
    if sample and len(table.periods) < 2:
        raise AnalyticsError("sample standard deviation needs >= 2 periods")
    return table.frequencies.std(axis=0, ddof=ddof)


def persistence_scores(table: PeriodFreqTable) -> np.ndarray:
    """Per-motif arithmetic mean frequency across periods."""
    return table.frequencies.mean(axis=0)


def top_k_by_score(
    scores: np.ndarray, cluster_ids: Sequence[int], k: int
) -> list[int]:
    """Column indices of the k best scores, descending; ties prefer the
    lower cluster id."""
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], cluster_ids[j]))
    return order[: min(k, len(order))]


def similarity_matrix(matrix: MotifMatrix) -> SimilarityMatrix:
    """Pairwise cosine similarity between novel count vectors."""
    counts = matrix.counts.astype(np.float64)
    norms = np.linalg.norm(counts, axis=1)
    zero_rows = np.flatnonzero(norms == 0.0)
    if zero_rows.size:
        bad = ", ".join(matrix.novel_ids[i] for i in zero_rows)
        raise AnalyticsError(f"novel(s) with no clustered motifs: {bad}")
    values = (counts @ counts.T) / np.outer(norms, norms)
    np.clip(values, 0.0, 1.0, out=values)
    np.fill_diagonal(values, 1.0)
    values = (values + values.T) / 2.0  # enforce exact symmetry
    return SimilarityMatrix(
        values=values,
        novel_ids=list(matrix.novel_ids),
        titles=list(matrix.titles),
        periods=list(matrix.periods),
    )


def uniqueness_scores(matrix: MotifMatrix) -> UniquenessTable:
    """lift[n][m] = (counts[n][m] / novel total) / (motif total / grand)."""
    counts = matrix.counts.astype(np.float64)
    row_totals = counts.sum(axis=1)
    col_totals = counts.sum(axis=0)
    grand = counts.sum()
    if grand == 0:
        raise AnalyticsError("empty matrix: no clustered records at all")
    if np.any(row_totals == 0.0):
        bad = ", ".join(
            matrix.novel_ids[i] for i in np.flatnonzero(row_totals == 0.0)
        )
        raise AnalyticsError(f"novel(s) with no clustered motifs: {bad}")
    with np.errstate(invalid="ignore", divide="ignore"):
        lift = (counts / row_totals[:, None]) / (col_totals[None, :] / grand)
    lift[:, col_totals == 0.0] = 0.0  # unreachable for catalog motifs
    return UniquenessTable(
        lift=lift,
        counts=matrix.counts.copy(),
        novel_ids=list(matrix.novel_ids),
        titles=list(matrix.titles),
        cluster_ids=list(matrix.cluster_ids),
        labels=list(matrix.labels),
    )


def network_export(sim: SimilarityMatrix, threshold: float = 0.0) -> dict:
    """Node-link document: all novels as nodes, pairs at or above the
    threshold as weighted links, strongest first."""
    if not 0.0 <= threshold <= 1.0:
        raise AnalyticsError(f"threshold {threshold} outside [0, 1]")
    nodes = [
        {"id": nid, "title": title, "period": period}
        for nid, title, period in zip(sim.novel_ids, sim.titles, sim.periods)
    ]
    links = []
    n = len(sim.novel_ids)
    for i in range(n):
        for j in range(i + 1, n):
            weight = float(sim.values[i, j])
            if weight >= threshold:
                links.append(
                    {
                        "source": sim.novel_ids[i],
                        "target": sim.novel_ids[j],
                        "weight": weight,
                    }
                )
    links.sort(key=lambda e: (-e["weight"], e["source"], e["target"]))
    return {"nodes": nodes, "links": links}


def write_network(document: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, ensure_ascii=False, sort_keys=True, indent=1)
        fh.write("\n")
