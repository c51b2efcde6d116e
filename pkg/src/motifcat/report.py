"""Render appendix-style and figure-backing artifacts from analytics
outputs, plus the run manifest that records every parameter a rerun needs.

Every report comes in two variants holding the same numbers: a
human-readable text file (two-decimal display, mirroring the catalog's
published-table conventions) and a machine CSV at full precision.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .analytics import (
    MotifMatrix,
    PeriodFreqTable,
    SimilarityMatrix,
    UniquenessTable,
    top_k_by_score,
)
from .clustering import MotifCatalog
from .errors import ReportError

logger = logging.getLogger(__name__)

_EPOCH_ISO = "1970-01-01T00:00:00Z"


def resolve_timestamp(offline: bool) -> str:
    """Wall clock for online runs; pinned for offline ones so reruns are
    byte-identical. SOURCE_DATE_EPOCH overrides either way."""
    sde = os.environ.get("SOURCE_DATE_EPOCH")
    if sde is not None:
        moment = datetime.fromtimestamp(int(sde), tz=timezone.utc)
        return moment.strftime("%Y-%m-%dT%H:%M:%SZ")
    if offline:
        return _EPOCH_ISO
    return datetime.fromtimestamp(time.time(), tz=timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


@dataclass
class RunManifest:
    created_at: str
    seed: int
    tokenizer: dict
    prompt_checksums: dict
    models: dict
    backend_kind: str
    reducer: dict
    hdbscan: dict
    analytics: dict
    corpus_digest: str
    stages: dict = field(default_factory=dict)

    def record_stage(self, name: str, **details) -> None:
        self.stages[name] = details

    def _header(self) -> dict:
        return {
            "created_at": self.created_at,
            "seed": self.seed,
            "tokenizer": self.tokenizer,
            "prompt_checksums": self.prompt_checksums,
            "models": self.models,
            "backend_kind": self.backend_kind,
            "reducer": self.reducer,
            "hdbscan": self.hdbscan,
            "analytics": self.analytics,
            "corpus_digest": self.corpus_digest,
        }

    @staticmethod
    def _hash(doc: dict) -> str:
        return hashlib.sha256(
            json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()

    def to_document(self) -> dict:
        doc = self._header()
        doc["config_digest"] = self._hash(doc)
        doc["stages"] = self.stages
        doc["digest"] = self._hash(doc)
        return doc

    @property
    def config_digest(self) -> str:
        """Digest over the run's inputs and parameters only; stable for the
        whole run, stamped into every emitted data file for traceability."""
        return self._hash(self._header())

    @property
    def digest(self) -> str:
        return self.to_document()["digest"]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_document(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        doc.pop("digest", None)
        doc.pop("config_digest", None)
        return cls(**doc)


def _write_csv(
    path: Path,
    header: list[str],
    rows: list[list],
    run_digest: str | None = None,
) -> None:
    """Header-rowed CSV; when a run digest is given a '# run <digest>'
    comment line precedes the header so files trace back to their run."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if run_digest:
            fh.write(f"# run {run_digest}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def emit_motif_appendix(
    catalog: MotifCatalog, out_dir: str | Path, run_digest: str | None = None
) -> tuple[Path, Path]:
    """Numbered motif list, most frequent first (ties by cluster id):
    "N. label - C occurrences". Empty catalogs emit empty files."""
    out_dir = Path(out_dir)
    ordered = sorted(
        catalog.clusters, key=lambda c: (-c.occurrence_count, c.cluster_id)
    )
    if not ordered:
        logger.warning("catalog is empty; emitting an empty motif list")
    for cluster in ordered:
        if cluster.label is None:
            raise ReportError(
                f"cluster {cluster.cluster_id} has no label; run labeling first"
            )
    text_path = out_dir / "motif_catalog.txt"
    csv_path = out_dir / "motif_catalog.csv"
    lines = [
        f"{i}. {c.label} - {c.occurrence_count} occurrences"
        for i, c in enumerate(ordered, start=1)
    ]
    text_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    _write_csv(
        csv_path,
        ["rank", "cluster_id", "label", "occurrences", "medoid_sentence"],
        [
            [i, c.cluster_id, c.label, c.occurrence_count, c.medoid_sentence]
            for i, c in enumerate(ordered, start=1)
        ],
        run_digest=run_digest,
    )
    return text_path, csv_path


def emit_figure_data(
    fluctuation: np.ndarray,
    persistence: np.ndarray,
    table: PeriodFreqTable,
    out_dir: str | Path,
    k: int = 5,
    run_digest: str | None = None,
) -> list[Path]:
    """Grouped-bar data for the top-k most fluctuating and most persistent
    motifs: one row per motif with its per-period frequencies, plus a text
    summary of both score lists."""
    out_dir = Path(out_dir)
    n_motifs = len(table.cluster_ids)
    if k > n_motifs:
        logger.warning("k=%d exceeds motif count %d; capping", k, n_motifs)
        k = n_motifs
    paths = []
    for name, scores, score_label in (
        ("figure_fluctuation.csv", fluctuation, "std_dev"),
        ("figure_persistence.csv", persistence, "mean"),
    ):
        picks = top_k_by_score(scores, table.cluster_ids, k)
        rows = [
            [
                table.cluster_ids[j],
                table.labels[j] if table.labels[j] is not None else "",
                repr(float(scores[j])),
            ]
            + [repr(float(table.frequencies[p, j])) for p in range(len(table.periods))]
            for j in picks
        ]
        path = out_dir / name
        _write_csv(
            path,
            ["cluster_id", "label", score_label] + list(table.periods),
            rows,
            run_digest=run_digest,
        )
        paths.append(path)

    summary = out_dir / "metric_summary.txt"
    fluct_picks = top_k_by_score(fluctuation, table.cluster_ids, k)
    persist_picks = top_k_by_score(persistence, table.cluster_ids, k)
    lines = ["Most fluctuating motifs (std dev of period frequency):"]
    lines += [
        f"Motif {table.cluster_ids[j]}: std_dev = {fluctuation[j]:.4f}"
        for j in fluct_picks
    ]
    lines.append("")
    lines.append("Most persistent motifs (mean period frequency):")
    lines += [
        f"Motif {table.cluster_ids[j]}: mean = {persistence[j]:.4f}"
        for j in persist_picks
    ]
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths.append(summary)
    return paths


def similarity_pairs(sim: SimilarityMatrix) -> list[tuple[str, str, float]]:
    """All unordered pairs, strongest first; ties order by title pair. The
    pair itself is oriented alphabetically."""
    n = len(sim.titles)
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            a, b = sorted((sim.titles[i], sim.titles[j]))
            pairs.append((a, b, float(sim.values[i, j])))
    pairs.sort(key=lambda p: (-p[2], p[0], p[1]))
    return pairs


def emit_similarity_report(
    sim: SimilarityMatrix, out_dir: str | Path, run_digest: str | None = None
) -> tuple[Path, Path]:
    """One line per novel pair, descending similarity, two-decimal display;
    the CSV keeps full precision."""
    out_dir = Path(out_dir)
    pairs = similarity_pairs(sim)
    text_path = out_dir / "similarity_pairs.txt"
    csv_path = out_dir / "similarity_pairs.csv"
    text_path.write_text(
        "".join(f"{a} and {b}: similarity {score:.2f}\n" for a, b, score in pairs),
        encoding="utf-8",
    )
    _write_csv(
        csv_path,
        ["title_a", "title_b", "similarity"],
        [[a, b, repr(score)] for a, b, score in pairs],
        run_digest=run_digest,
    )
    return text_path, csv_path


def emit_uniqueness_report(
    uniq: UniquenessTable, out_dir: str | Path, k: int = 3,
    run_digest: str | None = None,
) -> tuple[Path, Path]:
    """Per-novel top-k motifs by uniqueness lift, two-decimal display."""
    out_dir = Path(out_dir)
    text_path = out_dir / "uniqueness_top.txt"
    csv_path = out_dir / "uniqueness_top.csv"
    blocks = []
    rows = []
    for i, title in enumerate(uniq.titles):
        lines = [f"Novel: {title}", ""]
        for cluster_id, lift, count in uniq.top_k(i, k):
            label = uniq.labels[uniq.cluster_ids.index(cluster_id)] or ""
            lines.append(f"- Motif {cluster_id}: {label} (uniqueness: {lift:.2f})")
            rows.append([uniq.novel_ids[i], title, cluster_id, label, repr(lift), count])
        blocks.append("\n".join(lines))
    text_path.write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
    _write_csv(
        csv_path,
        ["novel_id", "title", "cluster_id", "label", "lift", "count"],
        rows,
        run_digest=run_digest,
    )
    return text_path, csv_path


def emit_frequency_table(
    matrix: MotifMatrix,
    table: PeriodFreqTable,
    out_dir: str | Path,
    run_digest: str | None = None,
) -> list[Path]:
    """The raw counts matrix and the per-period relative frequencies."""
    out_dir = Path(out_dir)
    counts_path = out_dir / "motif_counts.csv"
    _write_csv(
        counts_path,
        ["novel_id", "title", "period"] + [str(c) for c in matrix.cluster_ids],
        [
            [matrix.novel_ids[i], matrix.titles[i], matrix.periods[i]]
            + [int(x) for x in matrix.counts[i]]
            for i in range(len(matrix.novel_ids))
        ],
        run_digest=run_digest,
    )
    freq_path = out_dir / "period_frequencies.csv"
    _write_csv(
        freq_path,
        ["period"] + [str(c) for c in table.cluster_ids],
        [
            [table.periods[p]] + [repr(float(x)) for x in table.frequencies[p]]
            for p in range(len(table.periods))
        ],
        run_digest=run_digest,
    )
    return [counts_path, freq_path]
