"""Report rendering: file formats, precision rules, run-digest stamping,
and the run manifest's digest/load behavior."""

import csv
import json

import numpy as np
import pytest

from motifcat.analytics import (
    MotifMatrix,
    PeriodFreqTable,
    fluctuation_scores,
    period_relative_frequencies,
    persistence_scores,
    similarity_matrix,
    uniqueness_scores,
)
from motifcat.clustering import build_catalog, relabel_cluster
from motifcat.errors import ReportError
from motifcat.report import (
    RunManifest,
    emit_figure_data,
    emit_frequency_table,
    emit_motif_appendix,
    emit_similarity_report,
    emit_uniqueness_report,
    resolve_timestamp,
    similarity_pairs,
)

from conftest import embeddings_for, make_records


def read_csv(path):
    """Rows of a report CSV, separating the optional run-comment line."""
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    comment = lines[0] if lines and lines[0].startswith("#") else None
    data = lines[1:] if comment else lines
    return comment, list(csv.reader(data))


def matrix_from(counts, periods):
    counts = np.asarray(counts, dtype=np.int64)
    n, m = counts.shape
    return MotifMatrix(
        counts=counts,
        novel_ids=[f"n{i}" for i in range(n)],
        titles=[f"Novel {i}" for i in range(n)],
        periods=list(periods),
        cluster_ids=list(range(m)),
        labels=[f"motif {j}" for j in range(m)],
    )


@pytest.fixture
def small_matrix():
    return matrix_from(
        [[5, 1, 2], [4, 2, 0], [1, 3, 3], [2, 2, 2]],
        ["Imperial", "Imperial", "Komnenian", "Palaiologan"],
    )


def labeled_catalog():
    records = make_records({"a": 9})
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 2, 2])
    catalog = build_catalog(records, labels, embeddings_for(records))
    catalog.clusters = [
        relabel_cluster(c, f"Theme number {c.cluster_id}", False, False)
        for c in catalog.clusters
    ]
    return catalog


class TestResolveTimestamp:
    def test_offline_pins_epoch(self, monkeypatch):
        monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
        assert resolve_timestamp(offline=True) == "1970-01-01T00:00:00Z"

    def test_source_date_epoch_wins(self, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "946684800")
        assert resolve_timestamp(offline=False) == "2000-01-01T00:00:00Z"
        assert resolve_timestamp(offline=True) == "2000-01-01T00:00:00Z"

    def test_online_iso_format(self, monkeypatch):
        monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
        stamp = resolve_timestamp(offline=False)
        assert len(stamp) == 20 and stamp.endswith("Z") and stamp[10] == "T"


def manifest(**overrides):
    base = dict(
        created_at="1970-01-01T00:00:00Z",
        seed=7,
        tokenizer={"name": "unicode-words", "max_tokens": 1000},
        prompt_checksums={"extraction": "aa", "labeling": "bb"},
        models={"chat": "m1", "embedding": "m2", "label": "m3"},
        backend_kind="mock",
        reducer={"method": "pca", "n_components": 5},
        hdbscan={"min_cluster_size": 10},
        analytics={"stddev": "population"},
        corpus_digest="cd",
    )
    base.update(overrides)
    return RunManifest(**base)


class TestRunManifest:
    def test_digest_stable_for_same_inputs(self):
        assert manifest().digest == manifest().digest

    def test_digest_tracks_every_header_field(self):
        base = manifest().digest
        assert manifest(seed=8).digest != base
        assert manifest(backend_kind="remote").digest != base
        assert manifest(corpus_digest="other").digest != base

    def test_config_digest_ignores_stages(self):
        m = manifest()
        before = m.config_digest
        m.record_stage("ingest", novels=2, chunks=38)
        assert m.config_digest == before
        assert m.digest != manifest().digest  # full digest does track stages

    def test_document_embeds_both_digests(self):
        m = manifest()
        m.record_stage("extract", records=100)
        doc = m.to_document()
        assert doc["config_digest"] == m.config_digest
        assert doc["digest"] == m.digest
        assert doc["stages"]["extract"] == {"records": 100}

    def test_save_load_roundtrip(self, tmp_path):
        m = manifest()
        m.record_stage("ingest", novels=2)
        path = tmp_path / "manifest.json"
        m.save(path)
        loaded = RunManifest.load(path)
        assert loaded.digest == m.digest
        assert loaded.stages == m.stages
        assert loaded.created_at == m.created_at

    def test_saved_file_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        manifest().save(a)
        manifest().save(b)
        assert a.read_bytes() == b.read_bytes()


class TestMotifAppendix:
    def test_format_and_ordering(self, tmp_path):
        catalog = labeled_catalog()
        text_path, csv_path = emit_motif_appendix(catalog, tmp_path)
        lines = text_path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "1. Theme number 0 - 4 occurrences"
        assert lines[1] == "2. Theme number 1 - 3 occurrences"
        assert lines[2] == "3. Theme number 2 - 2 occurrences"
        _, rows = read_csv(csv_path)
        assert rows[0] == ["rank", "cluster_id", "label", "occurrences",
                           "medoid_sentence"]
        assert len(rows) == 4

    def test_unlabeled_cluster_rejected(self, tmp_path):
        records = make_records({"a": 4})
        catalog = build_catalog(
            records, np.zeros(4, dtype=int), embeddings_for(records)
        )
        with pytest.raises(ReportError, match="no label"):
            emit_motif_appendix(catalog, tmp_path)

    def test_empty_catalog_emits_empty_files(self, tmp_path, caplog):
        records = make_records({"a": 3})
        catalog = build_catalog(
            records, np.full(3, -1), embeddings_for(records)
        )
        with caplog.at_level("WARNING"):
            text_path, _ = emit_motif_appendix(catalog, tmp_path)
        assert text_path.read_text(encoding="utf-8") == ""
        assert any("empty" in r.message for r in caplog.records)

    def test_run_digest_stamped(self, tmp_path):
        _, csv_path = emit_motif_appendix(
            labeled_catalog(), tmp_path, run_digest="deadbeef"
        )
        comment, _ = read_csv(csv_path)
        assert comment == "# run deadbeef"


class TestFigureData:
    def test_files_and_topk(self, tmp_path, small_matrix):
        table = period_relative_frequencies(small_matrix)
        fluct = fluctuation_scores(table)
        persist = persistence_scores(table)
        paths = emit_figure_data(fluct, persist, table, tmp_path, k=2)
        names = [p.name for p in paths]
        assert names == [
            "figure_fluctuation.csv", "figure_persistence.csv",
            "metric_summary.txt",
        ]
        _, rows = read_csv(paths[0])
        assert rows[0] == ["cluster_id", "label", "std_dev",
                           "Imperial", "Komnenian", "Palaiologan"]
        assert len(rows) == 3  # header + k
        # scores descending
        got = [float(r[2]) for r in rows[1:]]
        assert got == sorted(got, reverse=True)

    def test_full_precision_roundtrip(self, tmp_path, small_matrix):
        table = period_relative_frequencies(small_matrix)
        fluct = fluctuation_scores(table)
        paths = emit_figure_data(
            fluct, persistence_scores(table), table, tmp_path, k=3
        )
        _, rows = read_csv(paths[0])
        by_cluster = {int(r[0]): r for r in rows[1:]}
        for j, cid in enumerate(table.cluster_ids):
            if cid in by_cluster:
                assert float(by_cluster[cid][2]) == float(fluct[j])

    def test_k_capped_with_warning(self, tmp_path, small_matrix, caplog):
        table = period_relative_frequencies(small_matrix)
        with caplog.at_level("WARNING"):
            paths = emit_figure_data(
                fluctuation_scores(table), persistence_scores(table),
                table, tmp_path, k=50,
            )
        _, rows = read_csv(paths[0])
        assert len(rows) == 1 + 3
        assert any("capping" in r.message for r in caplog.records)

    def test_summary_two_lists(self, tmp_path, small_matrix):
        table = period_relative_frequencies(small_matrix)
        paths = emit_figure_data(
            fluctuation_scores(table), persistence_scores(table),
            table, tmp_path, k=2,
        )
        text = paths[2].read_text(encoding="utf-8")
        assert "Most fluctuating motifs" in text
        assert "Most persistent motifs" in text
        assert "std_dev = " in text and "mean = " in text


class TestSimilarityReport:
    def test_pairs_descending_and_alphabetical(self, small_matrix):
        sim = similarity_matrix(small_matrix)
        pairs = similarity_pairs(sim)
        assert len(pairs) == 6  # C(4,2)
        scores = [p[2] for p in pairs]
        assert scores == sorted(scores, reverse=True)
        for a, b, _ in pairs:
            assert a <= b

    def test_text_two_decimals_csv_full(self, tmp_path, small_matrix):
        sim = similarity_matrix(small_matrix)
        text_path, csv_path = emit_similarity_report(sim, tmp_path)
        lines = text_path.read_text(encoding="utf-8").splitlines()
        pairs = similarity_pairs(sim)
        assert lines[0] == (
            f"{pairs[0][0]} and {pairs[0][1]}: similarity {pairs[0][2]:.2f}"
        )
        _, rows = read_csv(csv_path)
        assert rows[0] == ["title_a", "title_b", "similarity"]
        for row, (a, b, score) in zip(rows[1:], pairs):
            assert row[0] == a and row[1] == b
            assert float(row[2]) == score  # repr() round-trips exactly

    def test_run_digest_stamped(self, tmp_path, small_matrix):
        sim = similarity_matrix(small_matrix)
        _, csv_path = emit_similarity_report(sim, tmp_path, run_digest="abc123")
        comment, _ = read_csv(csv_path)
        assert comment == "# run abc123"


class TestUniquenessReport:
    def test_per_novel_blocks(self, tmp_path, small_matrix):
        uniq = uniqueness_scores(small_matrix)
        text_path, csv_path = emit_uniqueness_report(uniq, tmp_path, k=2)
        text = text_path.read_text(encoding="utf-8")
        for title in small_matrix.titles:
            assert f"Novel: {title}" in text
        assert text.count("- Motif ") == 2 * len(small_matrix.titles)
        # two-decimal lift display
        first = uniq.top_k(0, 2)[0]
        assert f"(uniqueness: {first[1]:.2f})" in text
        _, rows = read_csv(csv_path)
        assert rows[0] == ["novel_id", "title", "cluster_id", "label", "lift",
                           "count"]
        assert len(rows) == 1 + 2 * len(small_matrix.titles)
        assert float(rows[1][4]) == first[1]

    def test_topk_agrees_with_table(self, tmp_path, small_matrix):
        uniq = uniqueness_scores(small_matrix)
        _, csv_path = emit_uniqueness_report(uniq, tmp_path, k=3)
        _, rows = read_csv(csv_path)
        for i, novel_id in enumerate(uniq.novel_ids):
            own = [r for r in rows[1:] if r[0] == novel_id]
            want = uniq.top_k(i, 3)
            assert [int(r[2]) for r in own] == [w[0] for w in want]


class TestFrequencyTable:
    def test_counts_and_frequencies(self, tmp_path, small_matrix):
        table = period_relative_frequencies(small_matrix)
        counts_path, freq_path = emit_frequency_table(
            small_matrix, table, tmp_path
        )
        _, rows = read_csv(counts_path)
        assert rows[0] == ["novel_id", "title", "period", "0", "1", "2"]
        assert rows[1] == ["n0", "Novel 0", "Imperial", "5", "1", "2"]
        _, frows = read_csv(freq_path)
        assert frows[0] == ["period", "0", "1", "2"]
        for p, row in enumerate(frows[1:]):
            got = [float(x) for x in row[1:]]
            np.testing.assert_array_equal(got, table.frequencies[p])

    def test_run_digest_on_both(self, tmp_path, small_matrix):
        table = period_relative_frequencies(small_matrix)
        paths = emit_frequency_table(
            small_matrix, table, tmp_path, run_digest="ff00"
        )
        for path in paths:
            comment, _ = read_csv(path)
            assert comment == "# run ff00"

    def test_no_digest_no_comment(self, tmp_path, small_matrix):
        table = period_relative_frequencies(small_matrix)
        paths = emit_frequency_table(small_matrix, table, tmp_path)
        for path in paths:
            comment, _ = read_csv(path)
            assert comment is None
