"""Command-line pipeline orchestration.

Each subcommand runs one stage over a single YAML config and leaves its
artifact under the configured output directory, so expensive model-backed
stages can be resumed or rerun independently; run-all chains every stage.
Stage artifacts land via tmp-file-plus-rename so an interrupted run never
leaves a truncated artifact behind. Exit codes: 0 success, 1 stage
failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import analytics, prompts, refdata
from .clustering import (
    EmbeddingMatrix,
    HdbscanParams,
    ReducerParams,
    build_catalog,
    embed_records,
    hdbscan,
    read_catalog,
    read_embeddings,
    reduce,
    write_catalog,
    write_embeddings,
)
from .config import PipelineConfig
from .corpus import (
    Corpus,
    TokenizerSpec,
    chunk_novel,
    corpus_digest,
    load_corpus,
    read_chunks,
    write_chunks,
)
from .errors import ConfigError, GatewayError, MotifcatError, StageError
from .extraction import (
    ExtractionPrompt,
    extract_corpus,
    read_records,
    write_records,
)
from .gateway import Gateway, MockBackend, RemoteBackend
from .labeling import LabelRequestSpec, label_all
from .report import (
    RunManifest,
    emit_figure_data,
    emit_frequency_table,
    emit_motif_appendix,
    emit_similarity_report,
    emit_uniqueness_report,
    resolve_timestamp,
)


class _OfflineBackend:
    """Stands in for a remote backend under --offline: every request that
    misses the cache fails instead of touching the network."""

    def chat(self, req):
        raise GatewayError(
            "offline run: remote chat call refused (response not in cache)"
        )

    def embed(self, model, texts):
        raise GatewayError(
            "offline run: remote embedding call refused (response not in cache)"
        )


def _atomic_write(path: Path, write_fn) -> None:
    """write_fn fills a temp file next to path; rename makes it visible."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


class _Paths:
    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.stages = out_dir / "stages"
        self.analysis = out_dir / "analysis"
        self.report = out_dir / "report"
        self.manifest = out_dir / "manifest.json"
        self.chunks = self.stages / "chunks.jsonl"
        self.motifs = self.stages / "motifs.jsonl"
        self.warnings = self.stages / "extraction_warnings.log"
        self.embeddings = self.stages / "embeddings.bin"
        self.reduced = self.stages / "reduced.bin"
        self.catalog = self.stages / "catalog.json"
        self.catalog_labeled = self.stages / "catalog_labeled.json"
        self.network = self.analysis / "network.json"


class _Runtime:
    """Everything a stage needs: config, resolved paths, lazily built
    gateway, and the run manifest (created by ingest, updated per stage)."""

    def __init__(self, cfg: PipelineConfig, offline: bool):
        self.cfg = cfg
        self.offline = offline
        self.paths = _Paths(cfg.out_dir)
        self._gateway: Gateway | None = None
        self._corpus: Corpus | None = None
        self._manifest: RunManifest | None = None

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            if self.cfg.backend_kind == "mock":
                backend = MockBackend(canned=self.cfg.canned_replies)
            elif self.offline:
                backend = _OfflineBackend()
            else:
                backend = RemoteBackend(
                    base_url=self.cfg.base_url,
                    api_key_env=self.cfg.api_key_env,
                    timeout=self.cfg.timeout,
                )
            self._gateway = Gateway(
                backend,
                cache_dir=self.cfg.cache_dir,
                parallelism=self.cfg.parallelism,
                max_retries=self.cfg.max_retries,
            )
        return self._gateway

    @property
    def corpus(self) -> Corpus:
        if self._corpus is None:
            self._corpus = load_corpus(self.cfg.corpus_manifest)
        return self._corpus

    def tokenizer_spec(self) -> TokenizerSpec:
        return TokenizerSpec(
            name=self.cfg.tokenizer_name, max_tokens=self.cfg.max_tokens
        )

    def reducer_params(self) -> ReducerParams:
        return ReducerParams(
            method=self.cfg.reducer["method"],
            n_components=self.cfg.reducer["n_components"],
            n_neighbors=self.cfg.reducer["n_neighbors"],
            min_dist=float(self.cfg.reducer["min_dist"]),
            metric=self.cfg.reducer["metric"],
        )

    def hdbscan_params(self) -> HdbscanParams:
        return HdbscanParams(
            min_cluster_size=self.cfg.hdbscan["min_cluster_size"],
            min_samples=self.cfg.hdbscan["min_samples"],
            selection=self.cfg.hdbscan["selection"],
            allow_single_cluster=self.cfg.hdbscan["allow_single_cluster"],
        )

    # -- manifest plumbing --

    def new_manifest(self) -> RunManifest:
        cfg = self.cfg
        self._manifest = RunManifest(
            created_at=resolve_timestamp(self.offline),
            seed=cfg.seed,
            tokenizer={"name": cfg.tokenizer_name, "max_tokens": cfg.max_tokens},
            prompt_checksums={
                "extraction": prompts.prompt_checksum(
                    prompts.EXTRACTION_SYSTEM_PROMPT
                ),
                "labeling": prompts.prompt_checksum(prompts.LABELING_SYSTEM_PROMPT),
            },
            models={
                "chat": cfg.chat_model,
                "embedding": cfg.embedding_model,
                "label": cfg.label_model,
            },
            backend_kind=cfg.backend_kind,
            reducer=dict(cfg.reducer),
            hdbscan=dict(cfg.hdbscan),
            analytics={
                "stddev": cfg.stddev_mode,
                "dedup_chunks": cfg.dedup_chunks,
                "network_threshold": cfg.network_threshold,
            },
            corpus_digest=corpus_digest(self.corpus),
            stages={},
        )
        return self._manifest

    @property
    def manifest(self) -> RunManifest:
        if self._manifest is None:
            if not self.paths.manifest.is_file():
                raise StageError(
                    f"missing run manifest {self.paths.manifest}; run ingest first"
                )
            self._manifest = RunManifest.load(self.paths.manifest)
        return self._manifest

    def save_manifest(self) -> None:
        _atomic_write(self.paths.manifest, lambda tmp: self.manifest.save(tmp))

    def require(self, *artifacts: Path) -> None:
        missing = [str(p) for p in artifacts if not p.is_file()]
        if missing:
            raise StageError(
                "missing predecessor artifact(s): "
                + ", ".join(missing)
                + "; run the earlier stage(s) first"
            )


def _say(message: str) -> None:
    print(message, flush=True)


# --- stages ---


def stage_ingest(rt: _Runtime) -> None:
    spec = rt.tokenizer_spec()
    chunks = []
    oversized = 0
    for novel in rt.corpus.novels:
        novel_chunks = chunk_novel(novel, spec, rt.cfg.extra_terminators)
        oversized += sum(1 for c in novel_chunks if c.oversized_sentence)
        chunks.extend(novel_chunks)
    _atomic_write(rt.paths.chunks, lambda tmp: write_chunks(chunks, tmp))
    manifest = rt.new_manifest()
    if rt.paths.manifest.is_file():
        # keep the original creation moment and earlier stage records
        previous = RunManifest.load(rt.paths.manifest)
        manifest.created_at = previous.created_at
        manifest.stages = previous.stages
    manifest.record_stage(
        "ingest",
        novels=len(rt.corpus.novels),
        chunks=len(chunks),
        oversized_sentences=oversized,
    )
    rt.save_manifest()
    _say(
        f"ingest: {len(rt.corpus.novels)} novels -> {len(chunks)} chunks "
        f"({oversized} oversized sentences flagged)"
    )


def stage_extract(rt: _Runtime) -> None:
    rt.require(rt.paths.chunks)
    chunks = read_chunks(rt.paths.chunks)
    prompt = ExtractionPrompt()
    before = rt.gateway.backend_calls
    outcome = extract_corpus(
        chunks,
        rt.gateway,
        prompt,
        model=rt.cfg.chat_model,
        temperature=rt.cfg.extraction_temperature,
        max_output_tokens=rt.cfg.extraction_max_output_tokens,
        failure_threshold=rt.cfg.failure_threshold,
    )
    calls = rt.gateway.backend_calls - before
    _atomic_write(rt.paths.motifs, lambda tmp: write_records(outcome.records, tmp))
    _atomic_write(
        rt.paths.warnings,
        lambda tmp: Path(tmp).write_text(
            "".join(w + "\n" for w in outcome.warnings), encoding="utf-8"
        ),
    )
    rt.manifest.record_stage(
        "extract",
        records=len(outcome.records),
        chunks_total=outcome.chunks_total,
        chunks_failed=outcome.chunks_failed,
        chunks_empty=outcome.chunks_empty,
    )
    rt.save_manifest()
    _say(
        f"extract: {outcome.chunks_total} chunks -> {len(outcome.records)} motif "
        f"records ({outcome.chunks_failed} failed, {outcome.chunks_empty} empty); "
        f"backend calls: {calls}"
    )


def stage_embed(rt: _Runtime) -> None:
    rt.require(rt.paths.motifs)
    records = read_records(rt.paths.motifs)
    before = rt.gateway.backend_calls
    matrix = embed_records(records, rt.gateway, model=rt.cfg.embedding_model)
    calls = rt.gateway.backend_calls - before
    _atomic_write(
        rt.paths.embeddings, lambda tmp: write_embeddings(tmp, matrix.vectors)
    )
    rt.manifest.record_stage(
        "embed", rows=matrix.vectors.shape[0], dim=matrix.vectors.shape[1]
    )
    rt.save_manifest()
    _say(
        f"embed: {matrix.vectors.shape[0]} records x {matrix.vectors.shape[1]} "
        f"dims; backend calls: {calls}"
    )


def stage_cluster(rt: _Runtime) -> None:
    rt.require(rt.paths.motifs, rt.paths.embeddings)
    records = read_records(rt.paths.motifs)
    vectors = read_embeddings(rt.paths.embeddings)
    embeddings = EmbeddingMatrix(vectors=vectors, records=records)
    reducer_params = rt.reducer_params()
    reduced = reduce(vectors, reducer_params, seed=rt.cfg.seed)
    _atomic_write(rt.paths.reduced, lambda tmp: write_embeddings(tmp, reduced))
    hdb_params = rt.hdbscan_params()
    result = hdbscan(reduced, hdb_params)
    catalog = build_catalog(
        records,
        result.labels,
        embeddings,
        stabilities=result.stabilities,
        dedup_chunks=rt.cfg.dedup_chunks,
        params={
            "reducer": dict(rt.cfg.reducer),
            "hdbscan": dict(rt.cfg.hdbscan),
            "seed": rt.cfg.seed,
        },
    )
    _atomic_write(rt.paths.catalog, lambda tmp: write_catalog(catalog, tmp))
    clustered = catalog.total_records() - len(catalog.outlier_records)
    rt.manifest.record_stage(
        "cluster",
        clusters=len(catalog.clusters),
        clustered_records=clustered,
        outliers=len(catalog.outlier_records),
    )
    rt.save_manifest()
    _say(
        f"cluster: {len(records)} records -> {len(catalog.clusters)} clusters "
        f"({clustered} clustered, {len(catalog.outlier_records)} outliers)"
    )


def stage_label(rt: _Runtime) -> None:
    rt.require(rt.paths.catalog, rt.paths.motifs, rt.paths.embeddings)
    catalog = read_catalog(rt.paths.catalog)
    records = read_records(rt.paths.motifs)
    vectors = read_embeddings(rt.paths.embeddings)
    embeddings = EmbeddingMatrix(vectors=vectors, records=records)
    spec = LabelRequestSpec(
        k_representatives=rt.cfg.k_representatives,
        max_label_words=rt.cfg.max_label_words,
    )
    before = rt.gateway.backend_calls
    labeled = label_all(
        catalog,
        embeddings,
        rt.gateway,
        spec,
        model=rt.cfg.label_model,
        temperature=rt.cfg.label_temperature,
        max_output_tokens=rt.cfg.label_max_output_tokens,
    )
    calls = rt.gateway.backend_calls - before
    _atomic_write(
        rt.paths.catalog_labeled, lambda tmp: write_catalog(labeled, tmp)
    )
    fallbacks = sum(1 for c in labeled.clusters if c.label_fallback)
    truncated = sum(1 for c in labeled.clusters if c.label_truncated)
    rt.manifest.record_stage(
        "label",
        clusters=len(labeled.clusters),
        fallbacks=fallbacks,
        truncated=truncated,
    )
    rt.save_manifest()
    _say(
        f"label: {len(labeled.clusters)} clusters labeled ({fallbacks} medoid "
        f"fallbacks, {truncated} truncated); backend calls: {calls}"
    )


def _analysis_inputs(rt: _Runtime):
    rt.require(rt.paths.catalog_labeled, rt.paths.motifs)
    catalog = read_catalog(rt.paths.catalog_labeled)
    records = read_records(rt.paths.motifs)
    matrix = analytics.build_motif_matrix(
        records, catalog, rt.corpus, dedup_chunks=rt.cfg.dedup_chunks
    )
    return catalog, matrix


def stage_analyze(rt: _Runtime, threshold: float | None = None) -> None:
    _, matrix = _analysis_inputs(rt)
    rt.paths.analysis.mkdir(parents=True, exist_ok=True)
    digest = rt.manifest.config_digest
    table = analytics.period_relative_frequencies(matrix)
    emit_frequency_table(matrix, table, rt.paths.analysis, run_digest=digest)
    sim = analytics.similarity_matrix(matrix)
    threshold = rt.cfg.network_threshold if threshold is None else threshold
    network = analytics.network_export(sim, threshold=threshold)
    network["run"] = digest
    _atomic_write(rt.paths.network, lambda tmp: analytics.write_network(network, tmp))
    rt.manifest.record_stage(
        "analyze",
        novels=len(matrix.novel_ids),
        motifs=len(matrix.cluster_ids),
        network_links=len(network["links"]),
        network_threshold=threshold,
    )
    rt.save_manifest()
    _say(
        f"analyze: {len(matrix.novel_ids)} novels x {len(matrix.cluster_ids)} "
        f"motifs; network has {len(network['links'])} links at threshold "
        f"{threshold:g}"
    )


def stage_report(rt: _Runtime, k: int | None = None) -> None:
    catalog, matrix = _analysis_inputs(rt)
    rt.paths.report.mkdir(parents=True, exist_ok=True)
    table = analytics.period_relative_frequencies(matrix)
    fluctuation = analytics.fluctuation_scores(
        table, sample=rt.cfg.stddev_mode == "sample"
    )
    persistence = analytics.persistence_scores(table)
    sim = analytics.similarity_matrix(matrix)
    uniq = analytics.uniqueness_scores(matrix)
    figure_k = rt.cfg.figure_top_k if k is None else k
    uniq_k = rt.cfg.uniqueness_top_k if k is None else k
    digest = rt.manifest.config_digest
    written = []
    written.extend(emit_motif_appendix(catalog, rt.paths.report, run_digest=digest))
    written.extend(
        emit_figure_data(
            fluctuation,
            persistence,
            table,
            rt.paths.report,
            k=figure_k,
            run_digest=digest,
        )
    )
    written.extend(emit_similarity_report(sim, rt.paths.report, run_digest=digest))
    written.extend(
        emit_uniqueness_report(uniq, rt.paths.report, k=uniq_k, run_digest=digest)
    )
    rt.manifest.record_stage(
        "report", files=sorted(p.name for p in written)
    )
    rt.save_manifest()
    _say(f"report: wrote {len(written)} files under {rt.paths.report}")


_STAGE_ORDER = [
    ("ingest", stage_ingest),
    ("extract", stage_extract),
    ("embed", stage_embed),
    ("cluster", stage_cluster),
    ("label", stage_label),
    ("analyze", stage_analyze),
    ("report", stage_report),
]


def run_all(rt: _Runtime) -> None:
    for _, stage in _STAGE_ORDER:
        stage(rt)
    _say(f"run-all: complete; manifest digest {rt.manifest.digest}")


# --- verify-fixture ---


def cmd_verify_fixture(args) -> int:
    checks = refdata.verify_reference(args.pairs, args.titles)
    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        _say(f"{'ok  ' if ok else 'FAIL'} {name}: {detail}")
    titles = refdata.load_reference_titles(args.titles)
    pairs = refdata.load_reference_pairs(args.pairs, titles)
    sim = refdata.reference_similarity_matrix(pairs, titles)
    network = analytics.network_export(sim, threshold=args.threshold)
    at_or_above = sum(1 for _, _, s in pairs if s >= args.threshold)
    match = len(network["links"]) == at_or_above
    _say(
        f"{'ok  ' if match else 'FAIL'} network export: {len(network['links'])} "
        f"links at threshold {args.threshold:g} "
        f"(fixture lines at or above: {at_or_above})"
    )
    if args.out:
        out = Path(args.out)
        _atomic_write(out, lambda tmp: analytics.write_network(network, tmp))
        _say(f"network written to {out}")
    if failed or not match:
        return 1
    _say(f"fixture verified: {len(pairs)} pairs over {len(titles)} titles")
    return 0


# --- argument parsing ---


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motifcat",
        description="Motif extraction, cataloguing, and corpus analytics.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    def add_stage(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline YAML config")
        p.add_argument(
            "--offline",
            action="store_true",
            help="forbid network traffic; serve remote-backend requests "
            "from cache only and pin the manifest timestamp",
        )
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument(
            "--parallelism",
            type=int,
            default=None,
            help="override backend request parallelism",
        )
        return p

    add_stage("ingest", "load the corpus and chunk it")
    add_stage("extract", "extract motif records from chunks via the chat model")
    add_stage("embed", "embed motif records")
    add_stage("cluster", "reduce embeddings and cluster them into a catalog")
    add_stage("label", "summarize each cluster into a label")
    p_analyze = add_stage("analyze", "compute count matrices and the pair network")
    p_analyze.add_argument(
        "--threshold",
        type=float,
        default=None,
        help="override the network similarity threshold",
    )
    p_report = add_stage("report", "emit catalog, figure, and pair reports")
    p_report.add_argument(
        "--k", type=int, default=None, help="override top-k for report sections"
    )
    add_stage("run-all", "run every stage in order")

    p_verify = sub.add_parser(
        "verify-fixture", help="check the shipped reference pair ranking"
    )
    p_verify.add_argument(
        "--pairs", default=None, help="pair-scores file (default: shipped fixture)"
    )
    p_verify.add_argument(
        "--titles", default=None, help="title list file (default: shipped fixture)"
    )
    p_verify.add_argument(
        "--threshold", type=float, default=0.70, help="network export threshold"
    )
    p_verify.add_argument(
        "--out", default=None, help="also write the network export here"
    )
    return parser


def _runtime_from_args(args) -> _Runtime:
    cfg = PipelineConfig.from_yaml(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.parallelism is not None:
        if args.parallelism < 1:
            raise ConfigError("--parallelism must be >= 1")
        cfg = replace(cfg, parallelism=args.parallelism)
    return _Runtime(cfg, offline=args.offline)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.cmd == "verify-fixture":
            return cmd_verify_fixture(args)
        rt = _runtime_from_args(args)
        if args.cmd == "run-all":
            run_all(rt)
        elif args.cmd == "analyze":
            stage_analyze(rt, threshold=args.threshold)
        elif args.cmd == "report":
            stage_report(rt, k=args.k)
        else:
            dict(_STAGE_ORDER)[args.cmd](rt)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MotifcatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
