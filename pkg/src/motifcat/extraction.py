"""Turn chunk contexts into motif sentences via the pinned system prompt,
and parse model replies that arrive as numbered lists, bullet lists, bare
lines, or period-separated run-ons.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import prompts
from .corpus import Chunk, ChunkContext, context_for, split_sentences
from .errors import ExtractionError
from .gateway import ChatRequest, Gateway

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class MotifRecord:
    novel_id: str
    chunk_index: int
    ordinal: int  # position within the model's list for this chunk
    sentence: str

    def __post_init__(self) -> None:
        if not self.sentence.strip():
            raise ExtractionError("motif sentence must be non-empty")


@dataclass(frozen=True)
class ExtractionPrompt:
    text: str = prompts.EXTRACTION_SYSTEM_PROMPT

    @property
    def checksum(self) -> str:
        return prompts.prompt_checksum(self.text)


def build_extraction_request(
    cc: ChunkContext,
    prompt: ExtractionPrompt,
    model: str,
    temperature: float = 0.0,
    max_output_tokens: int = 512,
) -> ChatRequest:
    return ChatRequest(
        model=model,
        system_prompt=prompt.text,
        user_content=prompts.format_extraction_user(cc.context_text, cc.chunk.text),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )


_LIST_PREFIX = re.compile(r"^\s*(?:\d+[.)]\s+|[-*•]\s+)")
_MOTIFS_HEADER = re.compile(r"^\s*motifs?\s*:\s*", re.IGNORECASE)


def parse_motif_list(completion: str) -> list[str]:
    """Extract motif sentences from a model reply.

    Handles a leading "Motifs:" header, numbered ("1." / "1)") and bulleted
    lines, one-sentence-per-line replies, and single-line period-separated
    run-ons. Every line is additionally split at sentence boundaries, so
    output sentences contain no internal boundary; exact duplicates are
    dropped, first occurrence wins. Unparseable input yields [].
    """
    text = _MOTIFS_HEADER.sub("", completion.strip(), count=1)
    seen: set[str] = set()
    out: list[str] = []
    for line in text.splitlines():
        line = _LIST_PREFIX.sub("", line, count=1)
        for sentence in split_sentences(line):
            if sentence not in seen:
                seen.add(sentence)
                out.append(sentence)
    return out


@dataclass
class ExtractionOutcome:
    records: list[MotifRecord]
    warnings: list[str] = field(default_factory=list)
    chunks_total: int = 0
    chunks_failed: int = 0
    chunks_empty: int = 0


def extract_corpus(
    chunks: Sequence[Chunk],
    gateway: Gateway,
    prompt: ExtractionPrompt,
    model: str,
    temperature: float = 0.0,
    max_output_tokens: int = 512,
    failure_threshold: float = 0.01,
) -> ExtractionOutcome:
    """One chat call per chunk (cache-aware, bounded-parallel); failures are
    tolerated up to failure_threshold of all chunks, then the run fails.

    Records come back sorted by (novel_id, chunk_index, ordinal) so the
    result is independent of completion order.
    """
    by_novel: dict[str, list[Chunk]] = {}
    for chunk in chunks:
        by_novel.setdefault(chunk.novel_id, []).append(chunk)
    for novel_chunks in by_novel.values():
        novel_chunks.sort(key=lambda c: c.index)

    requests: list[ChatRequest] = []
    owners: list[Chunk] = []
    for novel_id in sorted(by_novel):
        novel_chunks = by_novel[novel_id]
        for i in range(len(novel_chunks)):
            cc = context_for(novel_chunks, i)
            requests.append(
                build_extraction_request(
                    cc, prompt, model, temperature, max_output_tokens
                )
            )
            owners.append(novel_chunks[i])

    outcome = ExtractionOutcome(records=[], chunks_total=len(requests))
    replies = gateway.chat_map(requests)
    for chunk, reply in zip(owners, replies):
        where = f"{chunk.novel_id}[{chunk.index}]"
        if isinstance(reply, Exception):
            outcome.chunks_failed += 1
            outcome.warnings.append(f"chunk {where}: backend failure: {reply}")
            logger.warning("chunk %s failed: %s", where, reply)
            continue
        sentences = parse_motif_list(reply)
        if not sentences:
            outcome.chunks_empty += 1
            outcome.warnings.append(f"chunk {where}: reply parsed to no motifs")
            logger.warning("chunk %s: unparseable reply", where)
            continue
        for ordinal, sentence in enumerate(sentences):
            outcome.records.append(
                MotifRecord(
                    novel_id=chunk.novel_id,
                    chunk_index=chunk.index,
                    ordinal=ordinal,
                    sentence=sentence,
                )
            )
    if outcome.chunks_total:
        ratio = outcome.chunks_failed / outcome.chunks_total
        if ratio > failure_threshold:
            raise ExtractionError(
                f"{outcome.chunks_failed}/{outcome.chunks_total} chunks failed "
                f"({ratio:.1%}), above the {failure_threshold:.1%} threshold"
            )
    outcome.records.sort()
    return outcome


def write_records(records: Iterable[MotifRecord], path: str | Path) -> None:
    """One JSON record per line: novel_id, chunk_index, ordinal, sentence."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "novel_id": r.novel_id,
                        "chunk_index": r.chunk_index,
                        "ordinal": r.ordinal,
                        "sentence": r.sentence,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def read_records(path: str | Path) -> list[MotifRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            records.append(
                MotifRecord(
                    novel_id=rec["novel_id"],
                    chunk_index=rec["chunk_index"],
                    ordinal=rec["ordinal"],
                    sentence=rec["sentence"],
                )
            )
    return records
