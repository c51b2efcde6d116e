"""Corpus loading, sentence splitting, token counting, and chunking.

A corpus is a YAML manifest mapping novel ids to metadata plus one UTF-8
plain-text file per novel. Novels are split into sentences at full stops,
then greedily packed into chunks bounded by a token budget.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import yaml

from .errors import ConfigError, CorpusError

PERIODS = ("Imperial", "Komnenian", "Palaiologan")


@dataclass(frozen=True)
class Novel:
    id: str
    title: str
    period: str
    text: str
    author: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("novel id must be non-empty")
        if self.period not in PERIODS:
            raise CorpusError(
                f"novel {self.id!r}: unknown period {self.period!r} "
                f"(expected one of {', '.join(PERIODS)})"
            )
        if not self.text.strip():
            raise CorpusError(f"novel {self.id!r}: text is empty")


@dataclass(frozen=True)
class Chunk:
    novel_id: str
    index: int
    text: str
    token_count: int
    sentence_span: tuple[int, int]  # inclusive [first, last] sentence ordinals
    oversized_sentence: bool = False

    def __post_init__(self) -> None:
        if self.token_count < 0:
            raise CorpusError("chunk token_count must be >= 0")
        first, last = self.sentence_span
        if first > last or first < 0:
            raise CorpusError(f"bad sentence_span {self.sentence_span}")


@dataclass(frozen=True)
class ChunkContext:
    chunk: Chunk
    context_text: str


@dataclass(frozen=True)
class TokenizerSpec:
    name: str = "unicode-words"
    max_tokens: int = 1000

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")


@dataclass
class Corpus:
    novels: list[Novel]
    by_id: dict[str, Novel] = field(init=False)

    def __post_init__(self) -> None:
        self.by_id = {}
        for novel in self.novels:
            if novel.id in self.by_id:
                raise CorpusError(f"duplicate novel id {novel.id!r}")
            self.by_id[novel.id] = novel

    def __len__(self) -> int:
        return len(self.novels)

    def periods(self) -> list[str]:
        seen = []
        for novel in self.novels:
            if novel.period not in seen:
                seen.append(novel.period)
        return seen


# --- tokenizer registry ---

_TOKENIZERS: dict[str, Callable[[str], int]] = {}

_WORD_OR_PUNCT = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def register_tokenizer(name: str, counter: Callable[[str], int]) -> None:
    """Register a deterministic token counter under a spec name."""
    if not name:
        raise ConfigError("tokenizer name must be non-empty")
    _TOKENIZERS[name] = counter


register_tokenizer(
    "unicode-words", lambda text: len(_WORD_OR_PUNCT.findall(text))
)


def count_tokens(text: str, spec: TokenizerSpec) -> int:
    try:
        counter = _TOKENIZERS[spec.name]
    except KeyError:
        raise ConfigError(f"unknown tokenizer {spec.name!r}") from None
    return counter(text)


# --- sentence splitting ---


def _boundary_pattern(extra_terminators: Iterable[str]) -> re.Pattern[str]:
    chars = "." + "".join(extra_terminators)
    return re.compile(rf"(?<=[{re.escape(chars)}])(?=\s|$)")


def split_sentences(
    text: str, extra_terminators: Iterable[str] = ()
) -> list[str]:
    """Split at a full stop followed by whitespace or end of text.

    Only '.' terminates by default; callers may add extra terminator
    characters (each must be followed by whitespace or end of text to
    count). Returned sentences are stripped; joining them with single
    spaces reconstructs the input up to whitespace normalization.
    """
    pieces = _boundary_pattern(extra_terminators).split(text)
    return [p.strip() for p in pieces if p.strip()]


# --- chunking ---


def chunk_novel(
    novel: Novel,
    spec: TokenizerSpec,
    extra_terminators: Iterable[str] = (),
) -> list[Chunk]:
    """Greedy sentence packing into chunks of at most max_tokens tokens.

    A sentence joins the open chunk iff the running token sum stays within
    budget; a single sentence over budget becomes its own chunk with the
    oversized_sentence flag set. Chunks cover all sentences, in order,
    without overlap.
    """
    sentences = split_sentences(novel.text, extra_terminators)
    counts = [count_tokens(s, spec) for s in sentences]

    chunks: list[Chunk] = []
    open_sents: list[str] = []
    open_first = 0
    open_total = 0

    def close(last: int, oversized: bool = False) -> None:
        nonlocal open_sents, open_total
        chunks.append(
            Chunk(
                novel_id=novel.id,
                index=len(chunks),
                text=" ".join(open_sents),
                token_count=open_total,
                sentence_span=(open_first, last),
                oversized_sentence=oversized,
            )
        )
        open_sents = []
        open_total = 0

    for i, (sentence, n_tokens) in enumerate(zip(sentences, counts)):
        if n_tokens > spec.max_tokens:
            if open_sents:
                close(i - 1)
            open_sents = [sentence]
            open_first = i
            open_total = n_tokens
            close(i, oversized=True)
            continue
        if open_sents and open_total + n_tokens > spec.max_tokens:
            close(i - 1)
        if not open_sents:
            open_first = i
        open_sents.append(sentence)
        open_total += n_tokens
    if open_sents:
        close(len(sentences) - 1)
    return chunks


CONTEXT_SEPARATOR = "\n"


def context_for(chunks: list[Chunk], index: int) -> ChunkContext:
    """Pair chunk[index] with the text of up to two preceding chunks."""
    if not 0 <= index < len(chunks):
        raise IndexError(f"chunk index {index} out of range 0..{len(chunks) - 1}")
    preceding = chunks[max(0, index - 2) : index]
    return ChunkContext(
        chunk=chunks[index],
        context_text=CONTEXT_SEPARATOR.join(c.text for c in preceding),
    )


# --- manifest loading ---


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys instead of keeping the last."""


def _strict_mapping(loader: _StrictLoader, node: yaml.Node, deep: bool = False):
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in mapping:
            raise CorpusError(f"duplicate id {key!r} in manifest")
        mapping[key] = loader.construct_object(value_node, deep=deep)
    return mapping


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _strict_mapping
)

_MANIFEST_KEYS = {"title", "period", "author", "path"}


def load_corpus(manifest_path: str | Path) -> Corpus:
    """Load a corpus manifest and all referenced UTF-8 text files."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise CorpusError(f"manifest not found: {manifest_path}")
    try:
        raw = yaml.load(manifest_path.read_text(encoding="utf-8"), _StrictLoader)
    except yaml.YAMLError as exc:
        raise CorpusError(f"manifest does not parse: {exc}") from exc
    if not isinstance(raw, dict) or "novels" not in raw:
        raise CorpusError("manifest must be a mapping with a 'novels' key")
    entries = raw["novels"]
    if not isinstance(entries, dict) or not entries:
        raise CorpusError("'novels' must be a non-empty mapping of id -> entry")

    base = manifest_path.parent
    novels = []
    for novel_id, entry in entries.items():
        if not isinstance(entry, dict):
            raise CorpusError(f"entry {novel_id!r}: expected a mapping")
        unknown = set(entry) - _MANIFEST_KEYS
        if unknown:
            raise CorpusError(
                f"entry {novel_id!r}: unknown keys {sorted(unknown)}"
            )
        for required in ("title", "period", "path"):
            if required not in entry:
                raise CorpusError(f"entry {novel_id!r}: missing {required!r}")
        text_path = base / entry["path"]
        if not text_path.is_file():
            raise CorpusError(f"entry {novel_id!r}: text file not found: {text_path}")
        try:
            text = text_path.read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(
                f"entry {novel_id!r}: {text_path} is not valid UTF-8: {exc}"
            ) from exc
        novels.append(
            Novel(
                id=str(novel_id),
                title=str(entry["title"]),
                period=str(entry["period"]),
                author=entry.get("author"),
                text=text,
            )
        )
    return Corpus(novels=novels)


def corpus_digest(corpus: Corpus) -> str:
    """Stable content hash over ids, metadata, and full texts; recorded in
    run manifests so outputs can be traced to their exact inputs."""
    doc = [
        [n.id, n.title, n.period, n.author or "", n.text] for n in corpus.novels
    ]
    blob = json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# --- chunk dump IO ---


def write_chunks(chunks: Iterable[Chunk], path: str | Path) -> None:
    """One JSON record per line: novel_id, index, token_count, text, span, flag."""
    with open(path, "w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(
                json.dumps(
                    {
                        "novel_id": c.novel_id,
                        "index": c.index,
                        "token_count": c.token_count,
                        "text": c.text,
                        "sentence_span": list(c.sentence_span),
                        "oversized_sentence": c.oversized_sentence,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def read_chunks(path: str | Path) -> list[Chunk]:
    chunks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            chunks.append(
                Chunk(
                    novel_id=rec["novel_id"],
                    index=rec["index"],
                    text=rec["text"],
                    token_count=rec["token_count"],
                    sentence_span=tuple(rec["sentence_span"]),
                    oversized_sentence=rec.get("oversized_sentence", False),
                )
            )
    return chunks
