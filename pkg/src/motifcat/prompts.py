"""Pinned prompt text shared by the extraction and labeling stages.

The extraction system prompt is a fixed artifact of the pipeline: its sha256
is recorded in the run manifest and the cache keys of every chat call depend
on it, so editing it invalidates caches and changes results.
"""

from __future__ import annotations

import hashlib

EXTRACTION_SYSTEM_PROMPT = (
    "Identify potential literary motifs (recurring recognizable and "
    "meaningful patterns of meaning) from the provided text, expressed as "
    "concise, single sentences. Focus on motifs related to characters, "
    "objects, emotions, or events. Only extract motifs from the current "
    "text, ignoring the preceding context. Do not mention character names, "
    "and refrain from providing any additional commentary beyond the list "
    "of motifs."
)

LABELING_SYSTEM_PROMPT = (
    "You summarize lists of literary motif sentences into one concise "
    "umbrella motif sentence. Reply with the sentence only."
)

CONTEXT_HEADER = "PRECEDING CONTEXT:"
CURRENT_HEADER = "CURRENT TEXT:"


def prompt_checksum(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def format_extraction_user(context_text: str, chunk_text: str) -> str:
    """Lay out the user message: optional context block, then the chunk.

    The headers make the system prompt's ignore-the-context instruction
    executable; the layout is fixed because cache keys depend on it.
    """
    if context_text:
        return (
            f"{CONTEXT_HEADER}\n{context_text}\n\n"
            f"{CURRENT_HEADER}\n{chunk_text}"
        )
    return f"{CURRENT_HEADER}\n{chunk_text}"


def format_labeling_user(members: list[str]) -> str:
    return "\n".join(f"{i}. {m}" for i, m in enumerate(members, start=1))
