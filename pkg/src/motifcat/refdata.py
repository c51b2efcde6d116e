"""Frozen reference data shipped with the package.

pair_scores.txt is a known-good pairwise-similarity ranking over a
15-novel corpus, in the exact line format this package's similarity
report emits. pair_titles.txt lists the titles it covers. Together they
anchor regression tests and the verify-fixture CLI command: the report
format, the pair parser, and the network exporter are all checked
against this ranking.

Titles themselves contain the word "and" ("Daphnis and Chloe"), so a
pair line "A and B: similarity 0.47" cannot be split naively; parsing
requires the known-title list and tries longer title matches first.
"""

from __future__ import annotations

from importlib.resources import files
from pathlib import Path

import numpy as np

from .analytics import SimilarityMatrix
from .errors import ReportError

PAIR_LINE_SUFFIX = ": similarity "


def _data_path(name: str) -> Path:
    return Path(str(files("motifcat") / "data" / name))


def load_reference_titles(path: str | Path | None = None) -> list[str]:
    path = Path(path) if path else _data_path("pair_titles.txt")
    titles = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    return [t for t in titles if t]


def parse_pair_line(line: str, known_titles: list[str]) -> tuple[str, str, float]:
    """Split one report line into (title_a, title_b, score).

    The left side must decompose as "<known title> and <known title>";
    candidates are tried longest-first so embedded "and"s inside titles
    never split the pair in the wrong place.
    """
    head, sep, tail = line.rpartition(PAIR_LINE_SUFFIX)
    if not sep:
        raise ReportError(f"not a pair-score line: {line!r}")
    try:
        score = float(tail)
    except ValueError as exc:
        raise ReportError(f"bad score in line: {line!r}") from exc
    for title in sorted(known_titles, key=len, reverse=True):
        prefix = title + " and "
        if head.startswith(prefix) and head[len(prefix) :] in known_titles:
            return title, head[len(prefix) :], score
    raise ReportError(f"cannot resolve titles in line: {line!r}")


def load_reference_pairs(
    path: str | Path | None = None, titles: list[str] | None = None
) -> list[tuple[str, str, float]]:
    path = Path(path) if path else _data_path("pair_scores.txt")
    if titles is None:
        titles = load_reference_titles()
    pairs = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            pairs.append(parse_pair_line(line, titles))
    return pairs


def reference_similarity_matrix(
    pairs: list[tuple[str, str, float]], titles: list[str]
) -> SimilarityMatrix:
    """Rebuild the full symmetric matrix the ranking was flattened from.
    Period metadata is not part of the fixture, so a placeholder is used."""
    index = {t: i for i, t in enumerate(titles)}
    values = np.eye(len(titles))
    for a, b, score in pairs:
        values[index[a], index[b]] = score
        values[index[b], index[a]] = score
    return SimilarityMatrix(
        values=values,
        novel_ids=[f"ref-{i:02d}" for i in range(len(titles))],
        titles=list(titles),
        periods=["unknown"] * len(titles),
    )


def verify_reference(
    pairs_path: str | Path | None = None, titles_path: str | Path | None = None
) -> list[tuple[str, bool, str]]:
    """Structural checks over the shipped ranking. Returns (name, ok,
    detail) per check; the CLI prints these and exits nonzero on any
    failure."""
    titles = load_reference_titles(titles_path)
    pairs = load_reference_pairs(pairs_path, titles)
    n = len(titles)
    expected = n * (n - 1) // 2
    scores = [score for _, _, score in pairs]
    seen = {frozenset((a, b)) for a, b, _ in pairs}

    checks = [
        (
            "line count",
            len(pairs) == expected,
            f"{len(pairs)} lines for {n} titles (complete pairing needs {expected})",
        ),
        (
            "complete pairing",
            len(seen) == expected and all(len(p) == 2 for p in seen),
            "every unordered title pair appears exactly once",
        ),
        (
            "descending order",
            all(scores[i] >= scores[i + 1] for i in range(len(scores) - 1)),
            "scores never increase down the file",
        ),
        (
            "score range",
            all(0.0 <= s <= 1.0 for s in scores),
            f"min {min(scores):.2f}, max {max(scores):.2f}"
            if scores
            else "no scores",
        ),
        (
            "two-decimal form",
            all(abs(s - round(s, 2)) < 1e-9 for s in scores),
            "every score is a two-decimal value",
        ),
    ]
    return checks
