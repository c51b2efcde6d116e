"""Produce one natural-language label per motif cluster by summarizing
representative member sentences with a chat model; a deterministic
medoid-sentence fallback absorbs backend failures.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clustering import EmbeddingMatrix, MotifCatalog, MotifCluster, relabel_cluster
from .corpus import split_sentences
from .errors import ConfigError
from .gateway import ChatRequest, Gateway
from . import prompts

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelRequestSpec:
    k_representatives: int = 20
    max_label_words: int = 30
    prompt_template: str = "{members}"

    def __post_init__(self) -> None:
        if self.k_representatives < 1:
            raise ConfigError("k_representatives must be >= 1")
        if self.max_label_words < 1:
            raise ConfigError("max_label_words must be >= 1")
        if self.prompt_template.count("{members}") != 1:
            raise ConfigError("prompt_template needs exactly one {members} slot")


def representatives(
    cluster: MotifCluster, embeddings: EmbeddingMatrix, k: int
) -> list[str]:
    """The k member sentences nearest the cluster centroid in cosine
    distance, ties broken by record order; k is capped at cluster size."""
    row_of = {record: i for i, record in enumerate(embeddings.records)}
    rows = [row_of[m] for m in cluster.member_records]
    vectors = embeddings.vectors[rows]
    norms = np.linalg.norm(vectors, axis=1)
    safe_norms = np.where(norms == 0.0, 1.0, norms)
    unit = vectors / safe_norms[:, None]
    centroid = vectors.mean(axis=0)
    centroid_norm = np.linalg.norm(centroid)
    if centroid_norm == 0.0:
        distances = np.zeros(len(rows))
    else:
        distances = 1.0 - unit @ (centroid / centroid_norm)
    order = np.lexsort((np.arange(len(rows)), distances))
    k = min(k, len(rows))
    return [cluster.member_records[i].sentence for i in order[:k]]


@dataclass(frozen=True)
class LabelResult:
    label: str
    fallback: bool = False
    truncated: bool = False


def _tidy_label(reply: str, max_words: int) -> LabelResult:
    sentences = split_sentences(reply.strip())
    if not sentences:
        return LabelResult(label="", fallback=False, truncated=False)
    label = sentences[0]
    truncated = len(sentences) > 1
    words = label.split()
    if len(words) > max_words:
        label = " ".join(words[:max_words])
        truncated = True
    return LabelResult(label=label, truncated=truncated)


def summarize_cluster(
    members: list[str],
    gateway: Gateway,
    spec: LabelRequestSpec,
    model: str,
    fallback_sentence: str,
    temperature: float = 0.0,
    max_output_tokens: int = 128,
) -> LabelResult:
    """One concise label for a member list; never raises — a backend
    failure or an empty reply falls back to the medoid sentence."""
    if not members:
        raise ConfigError("cannot summarize an empty member list")
    request = ChatRequest(
        model=model,
        system_prompt=prompts.LABELING_SYSTEM_PROMPT,
        user_content=spec.prompt_template.format(
            members=prompts.format_labeling_user(members)
        ),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )
    try:
        reply = gateway.chat_complete(request)
    except Exception as exc:  # noqa: BLE001 - fallback contract
        logger.warning("labeling backend failed, using medoid fallback: %s", exc)
        return LabelResult(label=fallback_sentence, fallback=True)
    result = _tidy_label(reply, spec.max_label_words)
    if not result.label:
        return LabelResult(label=fallback_sentence, fallback=True)
    return result


def label_all(
    catalog: MotifCatalog,
    embeddings: EmbeddingMatrix,
    gateway: Gateway,
    spec: LabelRequestSpec,
    model: str,
    temperature: float = 0.0,
    max_output_tokens: int = 128,
) -> MotifCatalog:
    """Label every cluster; the catalog is rebuilt once after all labels
    resolve. Requests run under the gateway's parallelism via the cache, in
    cluster-id order for determinism."""
    member_lists = [
        representatives(c, embeddings, spec.k_representatives)
        for c in catalog.clusters
    ]
    requests = [
        ChatRequest(
            model=model,
            system_prompt=prompts.LABELING_SYSTEM_PROMPT,
            user_content=spec.prompt_template.format(
                members=prompts.format_labeling_user(members)
            ),
            temperature=temperature,
            max_output_tokens=max_output_tokens,
        )
        for members in member_lists
    ]
    replies = gateway.chat_map(requests)
    labeled = []
    for cluster, reply in zip(catalog.clusters, replies):
        if isinstance(reply, Exception):
            logger.warning(
                "cluster %d labeling failed, using medoid fallback: %s",
                cluster.cluster_id,
                reply,
            )
            result = LabelResult(label=cluster.medoid_sentence, fallback=True)
        else:
            result = _tidy_label(reply, spec.max_label_words)
            if not result.label:
                result = LabelResult(label=cluster.medoid_sentence, fallback=True)
        labeled.append(
            relabel_cluster(cluster, result.label, result.fallback, result.truncated)
        )
    return MotifCatalog(
        clusters=labeled,
        outlier_records=catalog.outlier_records,
        params=catalog.params,
    )
