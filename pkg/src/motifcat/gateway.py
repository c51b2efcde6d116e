"""Single choke point for chat-completion and embedding traffic.

Every request flows through Gateway, which consults a content-addressed
disk cache first and only then the configured backend. Cache keys are
sha256 digests over the canonical JSON of (endpoint kind, model id, request
body), so any change to a prompt, model, or parameter is a different cache
entry. Cache writes go to a temp file in the cache directory and are
renamed into place, which makes concurrent writers safe without locks.

Two backends ship: RemoteBackend speaks the OpenAI-compatible JSON wire
protocol over httpx (API key via environment variable only), and
MockBackend is a pure function of the request for fully offline runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import httpx

from .errors import BackendError, GatewayError, InvalidRequestError
from . import prompts


@dataclass(frozen=True)
class ChatRequest:
    model: str
    system_prompt: str
    user_content: str
    temperature: float = 0.0
    max_output_tokens: int = 512

    def __post_init__(self) -> None:
        if not self.model:
            raise InvalidRequestError("chat request: model must be non-empty")
        if not self.system_prompt:
            raise InvalidRequestError("chat request: system_prompt must be non-empty")
        if not self.user_content:
            raise InvalidRequestError("chat request: user_content must be non-empty")
        if self.temperature < 0:
            raise InvalidRequestError("chat request: temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise InvalidRequestError("chat request: max_output_tokens must be >= 1")


@dataclass(frozen=True)
class EmbeddingRequest:
    model: str
    texts: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.model:
            raise InvalidRequestError("embedding request: model must be non-empty")
        if not self.texts:
            raise InvalidRequestError("embedding request: texts must be non-empty")
        if any(not t for t in self.texts):
            raise InvalidRequestError("embedding request: empty string member")


@dataclass(frozen=True)
class FinetuneSpec:
    base_model: str
    n_examples: int
    batches: int
    batch_size: int
    lr_multiplier: float

    def __post_init__(self) -> None:
        if self.n_examples < 1:
            raise InvalidRequestError("finetune spec: n_examples must be >= 1")
        if self.batches < 1:
            raise InvalidRequestError("finetune spec: batches must be >= 1")


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class CacheKey:
    digest: str

    @classmethod
    def for_chat(cls, req: ChatRequest) -> "CacheKey":
        body = {
            "system_prompt": req.system_prompt,
            "user_content": req.user_content,
            "temperature": req.temperature,
            "max_output_tokens": req.max_output_tokens,
        }
        payload = _canonical({"kind": "chat", "model": req.model, "body": body})
        return cls(hashlib.sha256(payload).hexdigest())

    @classmethod
    def for_embedding(cls, model: str, text: str) -> "CacheKey":
        payload = _canonical({"kind": "embedding", "model": model, "body": {"text": text}})
        return cls(hashlib.sha256(payload).hexdigest())


class Backend(Protocol):
    def chat(self, req: ChatRequest) -> str: ...

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]: ...


class Gateway:
    """Cache-first dispatcher with bounded retries and bounded parallelism."""

    def __init__(
        self,
        backend: Backend,
        cache_dir: str | Path,
        parallelism: int = 4,
        max_retries: int = 2,
        retry_wait: float = 0.5,
    ):
        self.backend = backend
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.parallelism = max(1, int(parallelism))
        self.max_retries = max(0, int(max_retries))
        self.retry_wait = retry_wait
        self.backend_calls = 0  # requests that actually reached the backend
        self._lock = threading.Lock()

    # -- cache plumbing --

    def _path(self, key: CacheKey) -> Path:
        return self.cache_dir / key.digest[:2] / f"{key.digest}.json"

    def _cache_read(self, key: CacheKey):
        path = self._path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["response"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError) as exc:
            raise GatewayError(f"corrupt cache entry {path}: {exc}") from exc

    def _cache_write(self, key: CacheKey, kind: str, model: str, response) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            {"kind": kind, "model": model, "response": response},
            sort_keys=True,
            ensure_ascii=False,
            separators=(",", ":"),
        )
        tmp = path.with_name(
            f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp"
        )
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)

    def _call_with_retries(self, fn, *args):
        attempt = 0
        while True:
            try:
                return fn(*args)
            except (BackendError, httpx.HTTPError) as exc:
                if attempt >= self.max_retries:
                    raise BackendError(
                        f"backend failed after {attempt + 1} attempts: {exc}"
                    ) from exc
                time.sleep(self.retry_wait * (2**attempt))
                attempt += 1

    # -- public ops --

    def chat_complete(self, req: ChatRequest) -> str:
        key = CacheKey.for_chat(req)
        cached = self._cache_read(key)
        if cached is not None:
            return cached
        text = self._call_with_retries(self.backend.chat, req)
        if not isinstance(text, str):
            raise BackendError(f"backend returned non-text completion: {type(text)}")
        with self._lock:
            self.backend_calls += 1
        self._cache_write(key, "chat", req.model, text)
        return text

    def chat_map(self, reqs: Sequence[ChatRequest]) -> list[str | Exception]:
        """chat_complete over many requests, in input order; failures are
        returned in place rather than raised so callers can apply their own
        failure budget."""

        def one(req: ChatRequest):
            try:
                return self.chat_complete(req)
            except Exception as exc:  # noqa: BLE001 - budget applied by caller
                return exc

        if len(reqs) <= 1 or self.parallelism == 1:
            return [one(r) for r in reqs]
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            return list(pool.map(one, reqs))

    def embed(self, req: EmbeddingRequest) -> list[list[float]]:
        keys = [CacheKey.for_embedding(req.model, t) for t in req.texts]
        vectors: dict[str, list[float]] = {}
        missing_texts: list[str] = []
        for text, key in zip(req.texts, keys):
            if text in vectors:
                continue
            cached = self._cache_read(key)
            if cached is not None:
                vectors[text] = cached
            elif text not in missing_texts:
                missing_texts.append(text)
        if missing_texts:
            fetched = self._call_with_retries(
                self.backend.embed, req.model, missing_texts
            )
            with self._lock:
                self.backend_calls += 1
            if len(fetched) != len(missing_texts):
                raise BackendError(
                    f"backend returned {len(fetched)} vectors for "
                    f"{len(missing_texts)} texts"
                )
            dims = {len(v) for v in fetched}
            if len(dims) > 1:
                raise BackendError(f"embedding dimension mismatch in batch: {dims}")
            for text, vec in zip(missing_texts, fetched):
                vec = [float(x) for x in vec]
                self._cache_write(
                    CacheKey.for_embedding(req.model, text), "embedding", req.model, vec
                )
                vectors[text] = vec
        out = [vectors[t] for t in req.texts]
        dims = {len(v) for v in out}
        if len(dims) > 1:
            raise BackendError(f"embedding dimension mismatch across cache: {dims}")
        return out


class RemoteBackend:
    """OpenAI-compatible endpoint over httpx. The API key comes from the
    environment variable named by api_key_env; it is never read from config
    files."""

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "MOTIFCAT_API_KEY",
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        api_key = os.environ.get(api_key_env, "")
        if not api_key:
            raise BackendError(
                f"remote backend requires the {api_key_env} environment variable"
            )
        self._client = httpx.Client(
            base_url=base_url,
            timeout=timeout,
            headers={"Authorization": f"Bearer {api_key}"},
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        if response.status_code // 100 != 2:
            raise BackendError(
                f"{path} returned {response.status_code}: {response.text[:300]}"
            )
        try:
            return response.json()
        except json.JSONDecodeError as exc:
            raise BackendError(f"{path} returned non-JSON body") from exc

    def chat(self, req: ChatRequest) -> str:
        data = self._post(
            "/chat/completions",
            {
                "model": req.model,
                "messages": [
                    {"role": "system", "content": req.system_prompt},
                    {"role": "user", "content": req.user_content},
                ],
                "temperature": req.temperature,
                "max_tokens": req.max_output_tokens,
            },
        )
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat completion envelope: {exc}") from exc
        if not isinstance(content, str):
            raise BackendError("chat completion content is not text")
        return content

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]:
        data = self._post("/embeddings", {"model": model, "input": list(texts)})
        try:
            rows = sorted(data["data"], key=lambda r: r["index"])
            return [list(map(float, r["embedding"])) for r in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed embeddings envelope: {exc}") from exc


_MOCK_MOTIF_TEMPLATES = (
    "A storm at sea threatens the travelers.",
    "Lovers are separated by fortune.",
    "A secret letter changes someone's fate.",
    "A garden becomes a place of meeting.",
    "Disguise conceals a noble identity.",
    "A dream foretells coming danger.",
    "Pirates seize captives for ransom.",
    "An oath of fidelity is sworn.",
)


class MockBackend:
    """Deterministic offline backend: a pure function of the request.

    Chat routing: an exact user_content match in the canned table wins;
    otherwise the extraction system prompt gets a numbered motif list drawn
    from a fixed template pool by content hash (with a rare branch emitting
    a unique sentence, which downstream becomes a genuine outlier), and the
    labeling system prompt gets the first listed member sentence back.
    Embeddings hash each text to a fixed-dimension unit vector.
    """

    def __init__(self, canned: dict[str, str] | None = None, embed_dim: int = 8):
        self.canned = dict(canned or {})
        self.embed_dim = embed_dim

    def chat(self, req: ChatRequest) -> str:
        if req.user_content in self.canned:
            return self.canned[req.user_content]
        if req.system_prompt == prompts.EXTRACTION_SYSTEM_PROMPT:
            return self._extraction_reply(req.user_content)
        if req.system_prompt == prompts.LABELING_SYSTEM_PROMPT:
            return self._labeling_reply(req.user_content)
        raise BackendError("mock backend has no route for this system prompt")

    def _extraction_reply(self, user_content: str) -> str:
        digest = hashlib.sha256(user_content.encode("utf-8")).digest()
        n_motifs = 3 + digest[0] % 3
        picks: list[str] = []
        for i in range(n_motifs):
            template = _MOCK_MOTIF_TEMPLATES[digest[1 + i] % len(_MOCK_MOTIF_TEMPLATES)]
            if template not in picks:
                picks.append(template)
        if digest[0] % 11 == 0:
            picks.append(f"A rare omen marks the hour (sign {digest[:4].hex()}).")
        return "\n".join(f"{i}. {m}" for i, m in enumerate(picks, start=1))

    def _labeling_reply(self, user_content: str) -> str:
        first = user_content.strip().splitlines()[0]
        return first.split(". ", 1)[1] if ". " in first else first

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            raw = [float(b) - 127.5 for b in digest[: self.embed_dim]]
            norm = sum(x * x for x in raw) ** 0.5
            out.append([x / norm for x in raw])
        return out


def emit_finetune_dataset(
    annotations: Iterable[tuple["object", list[str]]],
    spec: FinetuneSpec,
    out_path: str | Path,
) -> Path:
    """Write one chat-format training record per annotated chunk context,
    plus a sidecar manifest echoing the fine-tune hyperparameters.

    Each annotation pairs a ChunkContext with its gold motif sentences; the
    assistant message is the numbered list the extraction stage expects to
    parse back.
    """
    annotations = list(annotations)
    if not annotations:
        raise GatewayError("no annotations to emit")
    if len(annotations) != spec.n_examples:
        raise GatewayError(
            f"spec says {spec.n_examples} examples but got {len(annotations)}"
        )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for i, (cc, motifs) in enumerate(annotations):
            motifs = [m.strip() for m in motifs if m and m.strip()]
            if not motifs:
                raise GatewayError(f"annotation {i} has an empty motif list")
            record = {
                "messages": [
                    {"role": "system", "content": prompts.EXTRACTION_SYSTEM_PROMPT},
                    {
                        "role": "user",
                        "content": prompts.format_extraction_user(
                            cc.context_text, cc.chunk.text
                        ),
                    },
                    {
                        "role": "assistant",
                        "content": "\n".join(
                            f"{j}. {m}" for j, m in enumerate(motifs, start=1)
                        ),
                    },
                ]
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    sidecar = out_path.with_suffix(out_path.suffix + ".manifest.json")
    sidecar.write_text(
        json.dumps(
            {
                "base_model": spec.base_model,
                "n_examples": spec.n_examples,
                "batches": spec.batches,
                "batch_size": spec.batch_size,
                "lr_multiplier": spec.lr_multiplier,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return out_path
