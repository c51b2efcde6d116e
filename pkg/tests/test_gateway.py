"""Gateway caching/retry behavior, both backends, and dataset emission."""

import json

import httpx
import pytest

from motifcat import prompts
from motifcat.corpus import Chunk, ChunkContext
from motifcat.errors import BackendError, GatewayError, InvalidRequestError
from motifcat.gateway import (
    ChatRequest,
    EmbeddingRequest,
    FinetuneSpec,
    Gateway,
    MockBackend,
    RemoteBackend,
    emit_finetune_dataset,
)


def chat_req(content: str, system=prompts.EXTRACTION_SYSTEM_PROMPT) -> ChatRequest:
    return ChatRequest(
        model="extraction-mock", system_prompt=system, user_content=content
    )


class CountingBackend:
    """Wraps MockBackend and counts raw calls (independent of the gateway's
    own counter, so the two can cross-check each other)."""

    def __init__(self, fail_first: int = 0):
        self.inner = MockBackend()
        self.chat_calls = 0
        self.embed_calls = 0
        self.fail_first = fail_first

    def chat(self, req):
        self.chat_calls += 1
        if self.chat_calls <= self.fail_first:
            raise BackendError("transient failure")
        return self.inner.chat(req)

    def embed(self, model, texts):
        self.embed_calls += 1
        return self.inner.embed(model, texts)


class TestRequestValidation:
    def test_empty_fields_rejected(self):
        with pytest.raises(InvalidRequestError):
            ChatRequest(model="", system_prompt="s", user_content="u")
        with pytest.raises(InvalidRequestError):
            ChatRequest(model="m", system_prompt="", user_content="u")
        with pytest.raises(InvalidRequestError):
            ChatRequest(model="m", system_prompt="s", user_content="")
        with pytest.raises(InvalidRequestError):
            ChatRequest(model="m", system_prompt="s", user_content="u", temperature=-1)
        with pytest.raises(InvalidRequestError):
            EmbeddingRequest(model="m", texts=())
        with pytest.raises(InvalidRequestError):
            EmbeddingRequest(model="m", texts=("ok", ""))


class TestCaching:
    def test_chat_cache_hit_skips_backend(self, tmp_path):
        backend = CountingBackend()
        gw = Gateway(backend, tmp_path / "cache")
        first = gw.chat_complete(chat_req("Some passage."))
        second = gw.chat_complete(chat_req("Some passage."))
        assert first == second
        assert backend.chat_calls == 1
        assert gw.backend_calls == 1

    def test_cache_survives_new_gateway(self, tmp_path):
        backend = CountingBackend()
        gw = Gateway(backend, tmp_path / "cache")
        first = gw.chat_complete(chat_req("Another passage."))
        gw2 = Gateway(backend, tmp_path / "cache")
        assert gw2.chat_complete(chat_req("Another passage.")) == first
        assert backend.chat_calls == 1
        assert gw2.backend_calls == 0

    def test_different_params_are_different_entries(self, tmp_path):
        backend = CountingBackend()
        gw = Gateway(backend, tmp_path / "cache")
        gw.chat_complete(chat_req("Passage."))
        gw.chat_complete(
            ChatRequest(
                model="extraction-mock",
                system_prompt=prompts.EXTRACTION_SYSTEM_PROMPT,
                user_content="Passage.",
                temperature=0.7,
            )
        )
        assert backend.chat_calls == 2

    def test_corrupt_cache_entry_is_reported(self, tmp_path):
        gw = Gateway(MockBackend(), tmp_path / "cache")
        req = chat_req("Corrupted below.")
        gw.chat_complete(req)
        from motifcat.gateway import CacheKey

        path = gw._path(CacheKey.for_chat(req))
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(GatewayError, match="corrupt cache entry"):
            gw.chat_complete(req)

    def test_embed_caches_per_text(self, tmp_path):
        backend = CountingBackend()
        gw = Gateway(backend, tmp_path / "cache")
        gw.embed(EmbeddingRequest(model="embedding-mock", texts=("a", "b")))
        assert backend.embed_calls == 1
        # one new text: only it goes to the backend
        out = gw.embed(EmbeddingRequest(model="embedding-mock", texts=("b", "c")))
        assert backend.embed_calls == 2
        assert len(out) == 2
        # all cached now
        gw.embed(EmbeddingRequest(model="embedding-mock", texts=("a", "b", "c")))
        assert backend.embed_calls == 2

    def test_embed_duplicate_texts_one_vector(self, tmp_path):
        gw = Gateway(MockBackend(), tmp_path / "cache")
        out = gw.embed(EmbeddingRequest(model="m", texts=("x", "x", "y")))
        assert out[0] == out[1]
        assert out[0] != out[2]


class TestRetries:
    def test_transient_failures_retried(self, tmp_path):
        backend = CountingBackend(fail_first=2)
        gw = Gateway(backend, tmp_path / "cache", max_retries=2, retry_wait=0.0)
        text = gw.chat_complete(chat_req("Retry me."))
        assert text.startswith("1. ")
        assert backend.chat_calls == 3

    def test_budget_exhaustion_raises(self, tmp_path):
        backend = CountingBackend(fail_first=10)
        gw = Gateway(backend, tmp_path / "cache", max_retries=1, retry_wait=0.0)
        with pytest.raises(BackendError, match="after 2 attempts"):
            gw.chat_complete(chat_req("Retry me."))
        assert backend.chat_calls == 2


class TestChatMap:
    def test_order_preserved(self, tmp_path):
        gw = Gateway(MockBackend(), tmp_path / "cache", parallelism=4)
        reqs = [chat_req(f"Passage number {i}.") for i in range(10)]
        out = gw.chat_map(reqs)
        serial = [gw.chat_complete(r) for r in reqs]
        assert out == serial

    def test_failures_returned_in_place(self, tmp_path):
        class FlakyBackend:
            def chat(self, req):
                if "bad" in req.user_content:
                    raise BackendError("boom")
                return "1. Fine."

            def embed(self, model, texts):
                raise NotImplementedError

        gw = Gateway(
            FlakyBackend(), tmp_path / "cache", max_retries=0, retry_wait=0.0
        )
        out = gw.chat_map([chat_req("good one"), chat_req("bad one"), chat_req("ok")])
        assert out[0] == "1. Fine."
        assert isinstance(out[1], BackendError)
        assert out[2] == "1. Fine."

    def test_parallel_matches_serial(self, tmp_path):
        reqs = [chat_req(f"Chunk {i} text.") for i in range(16)]
        gw1 = Gateway(MockBackend(), tmp_path / "c1", parallelism=1)
        gw4 = Gateway(MockBackend(), tmp_path / "c4", parallelism=4)
        assert gw1.chat_map(reqs) == gw4.chat_map(reqs)


class TestMockBackend:
    def test_extraction_reply_is_numbered_list(self):
        mock = MockBackend()
        for text in ("A body of text.", "Other text.", "Third passage here."):
            lines = mock.chat(chat_req(text)).splitlines()
            # picks are deduped, so the floor is 1; ceiling is 5 + rare extra
            assert 1 <= len(lines) <= 6
            for i, line in enumerate(lines, start=1):
                assert line.startswith(f"{i}. ")
                assert line.endswith(".")

    def test_deterministic(self):
        a = MockBackend().chat(chat_req("Stable input."))
        b = MockBackend().chat(chat_req("Stable input."))
        assert a == b

    def test_canned_reply_wins(self):
        mock = MockBackend(canned={"magic": "Motifs: One. Two."})
        assert mock.chat(chat_req("magic")) == "Motifs: One. Two."

    def test_labeling_reply_echoes_first_member(self):
        mock = MockBackend()
        reply = mock.chat(
            chat_req(
                "1. A storm at sea threatens the travelers.\n2. Another.",
                system=prompts.LABELING_SYSTEM_PROMPT,
            )
        )
        assert reply == "A storm at sea threatens the travelers."

    def test_unknown_system_prompt_rejected(self):
        with pytest.raises(BackendError, match="no route"):
            MockBackend().chat(chat_req("text", system="something else"))

    def test_embeddings_unit_norm_and_deterministic(self):
        mock = MockBackend()
        [v1] = mock.embed("m", ["same text"])
        [v2] = mock.embed("m", ["same text"])
        assert v1 == v2
        assert len(v1) == 8
        assert abs(sum(x * x for x in v1) - 1.0) < 1e-12


class TestRemoteBackend:
    def test_requires_api_key_env(self, monkeypatch):
        monkeypatch.delenv("MOTIFCAT_API_KEY", raising=False)
        with pytest.raises(BackendError, match="MOTIFCAT_API_KEY"):
            RemoteBackend("https://example.invalid/v1")

    def test_chat_wire_format(self, monkeypatch):
        monkeypatch.setenv("MOTIFCAT_API_KEY", "k-123")
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["url"] = str(request.url)
            seen["auth"] = request.headers.get("authorization")
            seen["body"] = json.loads(request.content)
            return httpx.Response(
                200,
                json={"choices": [{"message": {"content": "1. A motif."}}]},
            )

        backend = RemoteBackend(
            "https://example.invalid/v1",
            transport=httpx.MockTransport(handler),
        )
        out = backend.chat(chat_req("Hello text."))
        backend.close()
        assert out == "1. A motif."
        assert seen["url"].endswith("/v1/chat/completions")
        assert seen["auth"] == "Bearer k-123"
        assert seen["body"]["messages"][0]["role"] == "system"
        assert seen["body"]["messages"][1]["content"] == "Hello text."
        assert seen["body"]["temperature"] == 0.0

    def test_http_error_status_raises(self, monkeypatch):
        monkeypatch.setenv("MOTIFCAT_API_KEY", "k")
        backend = RemoteBackend(
            "https://example.invalid/v1",
            transport=httpx.MockTransport(
                lambda request: httpx.Response(500, text="server broke")
            ),
        )
        with pytest.raises(BackendError, match="500"):
            backend.chat(chat_req("x"))
        backend.close()

    def test_malformed_envelope_raises(self, monkeypatch):
        monkeypatch.setenv("MOTIFCAT_API_KEY", "k")
        backend = RemoteBackend(
            "https://example.invalid/v1",
            transport=httpx.MockTransport(
                lambda request: httpx.Response(200, json={"weird": True})
            ),
        )
        with pytest.raises(BackendError, match="malformed chat completion"):
            backend.chat(chat_req("x"))
        backend.close()

    def test_embeddings_sorted_by_index(self, monkeypatch):
        monkeypatch.setenv("MOTIFCAT_API_KEY", "k")

        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(
                200,
                json={
                    "data": [
                        {"index": 1, "embedding": [0.0, 1.0]},
                        {"index": 0, "embedding": [1.0, 0.0]},
                    ]
                },
            )

        backend = RemoteBackend(
            "https://example.invalid/v1", transport=httpx.MockTransport(handler)
        )
        out = backend.embed("m", ["first", "second"])
        backend.close()
        assert out == [[1.0, 0.0], [0.0, 1.0]]

    def test_gateway_retries_http_errors(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MOTIFCAT_API_KEY", "k")
        calls = {"n": 0}

        def handler(request: httpx.Request) -> httpx.Response:
            calls["n"] += 1
            if calls["n"] == 1:
                return httpx.Response(503, text="busy")
            return httpx.Response(
                200, json={"choices": [{"message": {"content": "ok"}}]}
            )

        backend = RemoteBackend(
            "https://example.invalid/v1", transport=httpx.MockTransport(handler)
        )
        gw = Gateway(backend, tmp_path / "cache", max_retries=2, retry_wait=0.0)
        assert gw.chat_complete(chat_req("retry")) == "ok"
        assert calls["n"] == 2
        backend.close()


def make_context(i: int) -> ChunkContext:
    chunk = Chunk(
        novel_id="n1",
        index=i,
        text=f"Chunk body {i}.",
        token_count=4,
        sentence_span=(i, i),
    )
    return ChunkContext(chunk=chunk, context_text="Earlier text." if i else "")


class TestFinetuneDataset:
    def test_emits_jsonl_and_sidecar(self, tmp_path):
        spec = FinetuneSpec(
            base_model="base-x", n_examples=2, batches=4, batch_size=8,
            lr_multiplier=2.0,
        )
        out = emit_finetune_dataset(
            [
                (make_context(0), ["A first motif.", "A second motif."]),
                (make_context(1), ["Another motif."]),
            ],
            spec,
            tmp_path / "train.jsonl",
        )
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        rec = json.loads(lines[0])
        roles = [m["role"] for m in rec["messages"]]
        assert roles == ["system", "user", "assistant"]
        assert rec["messages"][2]["content"] == "1. A first motif.\n2. A second motif."
        sidecar = json.loads(
            (tmp_path / "train.jsonl.manifest.json").read_text(encoding="utf-8")
        )
        assert sidecar == {
            "base_model": "base-x",
            "n_examples": 2,
            "batches": 4,
            "batch_size": 8,
            "lr_multiplier": 2.0,
        }

    def test_count_mismatch_rejected(self, tmp_path):
        spec = FinetuneSpec(
            base_model="b", n_examples=3, batches=1, batch_size=1, lr_multiplier=1.0
        )
        with pytest.raises(GatewayError, match="3 examples but got 1"):
            emit_finetune_dataset(
                [(make_context(0), ["A motif."])], spec, tmp_path / "t.jsonl"
            )

    def test_empty_motifs_rejected(self, tmp_path):
        spec = FinetuneSpec(
            base_model="b", n_examples=1, batches=1, batch_size=1, lr_multiplier=1.0
        )
        with pytest.raises(GatewayError, match="empty motif list"):
            emit_finetune_dataset(
                [(make_context(0), ["  "])], spec, tmp_path / "t.jsonl"
            )

    def test_no_annotations_rejected(self, tmp_path):
        spec = FinetuneSpec(
            base_model="b", n_examples=1, batches=1, batch_size=1, lr_multiplier=1.0
        )
        with pytest.raises(GatewayError, match="no annotations"):
            emit_finetune_dataset([], spec, tmp_path / "t.jsonl")
