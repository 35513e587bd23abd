import json
import math
import threading

import httpx
import numpy as np
import pytest

from numembed.errors import (
    CacheCorrupt,
    ConfigError,
    DimensionMismatch,
    EmptyInput,
    MissingCredentials,
    ProviderError,
    RateLimitExhausted,
    SlotOverflow,
)
from numembed.numgen import gen_mixed_sign_integers, gen_positive_decimals
from numembed.providers import (
    CacheStore,
    EmbeddingMatrix,
    Embedder,
    GeminiBackend,
    ModelRef,
    OpenAIBackend,
    Provider,
    SyntheticBackend,
    TokenBucket,
    VoyageBackend,
    cached_embed,
    embed_remote,
    embed_synthetic_digit_circular,
    embed_synthetic_linear,
    embed_synthetic_sign_split,
    make_backend,
)


class CountingBackend:
    """Synthetic backend that records every batch it is asked for."""

    def __init__(self, inner):
        self.inner = inner
        self.model = inner.model
        self.batches = []
        self._lock = threading.Lock()

    @property
    def cache_namespace(self):
        return self.inner.cache_namespace

    def embed_batch(self, texts):
        with self._lock:
            self.batches.append(list(texts))
        return self.inner.embed_batch(texts)


@pytest.fixture
def linear():
    return SyntheticBackend.from_name("synthetic:linear", dim=16, seed=3, noise_sigma=0.05)


def test_model_ref_parsing():
    assert ModelRef.parse("voyage-3.5-lite").provider is Provider.VOYAGE
    assert ModelRef.parse("gemini-embedding-001").provider is Provider.GEMINI
    assert ModelRef.parse("text-embedding-3-small").default_dim == 1536
    assert ModelRef.parse("openai:custom-model").model_name == "custom-model"
    assert ModelRef.parse("synthetic:linear").provider is Provider.SYNTHETIC
    with pytest.raises(ConfigError):
        ModelRef.parse("no-such-model")
    with pytest.raises(ConfigError):
        ModelRef.parse("synthetic:nope")


def test_linear_noiseless_is_rank_one():
    vs = np.array([embed_synthetic_linear(x, 32, seed=1) for x in np.linspace(0, 1, 20)])
    s = np.linalg.svd(vs - vs.mean(0), compute_uv=False)
    assert s[1] <= 1e-12 * s[0]
    q = vs[-1]
    assert np.linalg.norm(q) == pytest.approx(1.0)


def test_linear_noise_is_keyed_not_sequential():
    a = embed_synthetic_linear(0.25, 8, seed=2, noise_sigma=0.1)
    embed_synthetic_linear(0.5, 8, seed=2, noise_sigma=0.1)
    b = embed_synthetic_linear(0.25, 8, seed=2, noise_sigma=0.1)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, embed_synthetic_linear(0.25, 8, seed=3, noise_sigma=0.1))


def test_linear_rejects_tiny_dim():
    with pytest.raises(ValueError):
        embed_synthetic_linear(0.1, 1)


def test_digit_circular_examples():
    np.testing.assert_array_equal(embed_synthetic_digit_circular("0.5"), embed_synthetic_digit_circular("0.5"))
    a, b = embed_synthetic_digit_circular("0.1"), embed_synthetic_digit_circular("0.9")
    pa, pb = a[4:6], b[4:6]
    angle = math.acos(np.clip(pa @ pb, -1, 1))
    assert angle == pytest.approx(2 * math.pi / 10 * 2)
    np.testing.assert_array_equal(a[:4], b[:4])
    neg = embed_synthetic_digit_circular("-0.1")
    assert neg[0] == -1.0 and a[0] == 1.0
    assert np.all(a[6:] == 0)


def test_digit_circular_overflow():
    with pytest.raises(SlotOverflow):
        embed_synthetic_digit_circular("1" * 30, slots=24)


def test_sign_split_examples():
    np.testing.assert_array_equal(embed_synthetic_sign_split(0, 5), np.zeros(5))
    v = embed_synthetic_sign_split(-250, 4)
    np.testing.assert_allclose(v, [-3.0, math.log10(251), -0.25, 0.0])
    pos = np.array([embed_synthetic_sign_split(x, 4) for x in [1, 5, 70, 300]])
    assert np.ptp(pos[:, 0]) == 0


def test_synthetic_backend_row_alignment(linear):
    texts = gen_positive_decimals(3, 60, seed=1).texts
    base = Embedder(linear).embed(texts)
    perm = np.random.default_rng(5).permutation(len(texts))
    shuffled = Embedder(linear).embed([texts[i] for i in perm])
    np.testing.assert_array_equal(shuffled, base[perm])


@pytest.mark.parametrize("batch_size", [1, 7, 64, 1000])
@pytest.mark.parametrize("in_flight", [1, 4])
def test_batching_is_invisible(linear, batch_size, in_flight):
    texts = gen_positive_decimals(4, 150, seed=2).texts
    reference = np.array(linear.embed_batch(texts))
    counting = CountingBackend(linear)
    out = Embedder(counting, batch_size=batch_size, max_in_flight=in_flight).embed(texts)
    np.testing.assert_array_equal(out, reference)
    assert len(counting.batches) == math.ceil(len(texts) / batch_size)
    assert all(len(b) <= batch_size for b in counting.batches)


def test_embed_empty_rejected(linear):
    with pytest.raises(EmptyInput):
        Embedder(linear).embed([])
    with pytest.raises(EmptyInput):
        cached_embed(None, Embedder(linear), [])


def test_make_backend_synthetic_dim_from_ref():
    b = make_backend(ModelRef(Provider.SYNTHETIC, "synthetic:sign_split", 7))
    assert len(b.embed_one("12")) == 7


# cache


def test_cache_second_call_makes_no_requests(tmp_path, linear):
    cache = CacheStore(tmp_path)
    texts = gen_positive_decimals(3, 100, seed=4).texts
    emb = Embedder(linear, batch_size=16)
    first = cached_embed(cache, emb, texts)
    n_first = emb.request_count
    assert n_first == math.ceil(100 / 16)
    second = cached_embed(CacheStore(tmp_path), emb, texts)
    assert emb.request_count == n_first
    np.testing.assert_array_equal(first.rows, second.rows)
    uncached = Embedder(linear).embed(texts)
    assert first.rows.tobytes() == uncached.tobytes()


def test_cache_fetches_only_set_difference(tmp_path, linear):
    cache = CacheStore(tmp_path)
    counting = CountingBackend(linear)
    emb = Embedder(counting, batch_size=1000)
    cached_embed(cache, emb, ["0.1", "0.2", "0.3"])
    cached_embed(cache, emb, ["0.2", "0.3", "0.4", "0.5", "0.4"])
    assert counting.batches == [["0.1", "0.2", "0.3"], ["0.4", "0.5"]]


def test_cache_shards_are_append_only(tmp_path, linear):
    cache = CacheStore(tmp_path)
    emb = Embedder(linear)
    cached_embed(cache, emb, ["0.1"])
    shard = next(tmp_path.rglob("*.jsonl"))
    before = shard.read_bytes()
    cached_embed(cache, emb, [f"0.{i}" for i in range(1, 10)])
    assert shard.read_bytes().startswith(before)
    head = json.loads(before.splitlines()[0])
    assert head["model"] == "synthetic:linear" and head["dim"] == 16


def test_cache_corruption_is_surfaced(tmp_path, linear):
    texts = [f"0.{i}" for i in range(10)]
    cached_embed(CacheStore(tmp_path), Embedder(linear), texts)
    shard = sorted(tmp_path.rglob("*.jsonl"))[0]
    lines = shard.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["vector"][0] += 1e-9
    lines[1] = json.dumps(rec)
    shard.write_text("\n".join(lines) + "\n")
    counting = CountingBackend(linear)
    with pytest.raises(CacheCorrupt) as info:
        cached_embed(CacheStore(tmp_path), Embedder(counting), texts)
    assert shard.name in str(info.value)
    assert counting.batches == []


def test_cache_truncated_line_is_corrupt(tmp_path, linear):
    cached_embed(CacheStore(tmp_path), Embedder(linear), ["0.5"])
    shard = next(tmp_path.rglob("*.jsonl"))
    shard.write_text(shard.read_text()[:-20])
    with pytest.raises(CacheCorrupt):
        CacheStore(tmp_path).get_many(linear.cache_namespace, ["0.5"])


def test_cache_namespaces_do_not_collide(tmp_path):
    cache = CacheStore(tmp_path)
    a = Embedder(SyntheticBackend.from_name("synthetic:linear", dim=8, seed=1))
    b = Embedder(SyntheticBackend.from_name("synthetic:linear", dim=8, seed=2))
    ra = cached_embed(cache, a, ["0.5"]).rows
    rb = cached_embed(cache, b, ["0.5"]).rows
    assert not np.array_equal(ra, rb)


def test_embedding_file_round_trip(linear):
    ds = gen_mixed_sign_integers(2, 30, seed=1)
    E = embed_remote(Embedder(linear), ds.texts, ds.fingerprint())
    back = EmbeddingMatrix.from_records([json.loads(l) for l in E.to_jsonl().splitlines()])
    assert back.rows.tobytes() == E.rows.tobytes()
    assert back.header() == E.header()
    assert E.header()["dataset_fingerprint"] == ds.fingerprint()


def test_embedding_matrix_rejects_nan():
    with pytest.raises(ValueError):
        EmbeddingMatrix(ModelRef.parse("synthetic:linear"), "", np.array([[1.0, np.nan]]))


# remote clients against a mock transport


def _openai_handler(dim=1536, fail=()):
    calls = []

    def handler(request: httpx.Request):
        calls.append(request)
        if len(calls) <= len(fail):
            status = fail[len(calls) - 1]
            return httpx.Response(status, text="slow down", headers={"retry-after": "0"})
        body = json.loads(request.content)
        data = [{"index": i, "embedding": [float(len(t))] * dim} for i, t in enumerate(body["input"])]
        return httpx.Response(200, json={"data": list(reversed(data))})

    return handler, calls


def test_openai_request_shape_and_default_dim():
    handler, calls = _openai_handler()
    backend = OpenAIBackend(ModelRef.parse("text-embedding-3-small"), api_key="sk-test", client=httpx.Client(transport=httpx.MockTransport(handler)))
    E = embed_remote(Embedder(backend), ["0.5"])
    assert E.rows.shape == (1, ModelRef.parse("text-embedding-3-small").default_dim)
    req = calls[0]
    assert str(req.url) == "https://api.openai.com/v1/embeddings"
    assert req.headers["authorization"] == "Bearer sk-test"
    assert json.loads(req.content) == {"model": "text-embedding-3-small", "input": ["0.5"], "encoding_format": "float"}


def test_openai_results_sorted_by_index():
    handler, _ = _openai_handler(dim=2)
    backend = OpenAIBackend(ModelRef.parse("text-embedding-3-large"), api_key="k", client=httpx.Client(transport=httpx.MockTransport(handler)))
    rows = Embedder(backend).embed(["1", "22", "333"])
    np.testing.assert_array_equal(rows[:, 0], [1, 2, 3])


def test_retry_on_429_then_success():
    handler, calls = _openai_handler(dim=3, fail=(429, 503))
    sleeps = []
    backend = OpenAIBackend(ModelRef.parse("text-embedding-3-small"), api_key="k", client=httpx.Client(transport=httpx.MockTransport(handler)))
    emb = Embedder(backend, sleep=sleeps.append, jitter_seed=0)
    rows = emb.embed(["0.1", "0.2"])
    assert rows.shape == (2, 3)
    assert len(calls) == 3 and emb.request_count == 3
    assert len(sleeps) == 2
    assert 0.5 <= sleeps[0] <= 1.0 and 1.0 <= sleeps[1] <= 2.0


def test_retries_exhausted():
    handler, calls = _openai_handler(fail=(429,) * 10)
    backend = OpenAIBackend(ModelRef.parse("text-embedding-3-small"), api_key="k", client=httpx.Client(transport=httpx.MockTransport(handler)))
    sleeps = []
    with pytest.raises(RateLimitExhausted):
        Embedder(backend, sleep=sleeps.append, backoff_cap=60.0).embed(["0.1"])
    assert len(calls) == 5
    assert all(s <= 60.0 for s in sleeps)


def test_non_retryable_4xx_carries_body():
    def handler(request):
        return httpx.Response(401, text='{"error": "invalid api key"}')

    backend = VoyageBackend(ModelRef.parse("voyage-3.5"), api_key="bad", client=httpx.Client(transport=httpx.MockTransport(handler)))
    with pytest.raises(ProviderError) as info:
        Embedder(backend).embed(["0.1"])
    assert info.value.status == 401
    assert "invalid api key" in str(info.value)


def test_failed_fetch_writes_nothing_to_cache(tmp_path):
    def handler(request):
        return httpx.Response(403, text="revoked")

    backend = OpenAIBackend(ModelRef.parse("text-embedding-3-small"), api_key="k", client=httpx.Client(transport=httpx.MockTransport(handler)))
    with pytest.raises(ProviderError):
        cached_embed(CacheStore(tmp_path), Embedder(backend), ["0.1", "0.2"])
    assert list(tmp_path.rglob("*.jsonl")) == []


def test_missing_credentials(monkeypatch):
    for var in ("OPENAI_API_KEY", "GEMINI_API_KEY", "VOYAGE_API_KEY"):
        monkeypatch.delenv(var, raising=False)
    for name in ("text-embedding-ada-002", "gemini-embedding-001", "voyage-3-large"):
        with pytest.raises(MissingCredentials):
            make_backend(ModelRef.parse(name))


def test_key_from_environment(monkeypatch):
    monkeypatch.setenv("VOYAGE_API_KEY", "env-key")
    assert VoyageBackend(ModelRef.parse("voyage-3.5")).api_key == "env-key"


def test_inconsistent_dimensions():
    def handler(request):
        body = json.loads(request.content)
        return httpx.Response(200, json={"data": [{"index": i, "embedding": [0.0] * (2 + i)} for i, _ in enumerate(body["input"])]})

    backend = OpenAIBackend(ModelRef.parse("text-embedding-3-small"), api_key="k", client=httpx.Client(transport=httpx.MockTransport(handler)))
    with pytest.raises(DimensionMismatch):
        Embedder(backend).embed(["1", "2"])


def test_voyage_request_shape():
    seen = []

    def handler(request):
        seen.append(request)
        body = json.loads(request.content)
        return httpx.Response(200, json={"data": [{"index": i, "embedding": [1.0, 2.0]} for i, _ in enumerate(body["input"])]})

    ref = ModelRef.parse("voyage-3-large", requested_dim=256)
    backend = VoyageBackend(ref, api_key="vk", client=httpx.Client(transport=httpx.MockTransport(handler)))
    Embedder(backend).embed(["3", "4"])
    assert str(seen[0].url) == "https://api.voyageai.com/v1/embeddings"
    assert json.loads(seen[0].content) == {"model": "voyage-3-large", "input": ["3", "4"], "output_dimension": 256}
    assert backend.cache_namespace == "voyage/voyage-3-large@256"


def test_gemini_request_shape():
    seen = []

    def handler(request):
        seen.append(request)
        body = json.loads(request.content)
        return httpx.Response(200, json={"embeddings": [{"values": [0.5] * 4} for _ in body["requests"]]})

    backend = GeminiBackend(ModelRef.parse("gemini-embedding-001"), api_key="gk", client=httpx.Client(transport=httpx.MockTransport(handler)))
    rows = Embedder(backend, batch_size=2).embed(["1", "2", "3"])
    assert rows.shape == (3, 4)
    req = seen[0]
    assert req.url.path.endswith("models/gemini-embedding-001:batchEmbedContents")
    assert req.headers["x-goog-api-key"] == "gk"
    body = json.loads(req.content)
    assert body["requests"][0] == {"model": "models/gemini-embedding-001", "content": {"parts": [{"text": "1"}]}}


def test_malformed_response_is_provider_error():
    def handler(request):
        return httpx.Response(200, json={"unexpected": True})

    backend = GeminiBackend(ModelRef.parse("gemini-embedding-001"), api_key="gk", client=httpx.Client(transport=httpx.MockTransport(handler)))
    with pytest.raises(ProviderError):
        Embedder(backend).embed(["1"])


def test_token_bucket_throttles():
    now = [0.0]
    slept = []

    def sleep(dt):
        slept.append(dt)
        now[0] += dt

    bucket = TokenBucket(60.0, burst=2, clock=lambda: now[0], sleep=sleep)
    for _ in range(5):
        bucket.acquire()
    # two burst tokens, then one per second
    assert now[0] == pytest.approx(3.0)
    assert len(slept) == 3
