"""Sliding-window document embedding tests: chunk plans, pooling, providers."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from logtriage.docembed import (
    ChunkPlan,
    EmbeddingClassifier,
    HttpProvider,
    MockProvider,
    chunk_arrays,
    embed_classifier,
    embed_document,
    http_provider,
    load_embedding_store,
    mock_provider,
    plan_chunks,
    save_embedding_store,
)


def starts_oracle(doc_len, context, overlap):
    """Enumerate chunk starts until the document is covered."""
    starts = [0]
    while starts[-1] + context < doc_len:
        starts.append(starts[-1] + (context - overlap))
    return starts


class TestPlanChunks:
    def test_divisible_case_matches_closed_form(self):
        plan = plan_chunks(2048, 512, 256)
        assert plan.m == 7
        assert plan.starts == [0, 256, 512, 768, 1024, 1280, 1536]
        assert plan.m == (2048 - 256) // (512 - 256)

    def test_single_window_when_doc_fits(self):
        for overlap in (0, 10, 31):
            plan = plan_chunks(32, 32, overlap)
            assert plan.m == 1
            assert plan.starts == [0]

    def test_fractional_case_rounds_up(self):
        plan = plan_chunks(100, 32, 16)
        assert plan.m == 6
        assert plan.starts == starts_oracle(100, 32, 16)

    def test_overlap_bounds(self):
        with pytest.raises(ValueError):
            plan_chunks(100, 32, 32)
        with pytest.raises(ValueError):
            plan_chunks(100, 32, -1)
        with pytest.raises(ValueError):
            plan_chunks(0, 32, 16)

    def test_against_enumeration_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            context = int(rng.integers(2, 64))
            overlap = int(rng.integers(0, context))
            doc_len = int(rng.integers(1, 2000))
            plan = plan_chunks(doc_len, context, overlap)
            expect = starts_oracle(doc_len, context, overlap)
            assert plan.starts == expect, (doc_len, context, overlap)
            # coverage and exact-divisibility identity
            assert plan.starts[-1] + context >= doc_len
            step = context - overlap
            if doc_len > context and (doc_len - overlap) % step == 0:
                assert plan.m == (doc_len - overlap) // step

    def test_chunk_arrays_pad_and_mask(self):
        plan = plan_chunks(5, 4, 2)
        tokens = np.array([7, 8, 9, 10, 11])
        chunks = list(chunk_arrays(plan, tokens, pad_id=0))
        assert len(chunks) == plan.m
        ids, mask = chunks[-1]
        start = plan.starts[-1]
        real = 5 - start
        assert list(mask) == [1] * real + [0] * (4 - real)
        assert list(ids[:real]) == list(tokens[start:])
        assert set(ids[real:]) == {0}


def brute_force_embed(tokens, provider, context, overlap, mask_aware, pad_id=0):
    """Materialize every chunk and average with masks (independent of embed_document)."""
    plan = plan_chunks(len(tokens), context, overlap)
    chunk_means = []
    for start in plan.starts:
        piece = list(tokens[start : start + context])
        mask = [1] * len(piece) + [0] * (context - len(piece))
        piece = piece + [pad_id] * (context - len(piece))
        emb = provider.embed_chunk(np.array(piece), np.array(mask))
        emb = np.asarray(emb, dtype=np.float64)
        if mask_aware:
            rows = [emb[i] for i in range(context) if mask[i]]
            chunk_means.append(np.mean(rows, axis=0))
        else:
            chunk_means.append(emb.sum(axis=0) / context)
    return np.mean(chunk_means, axis=0)


class TestEmbedDocument:
    def test_single_chunk_plain_mean(self):
        provider = mock_provider(dim=6, seed=1)
        tokens = np.array([3, 5, 7, 9])
        emb = embed_document(tokens, provider, context=8, overlap=4)
        expect = np.mean([provider._row(t) for t in tokens], axis=0)
        np.testing.assert_allclose(emb.vector, expect, atol=1e-12)

    def test_constant_embeddings_give_constant_result(self):
        class ConstProvider:
            dim = 4
            context_capacity = 1 << 30
            provider_id = "const"

            def embed_chunk(self, tokens, mask):
                return np.ones((len(tokens), 4)) * 2.5

        emb = embed_document(np.arange(100), ConstProvider(), context=16, overlap=8)
        np.testing.assert_allclose(emb.vector, 2.5)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        provider = mock_provider(dim=5, seed=3)
        for _ in range(60):
            context = int(rng.integers(2, 40))
            overlap = int(rng.integers(0, context))
            n = int(rng.integers(1, 300))
            tokens = rng.integers(0, 30, size=n)
            for mask_aware in (True, False):
                got = embed_document(tokens, provider, context, overlap, mask_aware=mask_aware)
                expect = brute_force_embed(tokens, provider, context, overlap, mask_aware)
                np.testing.assert_allclose(got.vector, expect, atol=1e-9)

    def test_modes_agree_exactly_without_padding(self):
        provider = mock_provider(dim=4, seed=4)
        # (doc_len - overlap) divisible by step: no padding in the last chunk
        tokens = np.arange(2048) % 17
        a = embed_document(tokens, provider, 512, 256, mask_aware=True)
        b = embed_document(tokens, provider, 512, 256, mask_aware=False)
        np.testing.assert_array_equal(a.vector, b.vector)
        assert a.m == b.m == 7

    def test_literal_mode_matches_double_sum(self):
        provider = mock_provider(dim=3, seed=5)
        tokens = np.arange(64) % 9
        context, overlap = 16, 8
        emb = embed_document(tokens, provider, context, overlap, mask_aware=False)
        plan = plan_chunks(len(tokens), context, overlap)
        total = np.zeros(3)
        for ids, mask in chunk_arrays(plan, tokens):
            total += np.asarray(provider.embed_chunk(ids, mask)).sum(axis=0)
        np.testing.assert_allclose(emb.vector, total / (plan.m * context), atol=1e-12)

    def test_short_document_independent_of_overlap(self):
        provider = mock_provider(dim=4, seed=6)
        tokens = np.array([1, 2, 3])
        results = [
            embed_document(tokens, provider, context=16, overlap=w).vector
            for w in (0, 5, 15)
        ]
        np.testing.assert_array_equal(results[0], results[1])
        np.testing.assert_array_equal(results[0], results[2])

    def test_scaling_linearity(self):
        base = mock_provider(dim=4, seed=7)

        class Scaled:
            dim = 4
            context_capacity = 1 << 30
            provider_id = "scaled"

            def embed_chunk(self, tokens, mask):
                return 3.0 * np.asarray(base.embed_chunk(tokens, mask))

        tokens = np.arange(50)
        a = embed_document(tokens, base, 16, 8)
        b = embed_document(tokens, Scaled(), 16, 8)
        np.testing.assert_allclose(b.vector, 3.0 * a.vector, atol=1e-12)

    def test_chunk_order_permutation_invariance(self):
        provider = mock_provider(dim=4, seed=8)
        tokens = np.arange(100)
        plan = plan_chunks(len(tokens), 16, 8)
        means = []
        for ids, mask in chunk_arrays(plan, tokens):
            emb = np.asarray(provider.embed_chunk(ids, mask))
            means.append(emb[mask.astype(bool)].mean(axis=0))
        rng = np.random.default_rng(9)
        shuffled = [means[i] for i in rng.permutation(len(means))]
        np.testing.assert_allclose(
            np.mean(means, axis=0), np.mean(shuffled, axis=0), atol=1e-12
        )

    def test_context_capacity_enforced(self):
        provider = MockProvider(dim=4, seed=0, context_capacity=8)
        with pytest.raises(ValueError, match="capacity"):
            embed_document(np.arange(100), provider, context=16, overlap=8)

    def test_parallel_chunks_match_serial(self):
        provider = mock_provider(dim=4, seed=10)
        tokens = np.arange(200) % 13
        serial = embed_document(tokens, provider, 16, 8)
        parallel = embed_document(tokens, provider, 16, 8, max_workers=4)
        np.testing.assert_array_equal(serial.vector, parallel.vector)


class TestMockProvider:
    def test_same_token_identical_rows(self):
        p = mock_provider(dim=8, seed=0)
        emb = p.embed_chunk(np.array([5, 5, 9]), np.ones(3, dtype=np.int64))
        np.testing.assert_array_equal(emb[0], emb[1])
        assert not np.array_equal(emb[0], emb[2])

    def test_different_seeds_differ(self):
        a = mock_provider(dim=8, seed=0).embed_chunk(np.array([3]), np.array([1]))
        b = mock_provider(dim=8, seed=1).embed_chunk(np.array([3]), np.array([1]))
        assert not np.array_equal(a, b)

    def test_dim_and_range(self):
        emb = mock_provider(dim=8, seed=2).embed_chunk(np.arange(20), np.ones(20))
        assert emb.shape == (20, 8)
        assert emb.min() >= -1.0 and emb.max() <= 1.0


class _StubHandler(BaseHTTPRequestHandler):
    state = {"requests": 0, "fail_next": 0}

    def do_POST(self):
        cls = type(self)
        cls.state["requests"] += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if cls.state["fail_next"] > 0:
            cls.state["fail_next"] -= 1
            self.send_response(500)
            self.end_headers()
            return
        if cls.state.get("bad_shape"):
            payload = {"embeddings": [[1.0, 2.0]]}
        else:
            # embedding of token t = [t, 2t, 3t]
            payload = {"embeddings": [[t * 1.0, t * 2.0, t * 3.0] for t in body["tokens"]]}
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    _StubHandler.state = {"requests": 0, "fail_next": 0}
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/embed", _StubHandler.state
    server.shutdown()


class _TokenLinearProvider:
    """Local reimplementation of the stub server's embedding rule."""

    dim = 3
    context_capacity = 1 << 30
    provider_id = "token-linear"

    def embed_chunk(self, tokens, mask):
        return np.array([[t * 1.0, t * 2.0, t * 3.0] for t in tokens])


class TestHttpProvider:
    def test_matches_local_provider(self, stub_server):
        url, _ = stub_server
        provider = http_provider(url)
        tokens = np.arange(40) % 11
        got = embed_document(tokens, provider, 16, 8)
        expect = embed_document(tokens, _TokenLinearProvider(), 16, 8)
        np.testing.assert_allclose(got.vector, expect.vector, atol=1e-12)

    def test_retry_after_500(self, stub_server):
        url, state = stub_server
        state["fail_next"] = 1
        provider = HttpProvider(url, backoff=0.01)
        emb = provider.embed_chunk(np.array([2, 3]), np.array([1, 1]))
        assert emb.shape == (2, 3)
        assert state["requests"] == 2

    def test_gives_up_after_max_attempts(self, stub_server):
        url, state = stub_server
        state["fail_next"] = 10
        provider = HttpProvider(url, backoff=0.01, max_attempts=3)
        with pytest.raises(RuntimeError, match="3 attempts"):
            provider.embed_chunk(np.array([1]), np.array([1]))
        assert state["requests"] == 3

    def test_cache_hit_skips_network(self, stub_server, tmp_path):
        url, state = stub_server
        provider = HttpProvider(url, cache_dir=tmp_path / "cache")
        tokens, mask = np.array([4, 5]), np.array([1, 1])
        a = provider.embed_chunk(tokens, mask)
        n_after_first = state["requests"]
        b = provider.embed_chunk(tokens, mask)
        assert state["requests"] == n_after_first
        np.testing.assert_array_equal(a, b)

    def test_cache_dir_from_env(self, stub_server, tmp_path, monkeypatch):
        url, state = stub_server
        monkeypatch.setenv("LOGTRIAGE_CACHE_DIR", str(tmp_path / "envcache"))
        provider = HttpProvider(url)
        provider.embed_chunk(np.array([1]), np.array([1]))
        assert any((tmp_path / "envcache").iterdir())

    def test_shape_mismatch_raises(self, stub_server):
        url, state = stub_server
        state["bad_shape"] = True
        provider = HttpProvider(url, backoff=0.01, max_attempts=1)
        with pytest.raises((RuntimeError, ValueError)):
            provider.embed_chunk(np.array([1, 2, 3]), np.array([1, 1, 1]))


class TestEmbeddingClassifier:
    def test_separable_blobs_reach_full_accuracy(self):
        rng = np.random.default_rng(1)
        a = rng.normal(loc=(-2, 0), scale=0.3, size=(40, 2))
        b = rng.normal(loc=(2, 0), scale=0.3, size=(40, 2))
        x = np.vstack([a, b])
        y = np.array([0] * 40 + [1] * 40)
        clf = embed_classifier(x, y, n_classes=2, epochs=200, lr=0.1)
        assert (clf.predict(x) == y).mean() == 1.0

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(2)
        clf = EmbeddingClassifier(dim=3, n_classes=4)
        probs = clf.predict_proba(rng.standard_normal((10, 3)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_dim_mismatch_raises(self):
        clf = EmbeddingClassifier(dim=3, n_classes=2)
        with pytest.raises(ValueError):
            clf.predict_proba(np.zeros((4, 5)))

    def test_class_weight_identity_reused(self):
        from logtriage.classifier import class_weights

        counts = np.array([7, 3])
        wts = class_weights(counts)
        assert (wts * counts).sum() == pytest.approx(10.0)


class TestStore:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        ids = ["a.log", "b.log", "nested/c.log"]
        vectors = rng.standard_normal((3, 5)).astype(np.float32)
        path = tmp_path / "store.bin"
        save_embedding_store(path, ids, vectors, "mock-d5-s0")
        got_ids, got_vec, pid = load_embedding_store(path)
        assert got_ids == ids
        assert pid == "mock-d5-s0"
        np.testing.assert_array_equal(got_vec, vectors)
