"""Vector store: cosine arithmetic, oracle agreement, persistence round-trip."""

from __future__ import annotations

import random

import numpy as np
import pytest

from relex.embeddings import (
    DeterministicHashProvider,
    EmbeddingStore,
    build_store,
    cosine_similarity,
    embed_text,
    load_store,
    query_top_k,
    save_store,
)
from relex.errors import ParseError, TransportError, ValidationError

from conftest import synthetic_instances


def brute_force_top_k(ids, vectors, query, k):
    """Independent exhaustive scan; per-record float64 dot products."""
    query = np.asarray(query, dtype=np.float64)
    qnorm = float(np.linalg.norm(query))
    scored = []
    for instance_id, vector in zip(ids, vectors):
        vector = np.asarray(vector, dtype=np.float64)
        sim = float(np.dot(vector, query) / (np.linalg.norm(vector) * qnorm))
        scored.append((sim, instance_id))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [instance_id for _, instance_id in scored[:k]]


def random_store(rng, size, dim, fingerprint="test:fixture"):
    vectors = np.asarray(
        [[rng.uniform(-1, 1) for _ in range(dim)] for _ in range(size)], dtype=np.float32
    )
    ids = [f"v{idx:05d}" for idx in range(size)]
    return EmbeddingStore(dim, fingerprint, ids, vectors)


class TestCosine:
    def test_identity(self):
        rng = random.Random(0)
        for _ in range(10):
            v = [rng.uniform(-5, 5) for _ in range(8)]
            if not any(v):
                continue
            assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_hand_derived_value(self):
        # (1*2 + 2*1) / (sqrt(5) * sqrt(5)) = 4/5
        assert cosine_similarity([1, 2], [2, 1]) == pytest.approx(0.8, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            cosine_similarity([1, 2], [1, 2, 3])

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            cosine_similarity([0, 0], [1, 2])


class TestDeterministicProvider:
    def test_same_text_same_vector(self):
        provider = DeterministicHashProvider()
        a = provider.embed("the quick brown fox")
        b = provider.embed("the quick brown fox")
        assert np.array_equal(a, b)
        assert a.shape == (64,)

    def test_different_texts_differ(self):
        provider = DeterministicHashProvider()
        a = provider.embed("alpha beta gamma")
        b = provider.embed("delta epsilon zeta")
        assert (a != b).any()

    def test_empty_text_rejected(self):
        provider = DeterministicHashProvider()
        with pytest.raises(ValidationError, match="empty"):
            provider.embed("   ")

    def test_coordinates_in_range(self):
        provider = DeterministicHashProvider()
        vector = provider.embed("one two three four five")
        assert np.all(vector >= -1.0) and np.all(vector <= 1.0)

    def test_matches_reference_algorithm(self):
        # Second implementation of the token-hash + LCG scheme.
        def reference(text):
            mask = (1 << 64) - 1
            out = np.zeros(64)
            tokens = text.split()
            for token in tokens:
                h = 0xCBF29CE484222325
                for byte in token.encode("utf-8"):
                    h = ((h ^ byte) * 0x100000001B3) & mask
                x = h
                coords = []
                for _ in range(64):
                    x = (6364136223846793005 * x + 1442695040888963407) & mask
                    coords.append(x / 2.0**63 - 1.0)
                out += np.asarray(coords)
            return out / len(tokens)

        provider = DeterministicHashProvider()
        for text in ("hello world", "Ada of Acme visited Cairo", "ünïcode tökens"):
            assert np.allclose(provider.embed(text), reference(text), atol=0)

    def test_embed_text_wrapper(self):
        provider = DeterministicHashProvider()
        assert embed_text(provider, "a b").shape == (64,)
        with pytest.raises(ValidationError):
            embed_text(provider, "")


class TestBuildStore:
    def test_three_fixture_sentences(self):
        provider = DeterministicHashProvider()
        instances = synthetic_instances(3, "train")
        store = build_store(instances, provider)
        assert len(store) == 3
        assert store.dimension == provider.dimension
        assert store.ids == [inst.id for inst in instances]
        assert store.provider_fingerprint == provider.fingerprint

    def test_duplicate_ids_rejected(self):
        provider = DeterministicHashProvider()
        instances = synthetic_instances(2, "train")
        with pytest.raises(ValidationError, match="duplicate"):
            build_store([instances[0], instances[0]], provider)

    def test_provider_failure_reports_completed_count(self):
        class FlakyProvider(DeterministicHashProvider):
            def __init__(self):
                super().__init__()
                self.count = 0

            def embed(self, text):
                self.count += 1
                if self.count > 2:
                    raise TransportError("endpoint down")
                return super().embed(text)

        with pytest.raises(TransportError, match="after 2 of 5"):
            build_store(synthetic_instances(5, "train"), FlakyProvider())

    def test_zero_vector_names_instance(self):
        class ZeroProvider(DeterministicHashProvider):
            def embed(self, text):
                return np.zeros(self.dimension)

        instances = synthetic_instances(1, "train")
        with pytest.raises(ValidationError, match=instances[0].id):
            build_store(instances, ZeroProvider())


class TestQueryTopK:
    def test_self_retrieval_rank_one(self):
        rng = random.Random(5)
        store = random_store(rng, 50, 16)
        for index in (0, 17, 49):
            results = query_top_k(store, store.vectors[index], 3, query_id="q")
            assert results[0].neighbor_id == store.ids[index]
            assert results[0].similarity == pytest.approx(1.0, abs=1e-9)
            assert results[0].query_id == "q"

    def test_k_equals_store_size_returns_all_sorted(self):
        rng = random.Random(6)
        store = random_store(rng, 20, 8)
        results = query_top_k(store, [rng.uniform(-1, 1) for _ in range(8)], 20)
        assert sorted(r.neighbor_id for r in results) == sorted(store.ids)
        sims = [r.similarity for r in results]
        assert sims == sorted(sims, reverse=True)

    def test_oracle_agreement_randomized(self):
        rng = random.Random(7)
        for _ in range(30):
            size = rng.randrange(1, 400)
            dim = rng.randrange(2, 32)
            store = random_store(rng, size, dim)
            query = [rng.uniform(-1, 1) for _ in range(dim)]
            k = rng.randrange(1, min(size, 10) + 1)
            expected = brute_force_top_k(store.ids, store._vectors64, query, k)
            got = [r.neighbor_id for r in query_top_k(store, query, k)]
            assert got == expected

    def test_tie_break_ascending_id(self):
        vectors = np.asarray([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
        store = EmbeddingStore(2, "test:fixture", ["zeta", "alpha", "omega"], vectors)
        results = query_top_k(store, [1.0, 0.0], 2)
        assert [r.neighbor_id for r in results] == ["alpha", "zeta"]

    def test_scale_invariance(self):
        rng = random.Random(8)
        store = random_store(rng, 100, 12)
        query = np.asarray([rng.uniform(-1, 1) for _ in range(12)])
        base = [r.neighbor_id for r in query_top_k(store, query, 10)]
        for scale in (1e-6, 0.5, 3.0, 1e6):
            scaled = [r.neighbor_id for r in query_top_k(store, scale * query, 10)]
            assert scaled == base

    def test_k_out_of_range(self):
        rng = random.Random(9)
        store = random_store(rng, 5, 4)
        with pytest.raises(ValueError, match="k="):
            query_top_k(store, [1, 0, 0, 0], 0)
        with pytest.raises(ValueError, match="k="):
            query_top_k(store, [1, 0, 0, 0], 6)

    def test_dimension_mismatch(self):
        rng = random.Random(10)
        store = random_store(rng, 5, 4)
        with pytest.raises(ValueError, match="dimension"):
            query_top_k(store, [1, 0], 1)

    def test_similarity_bounds(self):
        rng = random.Random(11)
        store = random_store(rng, 200, 6)
        results = query_top_k(store, [rng.uniform(-1, 1) for _ in range(6)], 200)
        for r in results:
            assert -1.0 - 1e-9 <= r.similarity <= 1.0 + 1e-9


class TestPersistence:
    def test_round_trip_identity(self, tmp_path):
        rng = random.Random(12)
        store = random_store(rng, 37, 9, fingerprint="test:token-hash-lcg:d=9")
        path = tmp_path / "store.bin"
        save_store(store, path)
        loaded = load_store(path)
        assert loaded.dimension == store.dimension
        assert loaded.provider_fingerprint == store.provider_fingerprint
        assert loaded.ids == store.ids
        assert np.array_equal(loaded.vectors, store.vectors)

    def test_unicode_ids_round_trip(self, tmp_path):
        vectors = np.asarray([[0.5, 0.25], [1.0, -1.0]], dtype=np.float32)
        store = EmbeddingStore(2, "test:x", ["idé-ü", "普通"], vectors)
        path = tmp_path / "store.bin"
        save_store(store, path)
        assert load_store(path).ids == ["idé-ü", "普通"]

    def test_truncated_file_detected(self, tmp_path):
        rng = random.Random(13)
        store = random_store(rng, 10, 4)
        path = tmp_path / "store.bin"
        save_store(store, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(ParseError, match="truncated"):
            load_store(path)

    def test_query_after_reload_matches(self, tmp_path):
        rng = random.Random(14)
        store = random_store(rng, 64, 8)
        path = tmp_path / "store.bin"
        save_store(store, path)
        loaded = load_store(path)
        query = [rng.uniform(-1, 1) for _ in range(8)]
        assert [r.neighbor_id for r in query_top_k(store, query, 5)] == [
            r.neighbor_id for r in query_top_k(loaded, query, 5)
        ]


def test_store_rejects_zero_vector_row():
    vectors = np.asarray([[1.0, 2.0], [0.0, 0.0]], dtype=np.float32)
    with pytest.raises(ValidationError, match="zero"):
        EmbeddingStore(2, "test:x", ["a", "b"], vectors)


def test_store_norm_consistency():
    rng = random.Random(15)
    store = random_store(rng, 30, 7)
    for record in store.records:
        expected = float(np.linalg.norm(np.asarray(record.vector, dtype=np.float64)))
        assert record.norm == pytest.approx(expected, rel=1e-6)
        assert record.norm > 0
