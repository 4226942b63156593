"""Hashing embedder and binary store format."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astsearch.embeddings import (
    EmbeddingStore,
    HashingProvider,
    StoreProvider,
    content_key,
    hash_embed,
    load_store,
    save_store,
    store_from_jsonl,
)
from astsearch.errors import ContractViolation, FormatError, MissingEmbedding


class TestHashEmbed:
    def test_empty_text_is_first_basis_vector(self):
        vec = hash_embed("", 8, 0)
        expected = np.zeros(8)
        expected[0] = 1.0
        np.testing.assert_array_equal(vec, expected)

    def test_deterministic(self):
        np.testing.assert_array_equal(hash_embed("abc", 64, 7), hash_embed("abc", 64, 7))

    def test_one_character_difference_not_identical(self):
        # brute-force cosine over the fixture texts: all pairs distinct
        texts = ["abc", "abd", "hello world", "hello_world", "ab"]
        vecs = [hash_embed(t, 64, 0) for t in texts]
        for i in range(len(texts)):
            for j in range(i + 1, len(texts)):
                assert float(vecs[i] @ vecs[j]) < 1.0 - 1e-9

    def test_dim_lower_bound(self):
        with pytest.raises(ContractViolation):
            hash_embed("abc", 4, 0)

    def test_seed_changes_vectors(self):
        assert not np.array_equal(hash_embed("abcdef", 32, 0), hash_embed("abcdef", 32, 1))

    @given(st.text(max_size=40), st.sampled_from([8, 16, 64]), st.integers(0, 5))
    @settings(max_examples=200, deadline=None)
    def test_always_unit_norm(self, text, dim, seed):
        vec = hash_embed(text, dim, seed)
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-6
        assert np.all(np.isfinite(vec))


class TestHashingProvider:
    def test_same_text_twice(self):
        provider = HashingProvider(dim=16, seed=0)
        np.testing.assert_array_equal(provider.embed_text("x"), provider.embed_text("x"))

    def test_norm_contract(self):
        provider = HashingProvider(dim=16, seed=0)
        assert abs(np.linalg.norm(provider.embed_text("anything")) - 1.0) < 1e-6

    def test_fingerprint_identifies_config(self):
        assert HashingProvider(16, 2).fingerprint() != HashingProvider(16, 3).fingerprint()
        assert HashingProvider(16, 2).fingerprint() == HashingProvider(16, 2).fingerprint()


def random_store(count, dim, seed, model_id="test-model"):
    rng = np.random.default_rng(seed)
    store = EmbeddingStore(dim=dim, model_id=model_id)
    for i in range(count):
        vec = rng.normal(size=dim).astype(np.float32)
        store.add(f"id-{i:04d}-é", vec)
    return store


class TestStoreFormat:
    @pytest.mark.parametrize("count", [0, 1, 1000])
    def test_round_trip(self, tmp_path, count):
        store = random_store(count, 24, seed=count)
        path = tmp_path / "vectors.embs"
        save_store(store, path)
        loaded = load_store(path)
        assert loaded.dim == store.dim
        assert loaded.model_id == store.model_id
        assert list(loaded.entries) == list(store.entries)
        for key in store.entries:
            assert store.entries[key].tobytes() == loaded.entries[key].tobytes()

    def test_save_is_byte_stable(self, tmp_path):
        store = random_store(20, 8, seed=1)
        p1, p2 = tmp_path / "a.embs", tmp_path / "b.embs"
        save_store(store, p1)
        save_store(store, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.embs"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError) as exc_info:
            load_store(path)
        assert exc_info.value.offset == 0

    def test_bad_version(self, tmp_path):
        store = random_store(1, 8, seed=0)
        path = tmp_path / "v.embs"
        save_store(store, path)
        data = bytearray(path.read_bytes())
        data[4] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_store(path)

    def test_truncated_record(self, tmp_path):
        store = random_store(3, 8, seed=0)
        path = tmp_path / "t.embs"
        save_store(store, path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FormatError):
            load_store(path)

    def test_trailing_garbage(self, tmp_path):
        store = random_store(1, 8, seed=0)
        path = tmp_path / "g.embs"
        save_store(store, path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(FormatError):
            load_store(path)

    def test_dim_mismatch_on_add(self):
        store = EmbeddingStore(dim=4, model_id="m")
        with pytest.raises(ContractViolation):
            store.add("a", np.zeros(5, dtype=np.float32))


class TestJsonlImport:
    def test_import_and_round_trip(self, tmp_path):
        src = tmp_path / "vecs.jsonl"
        src.write_text(
            '{"id": "a", "vector": [1.0, 0.0]}\n'
            "\n"
            '{"id": "b", "vector": [0.6, 0.8]}\n'
        )
        store = store_from_jsonl(src)
        assert store.dim == 2
        assert len(store) == 2
        out = tmp_path / "vecs.embs"
        save_store(store, out)
        np.testing.assert_allclose(load_store(out).entries["b"], [0.6, 0.8], atol=1e-7)

    def test_malformed_line(self, tmp_path):
        src = tmp_path / "bad.jsonl"
        src.write_text('{"id": "a"}\n')
        with pytest.raises(FormatError):
            store_from_jsonl(src)

    def test_empty_file(self, tmp_path):
        src = tmp_path / "empty.jsonl"
        src.write_text("")
        with pytest.raises(FormatError):
            store_from_jsonl(src)


class TestStoreProvider:
    def test_stored_vector_verbatim(self, tmp_path):
        store = EmbeddingStore(dim=8, model_id="m")
        vec = np.arange(8, dtype=np.float32) / 14.0
        store.add(content_key("some text"), vec)
        path = tmp_path / "s.embs"
        save_store(store, path)
        provider = StoreProvider(load_store(path))
        np.testing.assert_allclose(provider.embed_text("some text"), vec, atol=1e-7)

    def test_sample_id_keys_take_priority(self):
        store = EmbeddingStore(dim=8, model_id="m")
        vec = np.ones(8, dtype=np.float32) / np.sqrt(8.0)
        store.add("sample-1", vec)
        provider = StoreProvider(store)
        np.testing.assert_allclose(provider.embed_text("whatever", key="sample-1"), vec, atol=1e-7)

    def test_miss_falls_back_to_hash(self):
        provider = StoreProvider(EmbeddingStore(dim=16, model_id="m"))
        expected = hash_embed("missing", 16, 0)
        np.testing.assert_array_equal(provider.embed_text("missing"), expected)

    def test_strict_miss_raises(self):
        provider = StoreProvider(EmbeddingStore(dim=16, model_id="m"), strict=True)
        with pytest.raises(MissingEmbedding):
            provider.embed_text("missing")
