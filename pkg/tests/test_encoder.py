import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from relcluster.corpus import Corpus, Sentence, tag_entities
from relcluster.encoder import (
    EncoderParams,
    InstanceRef,
    Vectorizer,
    deterministic_positions,
    encode_tokens,
    init_params,
    load_external_encodings,
    relation_vector,
)
from relcluster.errors import SchemaError

from conftest import DATA


def tiny_corpus():
    s1 = Sentence(
        id="a",
        tokens=("Ann", "leads", "big", "team", "at", "Zeta"),
        head_span=(0, 0),
        tail_span=(5, 5),
        head_type="PERSON",
        tail_type="ORG",
    )
    s2 = Sentence(
        id="b",
        tokens=("Bo", "works", "for", "Zeta"),
        head_span=(0, 0),
        tail_span=(3, 3),
        head_type="PERSON",
        tail_type="ORG",
    )
    return Corpus(sentences=(s1, s2), entity_types=frozenset({"PERSON", "ORG"}))


class TestEncodeTokens:
    def test_zero_window_is_identity(self):
        corpus = tiny_corpus()
        params = init_params(corpus, dim=4, context_window=0, seed=1)
        tagged = tag_entities(corpus.by_id("b"))
        enc = encode_tokens(tagged, params)
        for i, tok in enumerate(tagged.tokens):
            np.testing.assert_array_equal(enc.vectors[i], params.table[params.vocab[tok]])

    def test_identical_tokens_share_window_mean(self):
        s = Sentence(
            id="x",
            tokens=("go", "go", "go"),
            head_span=(0, 0),
            tail_span=(2, 2),
            head_type="A",
            tail_type="A",
        )
        corpus = Corpus(sentences=(s,), entity_types=frozenset({"A"}))
        params = init_params(corpus, dim=3, context_window=1, seed=0)
        # Strip markers from consideration: encode a marker-free sequence by
        # checking the three inner "go" rows of an unmarked clone.
        from relcluster.corpus import TaggedSequence

        tagged = TaggedSequence(
            tokens=("go", "go", "go"),
            marker_positions=(0, 0, 0, 0),
            origin="x",
            orig_to_tagged=(0, 1, 2),
        )
        enc = encode_tokens(tagged, params)
        row = params.table[params.vocab["go"]]
        for i in range(3):
            np.testing.assert_allclose(enc.vectors[i], row)

    def test_window_mean_matches_direct_average(self):
        # Oracle: arithmetic mean of the three contributing rows.
        corpus = tiny_corpus()
        params = init_params(corpus, dim=5, context_window=1, seed=7)
        tagged = tag_entities(corpus.by_id("a"))
        enc = encode_tokens(tagged, params)
        idx = [params.vocab.get(t, 0) for t in tagged.tokens]
        middle = 4
        oracle = params.table[[idx[3], idx[4], idx[5]]].mean(axis=0)
        np.testing.assert_allclose(enc.vectors[middle], oracle, atol=1e-12)

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_linear_in_table(self, seed):
        corpus = tiny_corpus()
        rng = np.random.default_rng(seed)
        params_a = init_params(corpus, dim=3, context_window=1, seed=1)
        params_b = init_params(corpus, dim=3, context_window=1, seed=2)
        params_b.table = rng.standard_normal(params_b.table.shape)
        summed = EncoderParams(
            dict(params_a.vocab), params_a.table + params_b.table, 1
        )
        tagged = tag_entities(corpus.by_id("a"))
        enc_sum = encode_tokens(tagged, summed).vectors
        enc_parts = (
            encode_tokens(tagged, params_a).vectors
            + encode_tokens(tagged, params_b).vectors
        )
        np.testing.assert_allclose(enc_sum, enc_parts, atol=1e-9)


class TestRelationVector:
    def test_concatenation_example(self):
        # Hand-built: marker vectors (1,0) and (0,1), word vectors (1,1), (2,0).
        from relcluster.corpus import TaggedSequence
        from relcluster.encoder import TokenEncodings

        vectors = np.array([[1.0, 0.0], [9, 9], [0.0, 1.0], [1.0, 1.0], [2.0, 0.0]])
        tagged = TaggedSequence(
            tokens=("m1", "w0", "m2", "w1", "w2"),
            marker_positions=(0, 4, 2, 4),
            origin="t",
            orig_to_tagged=(1, 3, 4),
        )
        enc = TokenEncodings(vectors=vectors, origin="t")
        rel = relation_vector(enc, tagged, [3, 4], "deterministic")
        raw = np.array([1, 0, 0, 1, 1, 1, 2, 0], dtype=float)
        np.testing.assert_allclose(rel.values, raw / np.linalg.norm(raw))
        assert rel.norm == pytest.approx(np.linalg.norm(raw))

    def test_zero_pad_slots(self):
        from relcluster.corpus import TaggedSequence
        from relcluster.encoder import TokenEncodings

        vectors = np.array([[3.0, 0.0], [0.0, 4.0], [1, 1]])
        tagged = TaggedSequence(
            tokens=("m1", "m2", "w"),
            marker_positions=(0, 2, 1, 2),
            origin="t",
            orig_to_tagged=(2,),
        )
        enc = TokenEncodings(vectors=vectors, origin="t")
        rel = relation_vector(enc, tagged, [None, None], "sampled")
        assert rel.values[4:].tolist() == [0, 0, 0, 0]
        assert np.linalg.norm(rel.values) == pytest.approx(1.0)

    def test_same_sentence_two_position_sets_share_marker_prefix(self):
        corpus = tiny_corpus()
        params = init_params(corpus, dim=4, context_window=1, seed=3)
        vec = Vectorizer(corpus, m=2, params=params)
        a = vec.relation_vec(InstanceRef("a", (1, 2), "sampled"))
        b = vec.relation_vec(InstanceRef("a", (2, 3), "sampled"))
        assert not np.allclose(a.values, b.values)
        np.testing.assert_allclose(
            a.values[:8] * a.norm, b.values[:8] * b.norm, rtol=0, atol=1e-12
        )

    def test_unit_norm_property(self):
        corpus = tiny_corpus()
        params = init_params(corpus, dim=6, context_window=1, seed=5)
        vec = Vectorizer(corpus, m=2, params=params)
        for sid in ("a", "b"):
            v = vec.vector(vec.deterministic_ref(sid))
            assert abs(np.linalg.norm(v) - 1.0) < 1e-9

    def test_position_out_of_range(self):
        corpus = tiny_corpus()
        params = init_params(corpus, dim=4, context_window=0, seed=3)
        tagged = tag_entities(corpus.by_id("b"))
        enc = encode_tokens(tagged, params)
        with pytest.raises(IndexError):
            relation_vector(enc, tagged, [99], "sampled")


class TestDeterministicPositions:
    def test_intermediate_words_win(self):
        s = Sentence(
            id="p",
            tokens=("Paul", "is", "chief", "executive", "of", "Library"),
            head_span=(0, 0),
            tail_span=(5, 5),
            head_type="P",
            tail_type="O",
        )
        assert deterministic_positions(s, 2) == (2, 3)

    def test_outside_fallback(self):
        s = Sentence(
            id="p",
            tokens=("Director", "Paul", "of", "the", "Library", "yesterday"),
            head_span=(1, 1),
            tail_span=(4, 4),
            head_type="P",
            tail_type="O",
        )
        # Gap "of the" is all stop words; nearest-head outside content words fill in.
        assert deterministic_positions(s, 2) == (0, 5)

    def test_zero_padding(self):
        s = Sentence(
            id="p",
            tokens=("Paul", "of", "Library"),
            head_span=(0, 0),
            tail_span=(2, 2),
            head_type="P",
            tail_type="O",
        )
        assert deterministic_positions(s, 2) == (None, None)

    def test_single_content_word_pads_one_slot(self):
        s = Sentence(
            id="p",
            tokens=("Paul", "joined", "the", "Library"),
            head_span=(0, 0),
            tail_span=(3, 3),
            head_type="P",
            tail_type="O",
        )
        assert deterministic_positions(s, 2) == (1, None)


class TestGradient:
    def test_chain_matches_finite_differences(self):
        corpus = tiny_corpus()
        worst = 0.0
        for seed in range(3):
            params = init_params(corpus, dim=3, context_window=1, seed=seed)
            vec = Vectorizer(corpus, m=2, params=params)
            ref = vec.deterministic_ref("a")
            rng = np.random.default_rng(seed + 100)
            probe = rng.standard_normal((2 + 2) * 3)
            _, backprop = vec.vector_with_grad(ref)
            grad = np.zeros_like(params.table)
            backprop(probe, grad)
            eps = 1e-6
            numeric = np.zeros_like(grad)
            for i in range(grad.shape[0]):
                for j in range(grad.shape[1]):
                    orig = params.table[i, j]
                    params.table[i, j] = orig + eps
                    up = float(probe @ vec.vector(ref))
                    params.table[i, j] = orig - eps
                    down = float(probe @ vec.vector(ref))
                    params.table[i, j] = orig
                    numeric[i, j] = (up - down) / (2 * eps)
            mask = (np.abs(grad) > 1e-9) | (np.abs(numeric) > 1e-9)
            rel = np.abs(grad[mask] - numeric[mask]) / np.maximum(
                1e-12, np.abs(grad[mask])
            )
            worst = max(worst, float(rel.max()))
        assert worst < 1e-4


class TestExternalEncodings:
    def test_fixture_loads(self, fixture_corpus):
        enc = load_external_encodings(DATA / "fixture_encodings.jsonl", fixture_corpus)
        assert len(enc) == 5
        tagged = tag_entities(fixture_corpus.by_id("s01"))
        assert enc["s01"].vectors.shape[0] == len(tagged.tokens)

    def test_row_count_mismatch(self, tmp_path, fixture_corpus):
        path = tmp_path / "enc.jsonl"
        with open(path, "w") as fh:
            fh.write(json.dumps({"dim": 2}) + "\n")
            fh.write(json.dumps({"id": "s01", "vectors": [[0.0, 1.0]] * 3}) + "\n")
        with pytest.raises(SchemaError, match="s01"):
            load_external_encodings(path, fixture_corpus)

    def test_missing_header(self, tmp_path, fixture_corpus):
        path = tmp_path / "enc.jsonl"
        path.write_text(json.dumps({"id": "s01", "vectors": [[1.0]]}) + "\n")
        with pytest.raises(SchemaError, match="header"):
            load_external_encodings(path, fixture_corpus)

    def test_frozen_vectors_cluster_end_to_end(self, fixture_corpus):
        from relcluster.clustering import kmeans, assign

        enc = load_external_encodings(DATA / "fixture_encodings.jsonl", fixture_corpus)
        sub = Corpus(
            sentences=tuple(fixture_corpus.by_id(f"s{i:02d}") for i in range(1, 6)),
            entity_types=fixture_corpus.entity_types,
        )
        vec = Vectorizer(sub, m=2, external=enc)
        vectors = np.stack([vec.vector(vec.deterministic_ref(sid)) for sid in sub.ids])
        model = kmeans(vectors, 2, seed=0)
        labels = assign(vectors, model)
        assert len(labels) == 5
