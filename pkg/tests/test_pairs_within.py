import random
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from relcluster.corpus import Corpus, Sentence, build_entity_pool
from relcluster.pairs_within import (
    PositivePair,
    build_within_pairs,
    make_dropout_pair,
    replace_entities,
    sample_intermediate_positions,
)
from relcluster.encoder import InstanceRef


def gap_sentence(gap, prefix=(), suffix=()):
    tokens = prefix + ("Ann",) + gap + ("Zeta",) + suffix
    hs = len(prefix)
    return Sentence(
        id="g",
        tokens=tokens,
        head_span=(hs, hs),
        tail_span=(hs + 1 + len(gap), hs + 1 + len(gap)),
        head_type="PERSON",
        tail_type="ORG",
    )


class TestSampleIntermediatePositions:
    def test_uniform_inclusion_frequency(self):
        # Oracle: each of 5 intermediate content words should appear in a
        # 2-draw with frequency 2/5 over many seeded draws.
        s = gap_sentence(("alpha", "beta", "gamma", "delta", "omega"))
        rng = random.Random(17)
        counts = Counter()
        draws = 10_000
        for _ in range(draws):
            for pos in sample_intermediate_positions(s, 2, rng):
                counts[pos] += 1
        for pos in range(1, 6):
            assert counts[pos] / draws == pytest.approx(2 / 5, abs=0.02)

    def test_exactly_m_words_is_deterministic(self):
        s = gap_sentence(("alpha", "beta"))
        rng = random.Random(0)
        for _ in range(5):
            assert sample_intermediate_positions(s, 2, rng) == (1, 2)

    def test_fallback_and_padding(self):
        s = gap_sentence(("of", "the"), suffix=("overseas",))
        rng = random.Random(3)
        assert sample_intermediate_positions(s, 2, rng) == (4, None)

    def test_positions_ascending(self):
        s = gap_sentence(("alpha", "beta", "gamma", "delta"))
        rng = random.Random(9)
        for _ in range(50):
            drawn = sample_intermediate_positions(s, 3, rng)
            real = [p for p in drawn if p is not None]
            assert real == sorted(real)


class TestDropoutPair:
    def test_pair_structure(self):
        s = gap_sentence(("alpha", "beta", "gamma"))
        pair = make_dropout_pair(s, 2, random.Random(2))
        assert pair.source == "dropout"
        assert pair.anchor.sentence_id == pair.partner.sentence_id == "g"
        assert pair.anchor.variant == pair.partner.variant == "sampled"

    def test_degenerate_draw_accepted(self):
        s = gap_sentence(("alpha", "beta"))
        pair = make_dropout_pair(s, 2, random.Random(0))
        assert pair.anchor == pair.partner  # both draws forced to (1, 2)

    def test_non_dropout_identical_refs_rejected(self):
        ref = InstanceRef("x", None, "deterministic")
        with pytest.raises(ValueError):
            PositivePair(anchor=ref, partner=ref, source="same_template")


def two_entity_corpus():
    s1 = Sentence(
        id="s1",
        tokens=("Paul", "runs", "Library"),
        head_span=(0, 0),
        tail_span=(2, 2),
        head_type="PERSON",
        tail_type="ORG",
    )
    s2 = Sentence(
        id="s2",
        tokens=("Mary", "joined", "New", "York", "Times"),
        head_span=(0, 0),
        tail_span=(2, 4),
        head_type="PERSON",
        tail_type="ORG",
    )
    return Corpus(sentences=(s1, s2), entity_types=frozenset({"PERSON", "ORG"}))


class TestReplaceEntities:
    def test_single_alternative_is_forced(self):
        corpus = two_entity_corpus()
        pool = build_entity_pool(corpus)
        replaced = replace_entities(corpus.by_id("s1"), pool, random.Random(0))
        assert replaced.replaced_head == ("Mary",)
        assert replaced.replaced_tail == ("New", "York", "Times")
        assert replaced.parent_id == "s1"
        assert replaced.id == "s1#aug"

    def test_multi_token_replacement_shifts_spans(self):
        corpus = two_entity_corpus()
        pool = build_entity_pool(corpus)
        s1 = corpus.by_id("s1")
        replaced = replace_entities(s1, pool, random.Random(0))
        # Oracle: context tokens outside the spans are unchanged.
        assert replaced.tokens[1] == "runs"
        assert replaced.tokens == ("Mary", "runs", "New", "York", "Times")
        assert replaced.tail_span == (2, 4)
        hs, he = replaced.head_span
        assert replaced.tokens[hs : he + 1] == ("Mary",)

    def test_no_alternative_signals_skip(self):
        s = Sentence(
            id="only",
            tokens=("Paul", "runs", "Library"),
            head_span=(0, 0),
            tail_span=(2, 2),
            head_type="PERSON",
            tail_type="ORG",
        )
        corpus = Corpus(sentences=(s,), entity_types=frozenset({"PERSON", "ORG"}))
        pool = build_entity_pool(corpus)
        assert replace_entities(s, pool, random.Random(0)) is None


@st.composite
def corpora(draw):
    surfaces = {
        "PERSON": [("Ann",), ("Bo", "Lee"), ("Cy",)],
        "ORG": [("Zeta",), ("Kappa", "Corp"), ("Mu",)],
    }
    n = draw(st.integers(min_value=1, max_value=5))
    sentences = []
    for i in range(n):
        head = draw(st.sampled_from(surfaces["PERSON"]))
        tail = draw(st.sampled_from(surfaces["ORG"]))
        gap = tuple(
            draw(st.sampled_from(["likes", "builds", "the", "visits"]))
            for _ in range(draw(st.integers(min_value=1, max_value=3)))
        )
        tokens = head + gap + tail
        sentences.append(
            Sentence(
                id=f"s{i}",
                tokens=tokens,
                head_span=(0, len(head) - 1),
                tail_span=(len(head) + len(gap), len(tokens) - 1),
                head_type="PERSON",
                tail_type="ORG",
            )
        )
    return Corpus(sentences=tuple(sentences), entity_types=frozenset({"PERSON", "ORG"}))


@given(corpora(), st.integers(min_value=0, max_value=10_000))
def test_replacement_preserves_context(corpus, seed):
    pool = build_entity_pool(corpus)
    for s in corpus:
        replaced = replace_entities(s, pool, random.Random(seed))
        if replaced is None:
            continue
        first, second = sorted([s.head_span, s.tail_span])
        rf, rs = sorted([replaced.head_span, replaced.tail_span])
        assert replaced.tokens[: rf[0]] == s.tokens[: first[0]]
        assert (
            replaced.tokens[rf[1] + 1 : rs[0]] == s.tokens[first[1] + 1 : second[0]]
        )
        assert replaced.tokens[rs[1] + 1 :] == s.tokens[second[1] + 1 :]


class TestBuildWithinPairs:
    def test_fixture_yields_two_per_sentence(self, fixture_corpus):
        pool = build_entity_pool(fixture_corpus)
        result = build_within_pairs(fixture_corpus, 2, pool, seed=0)
        assert len(result.pairs) == 80
        sources = Counter(p.source for p in result.pairs)
        assert sources == {"dropout": 40, "entity_aug": 40}

    def test_singleton_types_contribute_one_pair(self):
        s = Sentence(
            id="solo",
            tokens=("Paul", "runs", "Library"),
            head_span=(0, 0),
            tail_span=(2, 2),
            head_type="PERSON",
            tail_type="ORG",
        )
        corpus = Corpus(sentences=(s,), entity_types=frozenset({"PERSON", "ORG"}))
        pool = build_entity_pool(corpus)
        result = build_within_pairs(corpus, 2, pool, seed=0)
        assert len(result.pairs) == 1
        assert result.pairs[0].source == "dropout"

    def test_empty_corpus(self):
        corpus = Corpus(sentences=(), entity_types=frozenset())
        result = build_within_pairs(corpus, 2, build_entity_pool(corpus), seed=0)
        assert result.pairs == ()

    def test_reproducible_from_seed(self, fixture_corpus):
        pool = build_entity_pool(fixture_corpus)
        a = build_within_pairs(fixture_corpus, 2, pool, seed=123)
        b = build_within_pairs(fixture_corpus, 2, pool, seed=123)
        c = build_within_pairs(fixture_corpus, 2, pool, seed=124)
        assert a.pairs == b.pairs
        assert a.pairs != c.pairs

    def test_synthetic_sentences_never_reference_missing_parents(self, fixture_corpus):
        pool = build_entity_pool(fixture_corpus)
        result = build_within_pairs(fixture_corpus, 2, pool, seed=5)
        for syn in result.synthetic.values():
            assert syn.parent_id in fixture_corpus
