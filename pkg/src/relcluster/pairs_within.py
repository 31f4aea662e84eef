"""Within-sentence positive pairs.

Two augmentations per sentence: (1) a dropout-style pair made by drawing
the intermediate-word positions twice, so the same sentence yields two
relation vectors differing only in their word slots, and (2) an
entity-replacement pair joining the sentence with a synthetic copy whose
head and tail entities are swapped for same-type pool entities, leaving
the relational context untouched.

Pair construction derives a per-sentence seed from (global seed,
sentence id), so the mined set is independent of iteration order and
parallel schedules, and is fully reproducible from the corpus bytes and
the seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional

from .corpus import Corpus, EntityPool, Sentence, SyntheticSentence
from .encoder import (
    VARIANT_DETERMINISTIC,
    VARIANT_SAMPLED,
    VARIANT_SYNTHETIC,
    InstanceRef,
    intermediate_indices,
    outside_indices,
)
from .seeding import derive_random
from .stopwords import is_stop_word

logger = logging.getLogger(__name__)

SOURCE_DROPOUT = "dropout"
SOURCE_ENTITY_AUG = "entity_aug"
SOURCE_SAME_TEMPLATE = "same_template"
SOURCE_ENTAILED_TEMPLATE = "entailed_template"
SOURCE_REWRITE_DERIVED = "rewrite_derived"
PAIR_SOURCES = (
    SOURCE_DROPOUT,
    SOURCE_ENTITY_AUG,
    SOURCE_SAME_TEMPLATE,
    SOURCE_ENTAILED_TEMPLATE,
    SOURCE_REWRITE_DERIVED,
)

SYNTHETIC_SUFFIX = "#aug"


@dataclass(frozen=True)
class PositivePair:
    anchor: InstanceRef
    partner: InstanceRef
    source: str

    def __post_init__(self) -> None:
        if self.source not in PAIR_SOURCES:
            raise ValueError(f"unknown pair source {self.source!r}")
        if self.anchor == self.partner and self.source != SOURCE_DROPOUT:
            # Identical dropout draws are an accepted degenerate case; any
            # other coincident pair indicates a mining bug.
            raise ValueError("anchor and partner reference the same instance")


def sample_intermediate_positions(
    s: Sentence, m: int, rng
) -> tuple[Optional[int], ...]:
    """Draw m distinct non-stop positions, preferring the entity gap.

    Uniform draw without replacement from the non-stop tokens strictly
    between the spans; any shortfall is drawn uniformly from non-stop
    tokens elsewhere in the sentence; remaining slots are zero-pads.
    Positions are returned in ascending order with pads trailing.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    chosen: list[int] = []
    for pool in (intermediate_indices(s), outside_indices(s)):
        candidates = [i for i in pool if not is_stop_word(s.tokens[i])]
        need = m - len(chosen)
        if need <= 0:
            break
        if len(candidates) <= need:
            chosen.extend(candidates)
        else:
            chosen.extend(rng.sample(candidates, need))
    chosen.sort()
    return tuple(chosen) + (None,) * (m - len(chosen))


def make_dropout_pair(s: Sentence, m: int, rng) -> PositivePair:
    """Two independent position draws over one sentence form a pair."""
    first = sample_intermediate_positions(s, m, rng)
    second = sample_intermediate_positions(s, m, rng)
    return PositivePair(
        anchor=InstanceRef(s.id, first, VARIANT_SAMPLED),
        partner=InstanceRef(s.id, second, VARIANT_SAMPLED),
        source=SOURCE_DROPOUT,
    )


def replace_entities(
    s: Sentence, pool: EntityPool, rng
) -> Optional[SyntheticSentence]:
    """Swap head and tail for same-type pool entities with new surfaces.

    Head and tail are drawn independently and must differ from the
    original surface forms. Returns None when either type bucket offers
    no alternative surface; the caller then skips the entity_aug pair.
    """
    head_alts = pool.alternatives(s.head_type, s.head_surface)
    tail_alts = pool.alternatives(s.tail_type, s.tail_surface)
    if not head_alts or not tail_alts:
        return None
    new_head = head_alts[rng.randrange(len(head_alts))]
    new_tail = tail_alts[rng.randrange(len(tail_alts))]

    first_span, second_span = sorted([s.head_span, s.tail_span])
    head_first = first_span == s.head_span
    first_surface = new_head if head_first else new_tail
    second_surface = new_tail if head_first else new_head

    tokens = (
        s.tokens[: first_span[0]]
        + first_surface
        + s.tokens[first_span[1] + 1 : second_span[0]]
        + second_surface
        + s.tokens[second_span[1] + 1 :]
    )
    new_first = (first_span[0], first_span[0] + len(first_surface) - 1)
    shift = len(first_surface) - (first_span[1] - first_span[0] + 1)
    second_start = second_span[0] + shift
    new_second = (second_start, second_start + len(second_surface) - 1)
    head_span, tail_span = (
        (new_first, new_second) if head_first else (new_second, new_first)
    )
    return SyntheticSentence(
        id=s.id + SYNTHETIC_SUFFIX,
        tokens=tokens,
        head_span=head_span,
        tail_span=tail_span,
        head_type=s.head_type,
        tail_type=s.tail_type,
        gold_relation=None,
        parent_id=s.id,
        replaced_head=new_head,
        replaced_tail=new_tail,
    )


@dataclass(frozen=True)
class WithinPairs:
    """The mined within-sentence pair set plus its synthetic sentences."""

    pairs: tuple[PositivePair, ...]
    synthetic: dict[str, SyntheticSentence]


def build_within_pairs(
    corpus: Corpus,
    m: int,
    pool: EntityPool,
    seed: int,
    include_entity_aug: bool = True,
) -> WithinPairs:
    """One dropout pair per sentence plus, when replacement succeeds, one
    entity-replacement pair joining the original and synthetic instances
    at their deterministic positions. |pairs| <= 2N."""
    pairs: list[PositivePair] = []
    synthetic: dict[str, SyntheticSentence] = {}
    for s in corpus:
        rng = derive_random(seed, "within", s.id)
        pairs.append(make_dropout_pair(s, m, rng))
        if not include_entity_aug:
            continue
        replaced = replace_entities(s, pool, rng)
        if replaced is None:
            logger.debug("no same-type alternative for %s, skipping entity_aug", s.id)
            continue
        synthetic[replaced.id] = replaced
        pairs.append(
            PositivePair(
                anchor=InstanceRef(s.id, None, VARIANT_DETERMINISTIC),
                partner=InstanceRef(replaced.id, None, VARIANT_SYNTHETIC),
                source=SOURCE_ENTITY_AUG,
            )
        )
    return WithinPairs(pairs=tuple(pairs), synthetic=synthetic)


def ref_to_json(ref: InstanceRef) -> dict:
    return {
        "id": ref.sentence_id,
        "positions": None if ref.positions is None else list(ref.positions),
        "variant": ref.variant,
    }


def pair_to_json(pair: PositivePair) -> dict:
    return {
        "anchor": ref_to_json(pair.anchor),
        "partner": ref_to_json(pair.partner),
        "source": pair.source,
    }


def dump_pairs(pairs, path) -> None:
    """Audit dump; training regenerates pairs from the seed instead."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair_to_json(pair), sort_keys=True))
            fh.write("\n")
