"""Synthetic corpus generator for end-to-end harnesses.

Builds a corpus over five latent relations, each realized through three
surface templates. The three templates of a relation share no content
words, so neither a fresh random encoder nor within-sentence pairs alone
can bridge them; every sentence instead ends with a fixed coda that
quotes its sibling templates' phrases, which makes the templates of one
relation mutually entailed under a subsequence-style NLI check. The
cross-sentence pairs mined from that entailment (plus same-template
pairs) are what let training pull a relation's templates together.
Three relations share the PERSON-ORG type signature on purpose, so
entity types alone cannot separate them. Gold labels carry the latent
relation and are used for evaluation only.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Corpus, Sentence
from .seeding import derive_random

PERSONS = [
    ("Alice", "Nakamura"),
    ("Boris", "Ivanov"),
    ("Carla",),
    ("Deepak", "Rao"),
    ("Elena",),
    ("Farid", "Haddad"),
    ("Grace", "Obi"),
    ("Hiro",),
    ("Ingrid", "Larsen"),
    ("Jamal",),
    ("Katya", "Sokolova"),
    ("Liam",),
]

ORGS = [
    ("Veltrona",),
    ("Quorvex", "Labs"),
    ("Bramwell", "Group"),
    ("Nextrava",),
    ("Ostrel", "Systems"),
    ("Picarda",),
    ("Trelliman", "Holdings"),
    ("Yarrowtech",),
    ("Mistralox",),
    ("Kovarte", "Media"),
    ("Zephyrine",),
    ("Aldervane", "Partners"),
]

LOCS = [
    ("Brightport",),
    ("Crestfall",),
    ("Dunmore", "Bay"),
    ("Eastvale",),
    ("Ferrano",),
    ("Galloway", "Heights"),
    ("Harrowgate",),
    ("Ivoryline",),
]


@dataclass(frozen=True)
class RelationSpec:
    name: str
    head_type: str
    tail_type: str
    # (verb, noun) per template; the gap reads "verb the noun <closer>".
    phrases: tuple[tuple[str, str], ...]
    closer: str

    def template(self, which: int) -> tuple[str, ...]:
        verb, noun = self.phrases[which]
        return (verb, "the", noun, self.closer)

    def coda(self, which: int) -> tuple[str, ...]:
        """Fixed sentence ending quoting the two sibling templates."""
        out: list[str] = []
        for j, (verb, noun) in enumerate(self.phrases):
            if j == which:
                continue
            out.extend((",", verb, "the", noun, self.closer, "it"))
        out.append(".")
        return tuple(out)


RELATIONS = (
    RelationSpec(
        name="chief_executive_of",
        head_type="PERSON",
        tail_type="ORG",
        phrases=(("commands", "helm"), ("steers", "bridge"), ("pilots", "wheel")),
        closer="of",
    ),
    RelationSpec(
        name="employee_of",
        head_type="PERSON",
        tail_type="ORG",
        phrases=(("handles", "paperwork"), ("files", "reports"), ("drafts", "memos")),
        closer="of",
    ),
    RelationSpec(
        name="founder_of",
        head_type="PERSON",
        tail_type="ORG",
        phrases=(("launched", "venture"), ("seeded", "startup"), ("bootstrapped", "project")),
        closer="of",
    ),
    RelationSpec(
        name="headquartered_in",
        head_type="ORG",
        tail_type="LOC",
        phrases=(("occupies", "campus"), ("maintains", "offices"), ("operates", "facility")),
        closer="in",
    ),
    RelationSpec(
        name="acquirer_of",
        head_type="ORG",
        tail_type="ORG",
        phrases=(("absorbed", "assets"), ("purchased", "shares"), ("acquired", "holdings")),
        closer="of",
    ),
)

PREFIXES = (
    (),
    ("yesterday", ","),
    ("reportedly", ","),
    ("according", "to", "filings", ","),
    ("last", "spring", ","),
)

ENTITY_POOLS = {"PERSON": PERSONS, "ORG": ORGS, "LOC": LOCS}


def make_synthetic_corpus(n_sentences: int = 300, seed: int = 0) -> Corpus:
    """Balanced corpus: n_sentences round-robin over the five relations."""
    rng = derive_random("synthetic-corpus", seed)
    sentences = []
    for i in range(n_sentences):
        spec = RELATIONS[i % len(RELATIONS)]
        which = rng.randrange(len(spec.phrases))
        template = spec.template(which)
        head = ENTITY_POOLS[spec.head_type][
            rng.randrange(len(ENTITY_POOLS[spec.head_type]))
        ]
        while True:
            tail = ENTITY_POOLS[spec.tail_type][
                rng.randrange(len(ENTITY_POOLS[spec.tail_type]))
            ]
            if spec.head_type != spec.tail_type or tail != head:
                break
        prefix = PREFIXES[rng.randrange(len(PREFIXES))]
        tokens = prefix + head + template + tail + spec.coda(which)
        hs = len(prefix)
        he = hs + len(head) - 1
        ts = he + 1 + len(template)
        te = ts + len(tail) - 1
        sentences.append(
            Sentence(
                id=f"syn{i:04d}",
                tokens=tuple(tokens),
                head_span=(hs, he),
                tail_span=(ts, te),
                head_type=spec.head_type,
                tail_type=spec.tail_type,
                gold_relation=spec.name,
            )
        )
    types = frozenset(s.head_type for s in sentences) | frozenset(
        s.tail_type for s in sentences
    )
    return Corpus(sentences=tuple(sentences), entity_types=types)


def write_corpus_jsonl(corpus: Corpus, path, include_gold: bool = True) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for s in corpus:
            obj = {
                "id": s.id,
                "tokens": list(s.tokens),
                "head": {"start": s.head_span[0], "end": s.head_span[1], "type": s.head_type},
                "tail": {"start": s.tail_span[0], "end": s.tail_span[1], "type": s.tail_type},
                "gold_relation": s.gold_relation if include_gold else None,
            }
            fh.write(json.dumps(obj, sort_keys=True))
            fh.write("\n")
