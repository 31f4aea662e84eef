"""Corpus data model: sentences with annotated entity pairs.

Input is JSONL, one object per line:

    {"id": str, "tokens": [str],
     "head": {"start": int, "end": int, "type": str},
     "tail": {"start": int, "end": int, "type": str},
     "gold_relation": str|null}

Spans are inclusive token indices. Entity types are uppercased verbatim
at load time. ``gold_relation`` is carried for evaluation only and must
never influence mining or training.

Everything here is immutable after load and safe for concurrent readers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .errors import CorpusError


@dataclass(frozen=True)
class Sentence:
    """One tokenized sentence with a marked head/tail entity pair."""

    id: str
    tokens: tuple[str, ...]
    head_span: tuple[int, int]
    tail_span: tuple[int, int]
    head_type: str
    tail_type: str
    gold_relation: Optional[str] = None

    def __post_init__(self) -> None:
        n = len(self.tokens)
        if n == 0:
            raise CorpusError(f"sentence {self.id!r}: empty token list")
        for name, (lo, hi) in (("head", self.head_span), ("tail", self.tail_span)):
            if not (0 <= lo <= hi < n):
                raise CorpusError(
                    f"sentence {self.id!r}: {name} span out of range "
                    f"({lo}, {hi}) for {n} tokens"
                )
        hs, he = self.head_span
        ts, te = self.tail_span
        if hs <= te and ts <= he:
            raise CorpusError(f"sentence {self.id!r}: head and tail spans overlap")
        if not self.head_type or not self.tail_type:
            raise CorpusError(f"sentence {self.id!r}: empty entity type")

    @property
    def head_surface(self) -> tuple[str, ...]:
        hs, he = self.head_span
        return self.tokens[hs : he + 1]

    @property
    def tail_surface(self) -> tuple[str, ...]:
        ts, te = self.tail_span
        return self.tokens[ts : te + 1]

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class SyntheticSentence(Sentence):
    """A sentence derived from another by same-type entity replacement.

    Context tokens outside the two entity spans are byte-identical to the
    parent's; only the entity surfaces (and hence spans) differ. Synthetic
    sentences never enter clustering or evaluation.
    """

    parent_id: str = field(kw_only=True)
    replaced_head: tuple[str, ...] = field(kw_only=True)
    replaced_tail: tuple[str, ...] = field(kw_only=True)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    entity_types: frozenset[str]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for s in self.sentences:
            if s.id in seen:
                raise CorpusError(f"duplicate sentence id {s.id!r}")
            seen.add(s.id)
            if s.head_type not in self.entity_types or s.tail_type not in self.entity_types:
                raise CorpusError(f"sentence {s.id!r}: type not in corpus entity_types")

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def by_id(self, sentence_id: str) -> Sentence:
        return self._index[sentence_id]

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self._index

    @property
    def _index(self) -> dict[str, Sentence]:
        cached = getattr(self, "_index_cache", None)
        if cached is None:
            cached = {s.id: s for s in self.sentences}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sentences)


@dataclass(frozen=True)
class TaggedSequence:
    """A sentence with typed entity-marker tokens inserted.

    ``marker_positions`` holds the indices of, in order, the head-open,
    head-close, tail-open, and tail-close markers. ``orig_to_tagged``
    maps each original token index to its index in ``tokens``. Removing
    the four marker positions recovers the original token sequence.
    """

    tokens: tuple[str, ...]
    marker_positions: tuple[int, int, int, int]
    origin: str
    orig_to_tagged: tuple[int, ...]

    @property
    def head_open(self) -> int:
        return self.marker_positions[0]

    @property
    def tail_open(self) -> int:
        return self.marker_positions[2]


def _parse_span(obj: dict, key: str, sentence_id: str) -> tuple[int, int, str]:
    try:
        ent = obj[key]
        return int(ent["start"]), int(ent["end"]), str(ent["type"]).upper()
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"sentence {sentence_id!r}: bad {key} entry: {exc}") from exc


def parse_sentence(obj: dict) -> Sentence:
    sid = str(obj.get("id", ""))
    if not sid:
        raise CorpusError("sentence object missing 'id'")
    tokens = obj.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise CorpusError(f"sentence {sid!r}: 'tokens' must be a list of strings")
    hs, he, htype = _parse_span(obj, "head", sid)
    ts, te, ttype = _parse_span(obj, "tail", sid)
    gold = obj.get("gold_relation")
    if gold is not None:
        gold = str(gold)
    return Sentence(
        id=sid,
        tokens=tuple(tokens),
        head_span=(hs, he),
        tail_span=(ts, te),
        head_type=htype,
        tail_type=ttype,
        gold_relation=gold,
    )


def load_corpus(path) -> Corpus:
    """Read a JSONL corpus file, validating every sentence.

    Raises CorpusError with the 1-based line number for malformed JSON and
    with the sentence id for span or type violations. Line order is
    preserved.
    """
    sentences: list[Sentence] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed JSON: {exc}") from exc
            sentences.append(parse_sentence(obj))
    types = frozenset(s.head_type for s in sentences) | frozenset(
        s.tail_type for s in sentences
    )
    return Corpus(sentences=tuple(sentences), entity_types=types)


def marker_tokens(head_type: str, tail_type: str) -> tuple[str, str, str, str]:
    """Literal marker strings for an entity-type pair."""
    return (
        f"<e1:{head_type}>",
        f"</e1:{head_type}>",
        f"<e2:{tail_type}>",
        f"</e2:{tail_type}>",
    )


def tag_entities(s: Sentence) -> TaggedSequence:
    """Insert typed open/close markers around the head and tail spans.

    Markers for whichever span starts earlier are emitted first during a
    single left-to-right walk, so indices stay consistent regardless of
    whether the tail precedes the head.
    """
    e1_open, e1_close, e2_open, e2_close = marker_tokens(s.head_type, s.tail_type)
    hs, he = s.head_span
    ts, te = s.tail_span
    out: list[str] = []
    positions = {}
    orig_to_tagged: list[int] = []
    for i, tok in enumerate(s.tokens):
        if i == hs:
            positions["e1_open"] = len(out)
            out.append(e1_open)
        if i == ts:
            positions["e2_open"] = len(out)
            out.append(e2_open)
        orig_to_tagged.append(len(out))
        out.append(tok)
        if i == he:
            positions["e1_close"] = len(out)
            out.append(e1_close)
        if i == te:
            positions["e2_close"] = len(out)
            out.append(e2_close)
    return TaggedSequence(
        tokens=tuple(out),
        marker_positions=(
            positions["e1_open"],
            positions["e1_close"],
            positions["e2_open"],
            positions["e2_close"],
        ),
        origin=s.id,
        orig_to_tagged=tuple(orig_to_tagged),
    )


def strip_markers(t: TaggedSequence) -> tuple[str, ...]:
    """Remove the four marker tokens, recovering the original sequence."""
    drop = set(t.marker_positions)
    return tuple(tok for i, tok in enumerate(t.tokens) if i not in drop)


@dataclass(frozen=True)
class EntityPool:
    """Entity surfaces grouped by type, for same-type replacement.

    Each bucket lists (surface tokens, id of the first sentence the
    surface was seen in); surfaces are deduplicated per type, and a
    surface string may legitimately appear under several types.
    """

    buckets: dict[str, tuple[tuple[tuple[str, ...], str], ...]]

    def alternatives(
        self, entity_type: str, exclude: tuple[str, ...]
    ) -> list[tuple[str, ...]]:
        """Pooled surfaces of the given type with a different surface form."""
        return [surf for surf, _ in self.buckets.get(entity_type, ()) if surf != exclude]


def build_entity_pool(c: Corpus) -> EntityPool:
    seen: dict[str, dict[tuple[str, ...], str]] = {}
    for s in c:
        for surface, etype in (
            (s.head_surface, s.head_type),
            (s.tail_surface, s.tail_type),
        ):
            bucket = seen.setdefault(etype, {})
            bucket.setdefault(surface, s.id)
    return EntityPool(
        buckets={
            etype: tuple((surf, sid) for surf, sid in bucket.items())
            for etype, bucket in seen.items()
        }
    )
