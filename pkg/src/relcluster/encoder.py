"""Relation representations.

The reference encoder is a trainable embedding table with a mean-pooling
context window: the vector for position i is the mean of the embedding
rows for positions i-w..i+w (clipped at the sequence ends). It stands in
for a pretrained contextual encoder at desk scale while staying
hand-differentiable; externally computed token vectors can be swapped in
through ``load_external_encodings`` and are then frozen.

A relation vector for a (sentence, positions) instance is the
concatenation of the head-open and tail-open marker encodings with the
encodings of m intermediate-word positions, L2-normalized. Its length is
always (2+m)*d; missing position slots are zero-padded. A full
variable-length concatenation of the entire sequence encoding is
deliberately not provided; the fixed-length vector is the unit that is
trained and clustered.

Encoding is pure given a parameter snapshot, so instances of a batch may
be encoded concurrently; only the training loop mutates parameters, and
only between batches.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import Corpus, Sentence, TaggedSequence, marker_tokens, tag_entities
from .errors import ConfigurationError, SchemaError
from .stopwords import is_stop_word

logger = logging.getLogger(__name__)

UNK_TOKEN = "<unk>"

VARIANT_DETERMINISTIC = "deterministic"
VARIANT_SAMPLED = "sampled"
VARIANT_SYNTHETIC = "synthetic"
VARIANTS = (VARIANT_DETERMINISTIC, VARIANT_SAMPLED, VARIANT_SYNTHETIC)

# Positions inside an InstanceRef: a tuple of original-token indices with
# None marking zero-pad slots, or None meaning "resolve deterministically
# for the current m".
Positions = Optional[tuple[Optional[int], ...]]


@dataclass(frozen=True)
class InstanceRef:
    """Reference to one encodable instance: a sentence plus position spec."""

    sentence_id: str
    positions: Positions
    variant: str

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class EncoderParams:
    """Trainable embedding table plus vocabulary and pooling window."""

    vocab: dict[str, int]
    table: np.ndarray
    context_window: int

    def __post_init__(self) -> None:
        if self.table.ndim != 2 or self.table.shape[0] != len(self.vocab):
            raise ConfigurationError("embedding table shape does not match vocab")
        if self.dim <= 0:
            raise ConfigurationError("embedding width must be positive")
        if self.context_window < 0:
            raise ConfigurationError("context window must be >= 0")
        if not np.all(np.isfinite(self.table)):
            raise ConfigurationError("embedding table contains non-finite values")

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def index(self, token: str) -> int:
        return self.vocab.get(token, self.vocab[UNK_TOKEN])

    def copy(self) -> "EncoderParams":
        return EncoderParams(dict(self.vocab), self.table.copy(), self.context_window)


def init_params(
    corpus: Corpus, dim: int, context_window: int, seed: int
) -> EncoderParams:
    """Fresh parameters covering every corpus token and marker token."""
    tokens = sorted({tok for s in corpus for tok in s.tokens})
    markers: list[str] = []
    for etype in sorted(corpus.entity_types):
        markers.extend(marker_tokens(etype, etype))
    vocab: dict[str, int] = {UNK_TOKEN: 0}
    for tok in markers + tokens:
        if tok not in vocab:
            vocab[tok] = len(vocab)
    rng = np.random.default_rng(seed)
    table = rng.standard_normal((len(vocab), dim)) / np.sqrt(dim)
    return EncoderParams(vocab=vocab, table=table, context_window=context_window)


@dataclass(frozen=True)
class TokenEncodings:
    """Per-token vectors aligned to a tagged sequence."""

    vectors: np.ndarray
    origin: str


@dataclass(frozen=True)
class RelationVector:
    """Fixed-length relation representation of one instance.

    ``values`` is unit-norm unless the assembled vector was all zeros (in
    which case it is returned as zeros and rejected later by training).
    ``norm`` is the pre-normalization magnitude, so ``values * norm``
    recovers the raw concatenation.
    """

    values: np.ndarray
    origin: str
    variant: str
    norm: float


def _window_bounds(n: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(n)
    lo = np.maximum(idx - w, 0)
    hi = np.minimum(idx + w, n - 1)
    return lo, hi


def encode_tokens(t: TaggedSequence, p: EncoderParams) -> TokenEncodings:
    """Mean-pooled embeddings over a +-w window, linear in the table."""
    idx = np.array([p.index(tok) for tok in t.tokens], dtype=np.intp)
    rows = p.table[idx]
    n = len(idx)
    if p.context_window == 0:
        vectors = rows.copy()
    else:
        lo, hi = _window_bounds(n, p.context_window)
        csum = np.vstack([np.zeros((1, p.dim)), np.cumsum(rows, axis=0)])
        vectors = (csum[hi + 1] - csum[lo]) / (hi - lo + 1)[:, None]
    return TokenEncodings(vectors=vectors, origin=t.origin)


def relation_vector(
    enc: TokenEncodings,
    tagged: TaggedSequence,
    positions: Sequence[Optional[int]],
    variant: str,
) -> RelationVector:
    """Assemble [head-marker | tail-marker | word slots], L2-normalized.

    ``positions`` are indices into the tagged sequence (None = zero-pad
    slot); real positions are sorted ascending before concatenation so
    one position set maps to exactly one vector.
    """
    n, d = enc.vectors.shape
    real = sorted(p for p in positions if p is not None)
    if len(set(real)) != len(real):
        raise ValueError("duplicate sampled positions")
    for pos in real:
        if not (0 <= pos < n):
            raise IndexError(f"position {pos} out of range for {n} tagged tokens")
    slots = [tagged.head_open, tagged.tail_open]
    slots.extend(real)
    pad = len(positions) - len(real)
    parts = [enc.vectors[s] for s in slots] + [np.zeros(d)] * pad
    raw = np.concatenate(parts)
    norm = float(np.linalg.norm(raw))
    values = raw / norm if norm > 0.0 else raw
    return RelationVector(values=values, origin=enc.origin, variant=variant, norm=norm)


def intermediate_indices(s: Sentence) -> list[int]:
    """Original-token indices strictly between the two entity spans."""
    first, second = sorted([s.head_span, s.tail_span])
    return list(range(first[1] + 1, second[0]))


def outside_indices(s: Sentence) -> list[int]:
    """Original-token indices outside both spans and the gap between them."""
    first, second = sorted([s.head_span, s.tail_span])
    return list(range(0, first[0])) + list(range(second[1] + 1, len(s.tokens)))


def deterministic_positions(s: Sentence, m: int) -> tuple[Optional[int], ...]:
    """The m non-stop words nearest the head entity, preferring the gap.

    Selection order: non-stop tokens strictly between the spans, nearest
    the head span first; then non-stop tokens from the rest of the
    sentence, again nearest the head; remaining slots are zero-padded.
    Chosen positions are reported in ascending order with pads trailing.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    hs, he = s.head_span

    def head_distance(i: int) -> int:
        if i < hs:
            return hs - i
        if i > he:
            return i - he
        return 0

    chosen: list[int] = []
    for pool in (intermediate_indices(s), outside_indices(s)):
        candidates = [i for i in pool if not is_stop_word(s.tokens[i])]
        candidates.sort(key=lambda i: (head_distance(i), i))
        for i in candidates:
            if len(chosen) == m:
                break
            chosen.append(i)
        if len(chosen) == m:
            break
    chosen.sort()
    return tuple(chosen) + (None,) * (m - len(chosen))


def load_external_encodings(path, corpus: Corpus) -> dict[str, TokenEncodings]:
    """Read frozen per-token vectors dumped by an external encoder.

    File format: JSONL with a header line {"dim": int} followed by
    {"id": str, "vectors": [[float; dim]]} lines, vectors aligned to the
    tagged token sequence of each sentence.
    """
    out: dict[str, TokenEncodings] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            dim = int(header["dim"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: missing or malformed dim header") from exc
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                sid = obj["id"]
                vectors = np.asarray(obj["vectors"], dtype=float)
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise SchemaError(f"{path}: line {lineno}: bad encoding record") from exc
            if sid not in corpus:
                raise SchemaError(f"{path}: unknown sentence id {sid!r}")
            if vectors.ndim != 2 or vectors.shape[1] != dim:
                raise SchemaError(f"{path}: sentence {sid!r}: expected width {dim}")
            expected_rows = len(tag_entities(corpus.by_id(sid)).tokens)
            if vectors.shape[0] != expected_rows:
                raise SchemaError(
                    f"{path}: sentence {sid!r}: {vectors.shape[0]} rows, "
                    f"expected {expected_rows} tagged tokens"
                )
            if not np.all(np.isfinite(vectors)):
                raise SchemaError(f"{path}: sentence {sid!r}: non-finite vector")
            out[sid] = TokenEncodings(vectors=vectors, origin=sid)
    return out


BackpropFn = Callable[[np.ndarray, np.ndarray], None]


class Vectorizer:
    """Assembles relation vectors for instance references.

    Works in one of two modes: trainable (an EncoderParams table, with
    gradients available) or frozen (external TokenEncodings, lookups
    only). Tagged sequences are cached per sentence; synthetic sentences
    can be registered and replaced between epochs.
    """

    def __init__(
        self,
        corpus: Corpus,
        m: int,
        params: Optional[EncoderParams] = None,
        external: Optional[dict[str, TokenEncodings]] = None,
    ) -> None:
        if (params is None) == (external is None):
            raise ConfigurationError("provide exactly one of params or external")
        self.corpus = corpus
        self.m = m
        self.params = params
        self.external = external
        self._extra: dict[str, Sentence] = {}
        self._tagged: dict[str, TaggedSequence] = {}

    @property
    def trainable(self) -> bool:
        return self.params is not None

    def set_synthetic(self, sentences: dict[str, Sentence]) -> None:
        """Register the current epoch's synthetic sentences."""
        self._extra = dict(sentences)
        self._tagged = {k: v for k, v in self._tagged.items() if k not in sentences}

    def sentence(self, sid: str) -> Sentence:
        if sid in self._extra:
            return self._extra[sid]
        return self.corpus.by_id(sid)

    def tagged(self, sid: str) -> TaggedSequence:
        cached = self._tagged.get(sid)
        if cached is None:
            cached = tag_entities(self.sentence(sid))
            self._tagged[sid] = cached
        return cached

    def deterministic_ref(self, sid: str, variant: str = VARIANT_DETERMINISTIC) -> InstanceRef:
        return InstanceRef(sentence_id=sid, positions=None, variant=variant)

    def _resolve(self, ref: InstanceRef) -> tuple[TaggedSequence, list[Optional[int]]]:
        tagged = self.tagged(ref.sentence_id)
        positions = ref.positions
        if positions is None:
            positions = deterministic_positions(self.sentence(ref.sentence_id), self.m)
        tagged_positions = [
            None if p is None else tagged.orig_to_tagged[p] for p in positions
        ]
        return tagged, tagged_positions

    def relation_vec(self, ref: InstanceRef) -> RelationVector:
        tagged, positions = self._resolve(ref)
        if self.params is not None:
            enc = encode_tokens(tagged, self.params)
        else:
            assert self.external is not None
            if ref.sentence_id not in self.external:
                raise SchemaError(f"no external encodings for {ref.sentence_id!r}")
            enc = self.external[ref.sentence_id]
        return relation_vector(enc, tagged, positions, ref.variant)

    def vector(self, ref: InstanceRef) -> np.ndarray:
        return self.relation_vec(ref).values

    def vector_with_grad(self, ref: InstanceRef) -> tuple[np.ndarray, BackpropFn]:
        """Unit vector plus a closure accumulating d(loss)/d(table).

        The closure takes (d_loss/d_vector, gradient table) and adds this
        instance's contribution in place, chaining through normalization,
        concatenation, and window mean-pooling.
        """
        if self.params is None:
            raise ConfigurationError("gradients unavailable for frozen encodings")
        params = self.params
        tagged, positions = self._resolve(ref)
        enc = encode_tokens(tagged, params)
        rel = relation_vector(enc, tagged, positions, ref.variant)
        d = params.dim
        w = params.context_window
        idx = np.array([params.index(tok) for tok in tagged.tokens], dtype=np.intp)
        slots = [tagged.head_open, tagged.tail_open] + sorted(
            p for p in positions if p is not None
        )
        h = rel.values
        norm = rel.norm

        def backprop(d_h: np.ndarray, grad_table: np.ndarray) -> None:
            if norm == 0.0:
                return
            d_raw = (d_h - h * float(h @ d_h)) / norm
            n = len(idx)
            for slot_i, tok_pos in enumerate(slots):
                g = d_raw[slot_i * d : (slot_i + 1) * d]
                lo = max(tok_pos - w, 0)
                hi = min(tok_pos + w, n - 1)
                share = g / (hi - lo + 1)
                np.add.at(grad_table, idx[lo : hi + 1], share)

        return h, backprop
