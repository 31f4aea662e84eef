"""Cross-sentence positive pairs.

Pipeline: extract one (subject, predicate, object) triple per sentence,
group sentences into relation templates by predicate string, keep
templates whose frequency exceeds the threshold t, pair all sentences
within a template, pair sentences across mutually entailed templates
(an NLI adapter decides entailment at premise ratio r), and optionally
mine additional pairs by re-running the whole procedure over externally
rewritten sentences, mapping matches back to the original sentence ids
and sampling a fraction f of the new pairs.

Triple extraction and premise construction are pure per sentence.
Adapter calls are keyed by (premise, hypothesis) and order-independent,
so they may be issued concurrently; the offline-file mode needs no
synchronization at all.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .corpus import Corpus, Sentence, parse_sentence
from .encoder import VARIANT_DETERMINISTIC, InstanceRef
from .errors import MiningError, SchemaError
from .pairs_within import (
    SOURCE_ENTAILED_TEMPLATE,
    SOURCE_REWRITE_DERIVED,
    SOURCE_SAME_TEMPLATE,
    PositivePair,
)
from .seeding import derive_random
from .stopwords import is_stop_word

logger = logging.getLogger(__name__)

HEAD_PLACEHOLDER = "[h]"
TAIL_PLACEHOLDER = "[t]"
MAX_BUILTIN_PREDICATE_TOKENS = 8


@dataclass(frozen=True)
class Triple:
    sentence_id: str
    subject: tuple[str, ...]
    predicate: tuple[str, ...]
    object: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.predicate:
            raise ValueError("empty predicate")


def extract_triples_builtin(s: Sentence) -> Optional[Triple]:
    """Predicate = the token gap between the entities, when usable.

    The gap (between the earlier span's end and the later span's start)
    is lowercased and accepted iff it contains at least one non-stop
    token and is at most MAX_BUILTIN_PREDICATE_TOKENS long. Subject is
    always the head surface and object the tail surface, regardless of
    their order in the sentence.
    """
    first, second = sorted([s.head_span, s.tail_span])
    gap = [tok.lower() for tok in s.tokens[first[1] + 1 : second[0]]]
    if not gap or len(gap) > MAX_BUILTIN_PREDICATE_TOKENS:
        return None
    if all(is_stop_word(tok) for tok in gap):
        return None
    return Triple(
        sentence_id=s.id,
        subject=s.head_surface,
        predicate=tuple(gap),
        object=s.tail_surface,
    )


def extract_all_builtin(corpus: Corpus) -> dict[str, Triple]:
    out = {}
    for s in corpus:
        triple = extract_triples_builtin(s)
        if triple is not None:
            out[s.id] = triple
    return out


def load_external_triples(path, corpus: Corpus) -> dict[str, Triple]:
    """Validated triples from an external extractor.

    Schema: JSONL {"id": str, "subject": [str], "predicate": [str],
    "object": [str]}. A triple is kept only if its subject and object
    exactly match the sentence's head and tail surfaces and the predicate
    has a non-stop token; mismatches are discarded with a diagnostic.
    Among multiple valid triples for one sentence the shortest predicate
    wins. External predicates are not length-capped.
    """
    best: dict[str, Triple] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                triple = Triple(
                    sentence_id=str(obj["id"]),
                    subject=tuple(obj["subject"]),
                    predicate=tuple(str(t).lower() for t in obj["predicate"]),
                    object=tuple(obj["object"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: line {lineno}: bad triple record") from exc
            sid = triple.sentence_id
            if sid not in corpus:
                logger.warning("triple line %d: unknown sentence %r, discarded", lineno, sid)
                continue
            s = corpus.by_id(sid)
            if triple.subject != s.head_surface or triple.object != s.tail_surface:
                logger.warning(
                    "triple line %d: subject/object do not match entities of %r, discarded",
                    lineno,
                    sid,
                )
                continue
            if all(is_stop_word(tok) for tok in triple.predicate):
                logger.warning("triple line %d: all-stop predicate for %r, discarded", lineno, sid)
                continue
            current = best.get(sid)
            if current is None or len(triple.predicate) < len(current.predicate):
                best[sid] = triple
    return best


@dataclass(frozen=True)
class TemplateTable:
    """Predicate string -> covered sentence ids, threshold applied.

    A template is retained iff its frequency is strictly greater than the
    threshold. Each sentence id appears under at most one template
    because mining keeps one triple per sentence.
    """

    templates: dict[str, tuple[str, ...]]
    threshold: int

    def covered_ids(self) -> set[str]:
        return {sid for ids in self.templates.values() for sid in ids}


def template_key(predicate: Iterable[str]) -> str:
    return " ".join(predicate).lower()


def build_template_table(triples: dict[str, Triple], t: int) -> TemplateTable:
    if t < 1:
        raise ValueError("threshold t must be >= 1")
    groups: dict[str, list[str]] = {}
    for sid, triple in triples.items():
        groups.setdefault(template_key(triple.predicate), []).append(sid)
    retained = {
        key: tuple(ids) for key, ids in groups.items() if len(ids) > t
    }
    return TemplateTable(templates=retained, threshold=t)


def same_template_pairs(tbl: TemplateTable) -> list[PositivePair]:
    """All unordered sentence pairs within each retained template."""
    pairs: list[PositivePair] = []
    for ids in tbl.templates.values():
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                pairs.append(
                    PositivePair(
                        anchor=InstanceRef(ids[i], None, VARIANT_DETERMINISTIC),
                        partner=InstanceRef(ids[j], None, VARIANT_DETERMINISTIC),
                        source=SOURCE_SAME_TEMPLATE,
                    )
                )
    return pairs


def placeholder_tokens(s: Sentence) -> list[str]:
    """Sentence tokens with each entity span collapsed to a placeholder."""
    out: list[str] = []
    i = 0
    n = len(s.tokens)
    while i < n:
        if i == s.head_span[0]:
            out.append(HEAD_PLACEHOLDER)
            i = s.head_span[1] + 1
        elif i == s.tail_span[0]:
            out.append(TAIL_PLACEHOLDER)
            i = s.tail_span[1] + 1
        else:
            out.append(s.tokens[i])
            i += 1
    return out


def premise_set(tp: str, tbl: TemplateTable, sentences: dict[str, Sentence]) -> list[str]:
    """One premise string per covered sentence, entities anonymized."""
    if tp not in tbl.templates:
        raise KeyError(f"template {tp!r} not in table")
    return [
        " ".join(placeholder_tokens(sentences[sid])) for sid in tbl.templates[tp]
    ]


def hypothesis(tp: str) -> str:
    return f"{HEAD_PLACEHOLDER} {tp} {TAIL_PLACEHOLDER}"


class LexicalStubNli:
    """Deterministic offline stand-in for an NLI model.

    A premise entails a hypothesis iff the hypothesis predicate tokens
    (the hypothesis minus its placeholder frame) occur as a subsequence
    of the premise tokens. Exists so the full pipeline runs in CI with
    zero model dependencies.
    """

    mode = "lexical_stub"

    def scores(self, premise: str, hypothesis_text: str) -> tuple[float, float, float]:
        hyp_tokens = hypothesis_text.split()
        if hyp_tokens and hyp_tokens[0] == HEAD_PLACEHOLDER:
            hyp_tokens = hyp_tokens[1:]
        if hyp_tokens and hyp_tokens[-1] == TAIL_PLACEHOLDER:
            hyp_tokens = hyp_tokens[:-1]
        premise_tokens = iter(premise.split())
        entailed = all(tok in premise_tokens for tok in hyp_tokens)
        if entailed:
            return (0.85, 0.10, 0.05)
        return (0.10, 0.60, 0.30)


class OfflineNliScores:
    """NLI verdicts preloaded from a scores file.

    Schema: JSONL {"premise": str, "hypothesis": str, "p_entail": float,
    "p_neutral": float, "p_contra": float}.
    """

    mode = "offline_file"

    def __init__(self, path) -> None:
        self.path = str(path)
        self._scores: dict[tuple[str, str], tuple[float, float, float]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key = (str(obj["premise"]), str(obj["hypothesis"]))
                    probs = (
                        float(obj["p_entail"]),
                        float(obj["p_neutral"]),
                        float(obj["p_contra"]),
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise SchemaError(f"{path}: line {lineno}: bad NLI record") from exc
                if abs(sum(probs) - 1.0) > 1e-6:
                    raise SchemaError(
                        f"{path}: line {lineno}: probabilities sum to {sum(probs)}"
                    )
                self._scores[key] = probs

    def scores(self, premise: str, hypothesis_text: str) -> tuple[float, float, float]:
        try:
            return self._scores[(premise, hypothesis_text)]
        except KeyError:
            raise MiningError(
                f"no offline NLI score for premise {premise!r} "
                f"/ hypothesis {hypothesis_text!r} in {self.path}"
            ) from None


class HttpGatewayNli:
    """NLI verdicts from a model-gateway service (POST {base_url}/nli)."""

    mode = "http_gateway"

    def __init__(self, base_url: str, timeout: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def scores(self, premise: str, hypothesis_text: str) -> tuple[float, float, float]:
        import requests

        try:
            resp = requests.post(
                f"{self.base_url}/nli",
                json={"premise": premise, "hypothesis": hypothesis_text},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            obj = resp.json()
            return (
                float(obj["p_entail"]),
                float(obj["p_neutral"]),
                float(obj["p_contra"]),
            )
        except Exception as exc:
            raise MiningError(
                f"NLI gateway failed for premise {premise!r}: {exc}"
            ) from exc


def make_nli_adapter(mode: str, scores_path=None, gateway_url: Optional[str] = None):
    if mode == "lexical_stub":
        return LexicalStubNli()
    if mode == "offline_file":
        if scores_path is None:
            raise MiningError("offline_file NLI mode requires a scores file")
        return OfflineNliScores(scores_path)
    if mode == "http_gateway":
        if not gateway_url:
            raise MiningError("http_gateway NLI mode requires a gateway url")
        return HttpGatewayNli(gateway_url)
    raise MiningError(f"unknown NLI mode {mode!r}")


def template_entails(
    tp1: str,
    tp2: str,
    tbl: TemplateTable,
    sentences: dict[str, Sentence],
    adapter,
    r: float,
) -> bool:
    """True iff at least ratio r of tp1's premises entail hypothesis(tp2).

    A premise entails when the entailment probability is the argmax of
    the adapter's three-way verdict.
    """
    if not (0.0 < r <= 1.0):
        raise ValueError("ratio r must be in (0, 1]")
    premises = premise_set(tp1, tbl, sentences)
    hypo = hypothesis(tp2)
    entailed = 0
    for premise in premises:
        p_entail, p_neutral, p_contra = adapter.scores(premise, hypo)
        if p_entail > p_neutral and p_entail > p_contra:
            entailed += 1
    return entailed >= r * len(premises) - 1e-9


def mutual_pairs(
    tbl: TemplateTable,
    sentences: dict[str, Sentence],
    adapter,
    r: float,
) -> list[PositivePair]:
    """Cross-group pairs for every mutually entailed template pair.

    Entailment is required in both directions; mutually entailed
    templates are used pairwise, with no transitive closure into larger
    groups.
    """
    keys = sorted(tbl.templates)
    pairs: list[PositivePair] = []
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            tp1, tp2 = keys[i], keys[j]
            if not template_entails(tp1, tp2, tbl, sentences, adapter, r):
                continue
            if not template_entails(tp2, tp1, tbl, sentences, adapter, r):
                continue
            for sid1 in tbl.templates[tp1]:
                for sid2 in tbl.templates[tp2]:
                    pairs.append(
                        PositivePair(
                            anchor=InstanceRef(sid1, None, VARIANT_DETERMINISTIC),
                            partner=InstanceRef(sid2, None, VARIANT_DETERMINISTIC),
                            source=SOURCE_ENTAILED_TEMPLATE,
                        )
                    )
    return pairs


def rewrite_prompt(s: Sentence) -> str:
    """The fixed rewriting prompt sent to an external language model."""
    return (
        f"Given the context {s.text()}, what is the relationship between "
        f"{' '.join(s.head_surface)} and {' '.join(s.tail_surface)} "
        f"(as short as possible)?"
    )


@dataclass(frozen=True)
class RewriteRecord:
    """An externally rewritten sentence with relocated entity spans."""

    sentence_id: str
    rewritten: Sentence


def load_rewrites(path, corpus: Corpus) -> dict[str, RewriteRecord]:
    """Rewrites file: JSONL in the corpus sentence schema.

    Records with invalid spans, unknown ids, or entity types different
    from the original sentence are skipped with a diagnostic.
    """
    out: dict[str, RewriteRecord] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: line {lineno}: malformed JSON: {exc}") from exc
            try:
                rewritten = parse_sentence(obj)
            except Exception as exc:
                logger.warning("rewrite line %d skipped: %s", lineno, exc)
                continue
            if rewritten.id not in corpus:
                logger.warning("rewrite line %d: unknown sentence %r, skipped", lineno, rewritten.id)
                continue
            original = corpus.by_id(rewritten.id)
            if (
                rewritten.head_type != original.head_type
                or rewritten.tail_type != original.tail_type
            ):
                logger.warning(
                    "rewrite line %d: entity types differ from original %r, skipped",
                    lineno,
                    rewritten.id,
                )
                continue
            out[rewritten.id] = RewriteRecord(sentence_id=rewritten.id, rewritten=rewritten)
    return out


def _unordered_ids(pair: PositivePair) -> tuple[str, str]:
    a, b = pair.anchor.sentence_id, pair.partner.sentence_id
    return (a, b) if a <= b else (b, a)


def build_rewrite_pairs(
    rewrites: dict[str, RewriteRecord],
    t: int,
    adapter,
    r: float,
    f: float,
    seed: int,
    existing_pairs: Iterable[PositivePair],
) -> tuple[list[PositivePair], TemplateTable]:
    """Mine pairs over rewritten sentences and map them back.

    Runs the built-in extractor, template table (threshold t),
    same-template pairing, and mutual-entailment pairing over the
    rewritten sentences; resulting pairs are expressed in original
    sentence ids, deduplicated against previously mined pairs, and
    uniformly downsampled to fraction f. Returns the retained pairs plus
    the rewritten-template table (for statistics).
    """
    if not (0.0 < f <= 1.0):
        raise ValueError("sampling fraction f must be in (0, 1]")
    sentences = {rec.sentence_id: rec.rewritten for rec in rewrites.values()}
    triples = {}
    for sid, sentence in sentences.items():
        triple = extract_triples_builtin(sentence)
        if triple is not None:
            triples[sid] = triple
    tbl = build_template_table(triples, t)
    candidates = same_template_pairs(tbl) + mutual_pairs(tbl, sentences, adapter, r)

    seen = {_unordered_ids(p) for p in existing_pairs}
    fresh: list[PositivePair] = []
    for pair in candidates:
        key = _unordered_ids(pair)
        if key in seen:
            continue
        seen.add(key)
        fresh.append(
            PositivePair(
                anchor=pair.anchor, partner=pair.partner, source=SOURCE_REWRITE_DERIVED
            )
        )
    fresh.sort(key=_unordered_ids)
    keep = math.floor(len(fresh) * f + 1e-9)
    if keep < len(fresh):
        rng = derive_random(seed, "rewrite-sample")
        fresh = sorted(rng.sample(fresh, keep), key=_unordered_ids)
    return fresh, tbl


@dataclass(frozen=True)
class MiningStats:
    """Template and pair-set statistics, with gold agreement when known.

    ``rewritten_template_count``, ``rewrite_pair_count`` and the
    correctness fields are None when the corresponding inputs were absent
    (absent is reported distinctly from zero).
    """

    template_count: int
    rewritten_template_count: Optional[int]
    avg_sentences_per_template: float
    sentences_covered: int
    coverage_fraction: float
    same_template_pair_count: int
    entailed_pair_count: int
    rewrite_pair_count: Optional[int]
    same_template_correct_fraction: Optional[float]
    entailed_correct_fraction: Optional[float]
    rewrite_correct_fraction: Optional[float]

    def to_json(self) -> dict:
        return {
            "template_count": self.template_count,
            "rewritten_template_count": self.rewritten_template_count,
            "avg_sentences_per_template": self.avg_sentences_per_template,
            "sentences_covered": self.sentences_covered,
            "coverage_fraction": self.coverage_fraction,
            "pair_counts": {
                "same_template": self.same_template_pair_count,
                "entailed_template": self.entailed_pair_count,
                "rewrite_derived": self.rewrite_pair_count,
            },
            "correct_fractions": {
                "same_template": self.same_template_correct_fraction,
                "entailed_template": self.entailed_correct_fraction,
                "rewrite_derived": self.rewrite_correct_fraction,
            },
        }


def _correct_fraction(pairs: list[PositivePair], corpus: Corpus) -> Optional[float]:
    golds = [
        (
            corpus.by_id(p.anchor.sentence_id).gold_relation,
            corpus.by_id(p.partner.sentence_id).gold_relation,
        )
        for p in pairs
    ]
    scored = [(a, b) for a, b in golds if a is not None and b is not None]
    if not scored:
        return None
    return sum(1 for a, b in scored if a == b) / len(scored)


def mining_stats(
    tbl_original: TemplateTable,
    tbl_rewritten: Optional[TemplateTable],
    same_pairs: list[PositivePair],
    entailed: list[PositivePair],
    rewrite_pairs: Optional[list[PositivePair]],
    corpus: Corpus,
) -> MiningStats:
    covered = tbl_original.covered_ids()
    count = len(tbl_original.templates)
    return MiningStats(
        template_count=count,
        rewritten_template_count=(
            None if tbl_rewritten is None else len(tbl_rewritten.templates)
        ),
        avg_sentences_per_template=(len(covered) / count if count else 0.0),
        sentences_covered=len(covered),
        coverage_fraction=len(covered) / len(corpus) if len(corpus) else 0.0,
        same_template_pair_count=len(same_pairs),
        entailed_pair_count=len(entailed),
        rewrite_pair_count=None if rewrite_pairs is None else len(rewrite_pairs),
        same_template_correct_fraction=_correct_fraction(same_pairs, corpus),
        entailed_correct_fraction=_correct_fraction(entailed, corpus),
        rewrite_correct_fraction=(
            None if rewrite_pairs is None else _correct_fraction(rewrite_pairs, corpus)
        ),
    )
