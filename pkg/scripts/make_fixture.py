#!/usr/bin/env python3
"""Regenerate the committed test fixtures.

Authors the 40-sentence corpus with known mining structure, the rewrite
and NLI-score files, the external triple/encoding fixtures, and the
frozen expected mining outputs. Structural counts are asserted here at
authoring time; the test suite then treats the committed numbers and
bytes as ground truth. Rerun only when the fixture design changes, and
commit the regenerated files.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from relcluster.config import RunConfig  # noqa: E402
from relcluster.corpus import build_entity_pool, load_corpus, tag_entities  # noqa: E402
from relcluster.encoder import load_external_encodings  # noqa: E402
from relcluster.metrics import evaluate  # noqa: E402
from relcluster.pairs_cross import (  # noqa: E402
    LexicalStubNli,
    build_template_table,
    extract_all_builtin,
    hypothesis,
    premise_set,
)
from relcluster.pipeline import mine_pairs, stage_mine  # noqa: E402
from relcluster.pairs_within import SOURCE_ENTAILED_TEMPLATE, SOURCE_REWRITE_DERIVED, SOURCE_SAME_TEMPLATE  # noqa: E402

DATA = ROOT / "tests" / "data"

# (id, prefix, head, gap, tail, suffix, head_type, tail_type, gold, tail_first)
SENTENCES = [
    # A: "works for" x5
    ("s01", (), ("Paul",), ("works", "for"), ("Bluewater", "Labs"), (".",), "PERSON", "ORG", "works_for", False),
    ("s02", ("yesterday", ","), ("Omar",), ("works", "for"), ("Fernwood",), (".",), "PERSON", "ORG", "works_for", False),
    ("s03", (), ("Mary", "Jane", "Watson"), ("works", "for"), ("Kestrel", "Media", "Group"), ("these", "days", "."), "PERSON", "ORG", "works_for", False),
    ("s04", ("reportedly", ","), ("Amara",), ("works", "for"), ("Tessaract",), (".",), "PERSON", "ORG", "works_for", False),
    ("s05", (), ("Viktor", "Petrov"), ("works", "for"), ("Hollis", "Partners"), ("downtown", "."), "PERSON", "ORG", "contractor_for", False),
    # B: "is chief executive of" x4
    ("s06", (), ("Lucia", "Fernandez"), ("is", "chief", "executive", "of"), ("Orbital", "Dynamics"), (".",), "PERSON", "ORG", "ceo_of", False),
    ("s07", (), ("Chen", "Wei"), ("is", "chief", "executive", "of"), ("Veltrona",), ("now", "."), "PERSON", "ORG", "ceo_of", False),
    ("s08", ("today", ","), ("Nadia",), ("is", "chief", "executive", "of"), ("Bluewater", "Labs"), (".",), "PERSON", "ORG", "ceo_of", False),
    ("s09", (), ("Paul",), ("is", "chief", "executive", "of"), ("Fernwood",), (".",), "PERSON", "ORG", "ceo_of", False),
    # C: "serves as chief executive of" x3 (no "is" anywhere)
    ("s10", ("currently", ","), ("Omar",), ("serves", "as", "chief", "executive", "of"), ("Tessaract",), (".",), "PERSON", "ORG", "ceo_of", False),
    ("s11", (), ("Amara",), ("serves", "as", "chief", "executive", "of"), ("Hollis", "Partners"), ("today", "."), "PERSON", "ORG", "ceo_of", False),
    ("s12", (), ("Viktor", "Petrov"), ("serves", "as", "chief", "executive", "of"), ("Orbital", "Dynamics"), (".",), "PERSON", "ORG", "ceo_of", False),
    # D: "serves as chief of" x3, suffix supplies "executive ... of" so C and D
    # are mutually entailed under the subsequence stub
    ("s13", (), ("Nadia",), ("serves", "as", "chief", "of"), ("Veltrona",), ("with", "executive", "oversight", "of", "operations", "."), "PERSON", "ORG", "ceo_of", False),
    ("s14", (), ("Chen", "Wei"), ("serves", "as", "chief", "of"), ("Kestrel", "Media", "Group"), ("with", "executive", "oversight", "of", "operations", "."), "PERSON", "ORG", "ceo_of", False),
    ("s15", ("currently", ","), ("Lucia", "Fernandez"), ("serves", "as", "chief", "of"), ("Bluewater", "Labs"), ("with", "executive", "oversight", "of", "operations", "."), "PERSON", "ORG", "ceo_of", False),
    # E: "is headquartered in" x4
    ("s16", (), ("Veltrona",), ("is", "headquartered", "in"), ("New", "Harbor"), (".",), "ORG", "LOC", "based_in", False),
    ("s17", (), ("Orbital", "Dynamics"), ("is", "headquartered", "in"), ("Ashford",), (".",), "ORG", "LOC", "based_in", False),
    ("s18", ("since", "2019", ","), ("Tessaract",), ("is", "headquartered", "in"), ("Meridian", "City"), (".",), "ORG", "LOC", "based_in", False),
    ("s19", (), ("Kestrel", "Media", "Group"), ("is", "headquartered", "in"), ("Tarvale",), ("proper", "."), "ORG", "LOC", "based_in", False),
    # F: "acquired" x3 (single content word in the gap, fallback sampling)
    ("s20", (), ("Fernwood",), ("acquired",), ("Tessaract",), ("last", "autumn", "."), "ORG", "ORG", "acquired", False),
    ("s21", ("quietly", ","), ("Veltrona",), ("acquired",), ("Bluewater", "Labs"), (".",), "ORG", "ORG", "acquired", False),
    ("s22", (), ("Hollis", "Partners"), ("acquired",), ("Kestrel", "Media", "Group"), ("outright", "."), "ORG", "ORG", "acquired", False),
    # G: "was born in" x3; s23 has no other content tokens, forcing a pad slot
    ("s23", (), ("Paul",), ("was", "born", "in"), ("Ashford",), (), "PERSON", "LOC", "born_in", False),
    ("s24", (), ("Lucia", "Fernandez"), ("was", "born", "in"), ("New", "Harbor"), (".",), "PERSON", "LOC", "born_in", False),
    ("s25", ("apparently", ","), ("Omar",), ("was", "born", "in"), ("Tarvale",), (".",), "PERSON", "LOC", "born_in", False),
    # H: "advises" x2, frequency 2 is not > t=2, dropped
    ("s26", (), ("Nadia",), ("advises",), ("Fernwood",), ("informally", "."), "PERSON", "ORG", "advises", False),
    ("s27", (), ("Chen", "Wei"), ("advises",), ("Hollis", "Partners"), (".",), "PERSON", "ORG", "advises", False),
    # I: no valid triple
    ("s28", (), ("Amara",), ("of", "the"), ("Veltrona",), ("board", "."), "PERSON", "ORG", "member_of", False),  # all-stop gap
    ("s29", (), ("Viktor", "Petrov"), ("spent", "several", "long", "seasons", "quietly", "preparing", "detailed", "groundwork", "before", "joining"), ("Orbital", "Dynamics"), (".",), "PERSON", "ORG", "works_for", False),  # gap too long
    ("s30", (), ("Fernwood",), (), ("Tessaract",), ("announced", "nothing", "."), "ORG", "ORG", "partner_of", False),  # adjacent spans
    ("s31", (), ("Paul",), ("mentored",), ("Nadia",), ("patiently", "."), "PERSON", "PERSON", "mentored", False),
    ("s32", (), ("Omar",), ("praised",), ("Veltrona",), ("publicly", "."), "PERSON", "ORG", "praised", False),
    # J: tail precedes head in token order
    ("s33", ("at",), ("Viktor", "Petrov"), (",",), ("Bluewater", "Labs"), ("directs", "research", "."), "PERSON", "ORG", "ceo_of", True),
    ("s34", (), ("Amara",), ("recruited",), ("Kestrel", "Media", "Group"), ("last", "month", "."), "PERSON", "ORG", "recruited_by", True),
    # K: singletons and a second below-threshold group
    ("s35", (), ("Nadia",), ("moved", "to"), ("Meridian", "City"), ("recently", "."), "PERSON", "LOC", "moved_to", False),
    ("s36", (), ("Tessaract",), ("partnered", "with"), ("Hollis", "Partners"), (".",), "ORG", "ORG", "partner_of", False),
    ("s37", (), ("Fernwood",), ("partnered", "with"), ("Veltrona",), ("again", "."), "ORG", "ORG", "partner_of", False),
    ("s38", (), ("Chen", "Wei"), ("consults", "for"), ("Orbital", "Dynamics"), (".",), "PERSON", "ORG", "consults_for", False),
    ("s39", (), ("Mary", "Jane", "Watson"), ("lives", "in"), ("Tarvale",), (".",), "PERSON", "LOC", "lives_in", False),
    ("s40", (), ("Bluewater", "Labs"), ("opened", "offices", "in"), ("Ashford",), (".",), "ORG", "LOC", "based_in", False),
]


def build_sentence_obj(row):
    sid, prefix, head, gap, tail, suffix, htype, ttype, gold, tail_first = row
    if tail_first:
        first, second = tail, head
        first_type_is_head = False
    else:
        first, second = head, tail
        first_type_is_head = True
    tokens = list(prefix) + list(first) + list(gap) + list(second) + list(suffix)
    fs = len(prefix)
    fe = fs + len(first) - 1
    ss = fe + 1 + len(gap)
    se = ss + len(second) - 1
    if first_type_is_head:
        head_span, tail_span = (fs, fe), (ss, se)
    else:
        head_span, tail_span = (ss, se), (fs, fe)
    return {
        "id": sid,
        "tokens": tokens,
        "head": {"start": head_span[0], "end": head_span[1], "type": htype},
        "tail": {"start": tail_span[0], "end": tail_span[1], "type": ttype},
        "gold_relation": gold,
    }


def write_jsonl(path, objs):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, sort_keys=True))
            fh.write("\n")


def make_corpus():
    objs = [build_sentence_obj(row) for row in SENTENCES]
    write_jsonl(DATA / "fixture_corpus.jsonl", objs)
    gold_free = [dict(obj, gold_relation=None) for obj in objs]
    write_jsonl(DATA / "fixture_corpus_nogold.jsonl", gold_free)


def make_rewrites(corpus):
    # s06..s15 rewritten to a shared short "leads" relation; s23..s25
    # rewritten onto their original template (dedup must drop those pairs);
    # three invalid records exercise the skip-with-diagnostic paths.
    rows = []
    for sid in [f"s{i:02d}" for i in range(6, 16)]:
        s = corpus.by_id(sid)
        tokens = list(s.head_surface) + ["leads"] + list(s.tail_surface) + ["."]
        rows.append(
            {
                "id": sid,
                "tokens": tokens,
                "head": {"start": 0, "end": len(s.head_surface) - 1, "type": s.head_type},
                "tail": {
                    "start": len(s.head_surface) + 1,
                    "end": len(s.head_surface) + len(s.tail_surface),
                    "type": s.tail_type,
                },
                "gold_relation": None,
            }
        )
    for sid in ("s23", "s24", "s25"):
        s = corpus.by_id(sid)
        tokens = list(s.head_surface) + ["was", "born", "in"] + list(s.tail_surface)
        rows.append(
            {
                "id": sid,
                "tokens": tokens,
                "head": {"start": 0, "end": len(s.head_surface) - 1, "type": s.head_type},
                "tail": {
                    "start": len(s.head_surface) + 3,
                    "end": len(s.head_surface) + 2 + len(s.tail_surface),
                    "type": s.tail_type,
                },
                "gold_relation": None,
            }
        )
    rows.append({"id": "s01", "tokens": ["Paul", "leads", "Bluewater"],
                 "head": {"start": 0, "end": 0, "type": "PERSON"},
                 "tail": {"start": 2, "end": 5, "type": "ORG"},
                 "gold_relation": None})  # span out of range -> skipped
    rows.append({"id": "s02", "tokens": ["Omar", "leads", "Fernwood"],
                 "head": {"start": 0, "end": 0, "type": "ANIMAL"},
                 "tail": {"start": 2, "end": 2, "type": "ORG"},
                 "gold_relation": None})  # wrong entity type -> skipped
    rows.append({"id": "zzz", "tokens": ["Who", "leads", "What"],
                 "head": {"start": 0, "end": 0, "type": "PERSON"},
                 "tail": {"start": 2, "end": 2, "type": "ORG"},
                 "gold_relation": None})  # unknown id -> skipped
    write_jsonl(DATA / "fixture_rewrites.jsonl", rows)


def make_nli_scores(corpus):
    """Stub verdicts for every query either mining pass could issue."""
    stub = LexicalStubNli()
    rows = []
    seen = set()

    def add_table(tbl, sentences):
        keys = sorted(tbl.templates)
        for tp1 in keys:
            premises = premise_set(tp1, tbl, sentences)
            for tp2 in keys:
                if tp1 == tp2:
                    continue
                hypo = hypothesis(tp2)
                for premise in premises:
                    if (premise, hypo) in seen:
                        continue
                    seen.add((premise, hypo))
                    p_e, p_n, p_c = stub.scores(premise, hypo)
                    rows.append(
                        {
                            "premise": premise,
                            "hypothesis": hypo,
                            "p_entail": p_e,
                            "p_neutral": p_n,
                            "p_contra": p_c,
                        }
                    )

    sentences = {s.id: s for s in corpus}
    tbl = build_template_table(extract_all_builtin(corpus), 2)
    add_table(tbl, sentences)

    from relcluster.pairs_cross import extract_triples_builtin, load_rewrites

    rewrites = load_rewrites(DATA / "fixture_rewrites.jsonl", corpus)
    rew_sentences = {rec.sentence_id: rec.rewritten for rec in rewrites.values()}
    rew_triples = {}
    for sid, s in rew_sentences.items():
        triple = extract_triples_builtin(s)
        if triple is not None:
            rew_triples[sid] = triple
    add_table(build_template_table(rew_triples, 2), rew_sentences)
    write_jsonl(DATA / "fixture_nli_scores.jsonl", rows)


def make_triples(corpus):
    rows = []
    for sid in ("s01", "s02", "s03", "s06", "s07", "s16", "s20", "s23"):
        s = corpus.by_id(sid)
        first, second = sorted([s.head_span, s.tail_span])
        rows.append(
            {
                "id": sid,
                "subject": list(s.head_surface),
                "predicate": [t.lower() for t in s.tokens[first[1] + 1 : second[0]]],
                "object": list(s.tail_surface),
            }
        )
    rows.append({"id": "s04", "subject": ["Wrong", "Name"], "predicate": ["works", "for"],
                 "object": ["Tessaract"]})  # subject mismatch -> discarded
    rows.append({"id": "s05", "subject": ["Viktor", "Petrov"], "predicate": ["works", "for"],
                 "object": ["Hollis"]})  # object mismatch -> discarded
    write_jsonl(DATA / "fixture_triples.jsonl", rows)
    # Shortest-predicate tie file: two valid triples for one sentence.
    write_jsonl(
        DATA / "fixture_triples_tie.jsonl",
        [
            {"id": "s06", "subject": ["Lucia", "Fernandez"],
             "predicate": ["is", "chief", "executive", "of"], "object": ["Orbital", "Dynamics"]},
            {"id": "s06", "subject": ["Lucia", "Fernandez"],
             "predicate": ["chief", "of"], "object": ["Orbital", "Dynamics"]},
        ],
    )


def make_encodings(corpus):
    import numpy as np

    rng = np.random.default_rng(20240601)
    dim = 6
    with open(DATA / "fixture_encodings.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": dim}) + "\n")
        for sid in ("s01", "s02", "s03", "s04", "s05"):
            tagged = tag_entities(corpus.by_id(sid))
            vectors = rng.standard_normal((len(tagged.tokens), dim)).round(4)
            fh.write(
                json.dumps({"id": sid, "vectors": vectors.tolist()}, sort_keys=True)
                + "\n"
            )


def make_metrics_fixture():
    pred = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 3, 0]
    gold = ["a", "a", "b", "b", "b", "b", "c", "c", "c", "a", "c", "a"]
    with open(DATA / "fixture_metrics_labels.json", "w", encoding="utf-8") as fh:
        json.dump({"pred": pred, "gold": gold}, fh, sort_keys=True)
        fh.write("\n")
    report = evaluate(pred, gold)
    with open(DATA / "fixture_expected_report.json", "w", encoding="utf-8") as fh:
        fh.write(report.dumps())


def fixture_run_config(output_dir) -> RunConfig:
    return RunConfig(
        corpus_path=str(DATA / "fixture_corpus.jsonl"),
        output_dir=str(output_dir),
        rewrites_path=str(DATA / "fixture_rewrites.jsonl"),
        t=2,
        f=0.5,
        k=5,
        nli_mode="lexical_stub",
        seeds=(0,),
    )


def make_expected_mining(corpus):
    tmp = Path(tempfile.mkdtemp())
    config = fixture_run_config(tmp)
    result = stage_mine(config, corpus, 0)

    # Authoring-time structural assertions.
    assert len(corpus) == 40 and len(corpus.entity_types) == 3
    pool = build_entity_pool(corpus)
    assert all(len(bucket) >= 2 for bucket in pool.buckets.values())
    assert len(result.within.pairs) == 80, len(result.within.pairs)
    by_source = {}
    for pair in result.cross:
        by_source.setdefault(pair.source, []).append(pair)
    assert len(by_source[SOURCE_SAME_TEMPLATE]) == 34, len(by_source[SOURCE_SAME_TEMPLATE])
    assert len(by_source[SOURCE_ENTAILED_TEMPLATE]) == 9
    assert len(by_source[SOURCE_REWRITE_DERIVED]) == 12
    stats = result.stats
    assert stats.template_count == 7
    assert stats.sentences_covered == 25
    assert stats.coverage_fraction == 25 / 40
    assert stats.rewritten_template_count == 2

    expected = DATA / "expected"
    expected.mkdir(exist_ok=True)
    for name in ("pairs_within.jsonl", "pairs_cross.jsonl", "mining_stats.json"):
        shutil.copy(tmp / "seed_0" / name, expected / name)
    shutil.rmtree(tmp)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    make_corpus()
    corpus = load_corpus(DATA / "fixture_corpus.jsonl")
    make_rewrites(corpus)
    make_nli_scores(corpus)
    make_triples(corpus)
    make_encodings(corpus)
    make_metrics_fixture()
    make_expected_mining(corpus)
    # Offline-file mode must reproduce stub-mode mining exactly.
    tmp = Path(tempfile.mkdtemp())
    config = fixture_run_config(tmp)
    import dataclasses

    offline = dataclasses.replace(
        config,
        nli_mode="offline_file",
        nli_scores_path=str(DATA / "fixture_nli_scores.jsonl"),
    )
    stub_result = mine_pairs(config, corpus, 0)
    offline_result = mine_pairs(offline, corpus, 0)
    assert stub_result.cross == offline_result.cross
    shutil.rmtree(tmp)
    check = load_external_encodings(DATA / "fixture_encodings.jsonl", corpus)
    assert len(check) == 5
    print("fixtures written to", DATA)


if __name__ == "__main__":
    main()
