"""Metric tests, including independent brute-force oracles.

The oracles enumerate co-cluster sets and point pairs directly (B-cubed,
ARI) or sum empirical entropies from dict counts (V-measure); they never
touch the contingency-table implementation they check.
"""

import json
import math
import random

import pytest
from hypothesis import given, strategies as st

from relcluster.errors import ShapeError
from relcluster.metrics import EvaluationReport, ari, b_cubed, evaluate, v_measure

from conftest import DATA


def oracle_b_cubed(pred, gold):
    n = len(pred)
    precisions = []
    recalls = []
    for i in range(n):
        cluster = {j for j in range(n) if pred[j] == pred[i]}
        klass = {j for j in range(n) if gold[j] == gold[i]}
        both = len(cluster & klass)
        precisions.append(both / len(cluster))
        recalls.append(both / len(klass))
    p = sum(precisions) / n
    r = sum(recalls) / n
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f1


def oracle_v_measure(pred, gold):
    n = len(pred)

    def entropy(labels):
        counts = {}
        for lab in labels:
            counts[lab] = counts.get(lab, 0) + 1
        return -sum(c / n * math.log(c / n) for c in counts.values())

    def conditional(target, given):
        joint = {}
        given_counts = {}
        for t, g in zip(target, given):
            joint[(t, g)] = joint.get((t, g), 0) + 1
            given_counts[g] = given_counts.get(g, 0) + 1
        return -sum(
            c / n * math.log(c / given_counts[g]) for (t, g), c in joint.items()
        )

    h_gold = entropy(gold)
    h_pred = entropy(pred)
    hom = 1.0 if h_gold == 0 else 1.0 - conditional(gold, pred) / h_gold
    comp = 1.0 if h_pred == 0 else 1.0 - conditional(pred, gold) / h_pred
    f1 = 0.0 if hom + comp == 0 else 2 * hom * comp / (hom + comp)
    return hom, comp, f1


def oracle_ari(pred, gold):
    n = len(pred)
    a = b = c = d = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_pred = pred[i] == pred[j]
            same_gold = gold[i] == gold[j]
            if same_pred and same_gold:
                a += 1
            elif same_pred:
                b += 1
            elif same_gold:
                c += 1
            else:
                d += 1
    total = a + b + c + d
    index = a
    expected = (a + b) * (a + c) / total
    maximum = 0.5 * ((a + b) + (a + c))
    if maximum == expected:
        pred_parts = {frozenset(j for j in range(n) if pred[j] == v) for v in pred}
        gold_parts = {frozenset(j for j in range(n) if gold[j] == v) for v in gold}
        return 1.0 if pred_parts == gold_parts else 0.0
    return (index - expected) / (maximum - expected)


class TestBCubed:
    def test_perfect(self):
        assert b_cubed([1, 2, 1], [5, 9, 5]) == (1.0, 1.0, 1.0)

    def test_all_one_cluster_two_classes(self):
        p, r, f1 = b_cubed([0, 0, 0, 0], ["a", "a", "b", "b"])
        assert p == pytest.approx(0.5)
        assert r == pytest.approx(1.0)
        assert f1 == pytest.approx(2 / 3)

    def test_singletons_one_class(self):
        p, r, f1 = b_cubed([0, 1, 2, 3], ["a", "a", "a", "a"])
        assert p == pytest.approx(1.0)
        assert r == pytest.approx(0.25)
        assert f1 == pytest.approx(0.4)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            b_cubed([0, 1], [0])


class TestVMeasure:
    def test_relabeling_gives_perfect(self):
        assert v_measure([7, 3, 7, 1], ["x", "y", "x", "z"]) == (1.0, 1.0, 1.0)

    def test_singletons_have_full_homogeneity(self):
        hom, comp, _ = v_measure([0, 1, 2, 3], ["a", "a", "b", "b"])
        assert hom == pytest.approx(1.0)
        assert comp < 1.0

    def test_independent_labelings_score_zero(self):
        hom, comp, f1 = v_measure([0, 0, 1, 1], [0, 1, 0, 1])
        assert hom == pytest.approx(0.0, abs=1e-12)
        assert comp == pytest.approx(0.0, abs=1e-12)
        assert f1 == 0.0


class TestAri:
    def test_perfect(self):
        assert ari([0, 1, 0, 2], ["a", "b", "a", "c"]) == pytest.approx(1.0)

    def test_crossed_four_items(self):
        # Oracle-computed value for the fully crossed 2x2 case: the pair
        # counts give (0 - 2/3) / (2 - 2/3) = -1/2.
        expected = oracle_ari([0, 0, 1, 1], [0, 1, 0, 1])
        assert expected == pytest.approx(-0.5)
        assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(expected, abs=1e-12)

    def test_range_endpoints(self):
        assert ari([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
        assert -1.0 <= ari([0, 1, 0, 1], [0, 0, 1, 1]) <= 1.0

    def test_degenerate_denominators(self):
        assert ari([0, 1, 2], ["a", "b", "c"]) == 1.0  # both all-singletons
        assert ari([0, 0, 0], ["a", "a", "a"]) == 1.0  # both one cluster
        assert ari([5, 5, 5, 7], [5, 5, 7, 5]) != 1.0


def random_labelings(seed, n_max=50, label_max=6):
    rng = random.Random(seed)
    n = rng.randint(2, n_max)
    pred = [rng.randint(0, label_max - 1) for _ in range(n)]
    gold = [rng.randint(0, label_max - 1) for _ in range(n)]
    return pred, gold


class TestAgainstOracles:
    def test_fuzz_against_brute_force(self):
        for case in range(200):
            pred, gold = random_labelings(case)
            for ours, oracle in (
                (b_cubed, oracle_b_cubed),
                (v_measure, oracle_v_measure),
            ):
                for got, want in zip(ours(pred, gold), oracle(pred, gold)):
                    assert got == pytest.approx(want, abs=1e-9)
            assert ari(pred, gold) == pytest.approx(oracle_ari(pred, gold), abs=1e-9)

    def test_against_sklearn(self):
        from sklearn.metrics import adjusted_rand_score, homogeneity_completeness_v_measure

        for case in range(30):
            pred, gold = random_labelings(case + 1000)
            hom, comp, v = v_measure(pred, gold)
            sk_hom, sk_comp, sk_v = homogeneity_completeness_v_measure(gold, pred)
            assert hom == pytest.approx(sk_hom, abs=1e-9)
            assert comp == pytest.approx(sk_comp, abs=1e-9)
            assert v == pytest.approx(sk_v, abs=1e-9)
            assert ari(pred, gold) == pytest.approx(
                adjusted_rand_score(gold, pred), abs=1e-9
            )


@given(
    st.lists(st.integers(min_value=0, max_value=5), min_size=2, max_size=30),
    st.data(),
)
def test_relabeling_invariance(pred, data):
    gold = data.draw(
        st.lists(
            st.integers(min_value=0, max_value=5),
            min_size=len(pred),
            max_size=len(pred),
        )
    )
    pred_renamed = [p + 100 for p in pred]
    gold_renamed = [f"g{g}" for g in gold]
    for metric in (b_cubed, v_measure):
        for got, want in zip(
            metric(pred_renamed, gold_renamed), metric(pred, gold)
        ):
            assert got == pytest.approx(want, abs=1e-12)
    assert ari(pred_renamed, gold_renamed) == pytest.approx(
        ari(pred, gold), abs=1e-12
    )


class TestEvaluate:
    def test_perfect_report(self):
        report = evaluate([0, 1, 2], ["a", "b", "c"])
        for name in EvaluationReport.FIELDS:
            assert getattr(report, name) == pytest.approx(1.0)

    def test_fixture_report_bytes(self):
        labels = json.loads((DATA / "fixture_metrics_labels.json").read_text())
        report = evaluate(labels["pred"], labels["gold"])
        expected = (DATA / "fixture_expected_report.json").read_text()
        assert report.dumps() == expected

    def test_report_serialization_shape(self):
        report = evaluate([0, 0, 1], ["a", "a", "b"])
        obj = report.to_json()
        assert set(obj) == {"full", "x100"}
        assert obj["x100"]["b3_f1"] == 100.0
