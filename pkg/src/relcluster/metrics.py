"""Clustering evaluation: B-cubed, V-measure, and the adjusted Rand index.

All three are computed exactly from the contingency table of (predicted,
gold) labels and are invariant under relabeling of either side.
Conventions pinned here: natural-log entropies for V-measure, harmonic
mean F1 with 0/0 -> 0, and for ARI's degenerate denominator
(Max == Expected) the value 1 when the partitions are identical and 0
otherwise. Pure functions, safe anywhere.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

from .errors import ShapeError

Labels = Sequence[Hashable]


@dataclass(frozen=True)
class EvaluationReport:
    b3_precision: float
    b3_recall: float
    b3_f1: float
    homogeneity: float
    completeness: float
    v_f1: float
    ari: float

    FIELDS = (
        "b3_precision",
        "b3_recall",
        "b3_f1",
        "homogeneity",
        "completeness",
        "v_f1",
        "ari",
    )

    def to_json(self) -> dict:
        """Full-precision values plus the x100, one-decimal rendering."""
        full = {name: getattr(self, name) for name in self.FIELDS}
        scaled = {name: round(getattr(self, name) * 100, 1) for name in self.FIELDS}
        return {"full": full, "x100": scaled}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


def _harmonic(a: float, b: float) -> float:
    if a + b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def _check_lengths(pred: Labels, gold: Labels, minimum: int) -> int:
    if len(pred) != len(gold):
        raise ShapeError(f"label lengths differ: {len(pred)} vs {len(gold)}")
    if len(pred) < minimum:
        raise ShapeError(f"need at least {minimum} labeled items")
    return len(pred)


def _contingency(pred: Labels, gold: Labels):
    joint = Counter(zip(pred, gold))
    pred_sizes = Counter(pred)
    gold_sizes = Counter(gold)
    return joint, pred_sizes, gold_sizes


def b_cubed(pred: Labels, gold: Labels) -> tuple[float, float, float]:
    """Item-averaged precision/recall over co-cluster sets, plus F1."""
    n = _check_lengths(pred, gold, 1)
    joint, pred_sizes, gold_sizes = _contingency(pred, gold)
    precision = sum(cnt * cnt / pred_sizes[p] for (p, g), cnt in joint.items()) / n
    recall = sum(cnt * cnt / gold_sizes[g] for (p, g), cnt in joint.items()) / n
    return precision, recall, _harmonic(precision, recall)


def _entropy(sizes: Counter, n: int) -> float:
    return -sum((c / n) * math.log(c / n) for c in sizes.values())


def v_measure(pred: Labels, gold: Labels) -> tuple[float, float, float]:
    """Homogeneity, completeness, and their harmonic mean.

    h = 1 - H(gold|pred)/H(gold) and c = 1 - H(pred|gold)/H(pred), with
    the convention that a zero reference entropy gives a perfect score.
    """
    n = _check_lengths(pred, gold, 1)
    joint, pred_sizes, gold_sizes = _contingency(pred, gold)
    h_gold = _entropy(gold_sizes, n)
    h_pred = _entropy(pred_sizes, n)
    h_gold_given_pred = -sum(
        (cnt / n) * math.log(cnt / pred_sizes[p]) for (p, g), cnt in joint.items()
    )
    h_pred_given_gold = -sum(
        (cnt / n) * math.log(cnt / gold_sizes[g]) for (p, g), cnt in joint.items()
    )
    homogeneity = 1.0 if h_gold == 0.0 else 1.0 - h_gold_given_pred / h_gold
    completeness = 1.0 if h_pred == 0.0 else 1.0 - h_pred_given_gold / h_pred
    return homogeneity, completeness, _harmonic(homogeneity, completeness)


def _comb2(x: int) -> int:
    return x * (x - 1) // 2


def _same_partition(pred: Labels, gold: Labels) -> bool:
    mapping: dict = {}
    reverse: dict = {}
    for p, g in zip(pred, gold):
        if mapping.setdefault(p, g) != g or reverse.setdefault(g, p) != p:
            return False
    return True


def ari(pred: Labels, gold: Labels) -> float:
    """Adjusted Rand index in [-1, 1], chance-corrected pair agreement."""
    n = _check_lengths(pred, gold, 2)
    joint, pred_sizes, gold_sizes = _contingency(pred, gold)
    index = sum(_comb2(cnt) for cnt in joint.values())
    sum_pred = sum(_comb2(c) for c in pred_sizes.values())
    sum_gold = sum(_comb2(c) for c in gold_sizes.values())
    expected = sum_pred * sum_gold / _comb2(n)
    maximum = 0.5 * (sum_pred + sum_gold)
    if maximum == expected:
        return 1.0 if _same_partition(pred, gold) else 0.0
    return (index - expected) / (maximum - expected)


def evaluate(pred: Labels, gold: Labels) -> EvaluationReport:
    """All three metric families on one (pred, gold) alignment."""
    b3_p, b3_r, b3_f = b_cubed(pred, gold)
    hom, comp, v_f = v_measure(pred, gold)
    return EvaluationReport(
        b3_precision=b3_p,
        b3_recall=b3_r,
        b3_f1=b3_f,
        homogeneity=hom,
        completeness=comp,
        v_f1=v_f,
        ari=ari(pred, gold),
    )
