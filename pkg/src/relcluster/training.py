"""Losses, exemplar computation, and the training loop.

Three objectives are combined per batch: a hinge margin loss over
within-sentence pairs, the same margin loss over cross-sentence pairs
(either may be swapped for the softmax InfoNCE objective under the
ablation flag), and an exemplar loss that pulls every instance toward
its K-Means centroid at several granularity layers. All gradients are
hand-derived and validated against central finite differences by
``gradient_check``.

Exemplars are recomputed from the deterministic-variant representations
at each epoch boundary and treated as constants within the epoch, so
gradients flow only into instance vectors. Parameter updates use AdamW
(decoupled weight decay 0.01, betas 0.9/0.999, eps 1e-8) and are
serialized at batch boundaries; per-pair gradient work within a batch is
independent and reduced in a fixed order for determinism.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .clustering import kmeans
from .corpus import Corpus, Sentence, SyntheticSentence
from .encoder import EncoderParams, InstanceRef, Vectorizer
from .errors import (
    BatchConstructionError,
    ConfigurationError,
    TrainingError,
    ZeroVectorError,
)
from .pairs_within import PositivePair, WithinPairs
from .seeding import derive_seed

logger = logging.getLogger(__name__)

LOSS_LOG_COLUMNS = (
    "epoch",
    "mean_pair_loss_w",
    "mean_pair_loss_c",
    "mean_exem_loss",
    "mean_total",
)


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.75
    temperature: float = 0.02
    nce_negatives: int = 10
    use_nce_for_pairs: bool = False
    exemplar_layer_sizes: tuple[int, ...] = (10, 20, 40)
    learning_rate: float = 1e-5
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    resample_within_pairs: bool = True

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ConfigurationError("margin must be > 0")
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be > 0")
        if self.nce_negatives < 1:
            raise ConfigurationError("nce_negatives must be >= 1")
        if len(self.exemplar_layer_sizes) < 1:
            raise ConfigurationError("need at least one exemplar layer")
        if any(c < 2 for c in self.exemplar_layer_sizes):
            raise ConfigurationError("exemplar layer sizes must be >= 2")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("bad epochs or batch size")


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b), in [0, 2]; rejects zero vectors."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine distance undefined for zero vectors")
    return 1.0 - float(a @ b) / (na * nb)


def _cosine_distance_grads(
    a: np.ndarray, b: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine distance undefined for zero vectors")
    dot = float(a @ b)
    dist = 1.0 - dot / (na * nb)
    d_a = -b / (na * nb) + dot * a / (na**3 * nb)
    d_b = -a / (na * nb) + dot * b / (na * nb**3)
    return dist, d_a, d_b


@dataclass
class MarginLossResult:
    loss: float
    d_anchors: np.ndarray
    d_positives: np.ndarray
    d_negatives: np.ndarray
    per_pair: np.ndarray


def margin_pair_loss(
    anchors: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    margin: float,
) -> MarginLossResult:
    """(1/M) sum of max(d(a,p) - d(a,n) + margin, 0) over cosine distances.

    The subgradient at the hinge point is taken as 0. Gradients are
    returned with respect to the raw input vectors.
    """
    m = anchors.shape[0]
    if m < 1:
        raise ConfigurationError("empty margin batch")
    d_anchors = np.zeros_like(anchors)
    d_positives = np.zeros_like(positives)
    d_negatives = np.zeros_like(negatives)
    per_pair = np.zeros(m)
    for i in range(m):
        dp, dp_da, dp_dp = _cosine_distance_grads(anchors[i], positives[i])
        dn, dn_da, dn_dn = _cosine_distance_grads(anchors[i], negatives[i])
        value = dp - dn + margin
        if value > 0.0:
            per_pair[i] = value
            d_anchors[i] = (dp_da - dn_da) / m
            d_positives[i] = dp_dp / m
            d_negatives[i] = -dn_dn / m
    return MarginLossResult(
        loss=float(per_pair.sum()) / m,
        d_anchors=d_anchors,
        d_positives=d_positives,
        d_negatives=d_negatives,
        per_pair=per_pair,
    )


@dataclass
class NceLossResult:
    loss: float
    d_anchors: np.ndarray
    d_positives: np.ndarray
    d_pool: np.ndarray
    per_anchor: np.ndarray
    negative_indices: np.ndarray


def info_nce_given_negatives(
    anchors: np.ndarray,
    positives: np.ndarray,
    pool: np.ndarray,
    negative_indices: np.ndarray,
    temperature: float,
) -> NceLossResult:
    """Softmax contrastive loss with explicit negative pool rows.

    Per anchor i: -log( exp(a_i.p_i/tau) / sum_j exp(a_i.v_j/tau) ) where
    j ranges over the positive plus the selected negatives. Summed over
    anchors; every per-anchor term is >= 0.
    """
    n, j_count = negative_indices.shape
    d_anchors = np.zeros_like(anchors)
    d_positives = np.zeros_like(positives)
    d_pool = np.zeros_like(pool)
    per_anchor = np.zeros(n)
    for i in range(n):
        candidates = np.vstack([positives[i]] + [pool[j] for j in negative_indices[i]])
        scores = candidates @ anchors[i] / temperature
        shifted = scores - scores.max()
        weights = np.exp(shifted)
        weights /= weights.sum()
        per_anchor[i] = float(np.log(np.exp(shifted).sum()) - shifted[0])
        coeff = weights.copy()
        coeff[0] -= 1.0
        d_anchors[i] = (coeff @ candidates) / temperature
        d_positives[i] += coeff[0] * anchors[i] / temperature
        for slot in range(j_count):
            d_pool[negative_indices[i, slot]] += (
                coeff[slot + 1] * anchors[i] / temperature
            )
    return NceLossResult(
        loss=float(per_anchor.sum()),
        d_anchors=d_anchors,
        d_positives=d_positives,
        d_pool=d_pool,
        per_anchor=per_anchor,
        negative_indices=negative_indices,
    )


def info_nce_loss(
    anchors: np.ndarray,
    positives: np.ndarray,
    pool: np.ndarray,
    anchor_base_ids: Sequence[str],
    pool_base_ids: Sequence[str],
    temperature: float,
    negatives: int,
    rng: np.random.Generator,
) -> NceLossResult:
    """Draw J negatives per anchor from the minibatch pool, then score.

    Pool rows sharing the anchor's source sentence (its own variants and
    synthetic derivative) are excluded from the draw.
    """
    if pool.shape[0] <= negatives:
        raise ConfigurationError(
            f"pool of {pool.shape[0]} too small for {negatives} negatives"
        )
    n = anchors.shape[0]
    neg_idx = np.zeros((n, negatives), dtype=np.intp)
    for i in range(n):
        eligible = [
            j for j, base in enumerate(pool_base_ids) if base != anchor_base_ids[i]
        ]
        if len(eligible) < negatives:
            raise ConfigurationError(
                f"only {len(eligible)} eligible negatives for anchor {i}, "
                f"need {negatives}"
            )
        neg_idx[i] = rng.choice(np.array(eligible, dtype=np.intp), size=negatives, replace=False)
    return info_nce_given_negatives(anchors, positives, pool, neg_idx, temperature)


@dataclass
class ExemplarLayer:
    centroids: np.ndarray
    assignment: dict[str, int]


@dataclass
class ExemplarLayers:
    layers: list[ExemplarLayer]

    def assignment_arrays(self, ids: Sequence[str]) -> list[np.ndarray]:
        return [
            np.array([layer.assignment[sid] for sid in ids], dtype=np.intp)
            for layer in self.layers
        ]


def compute_exemplars(
    vectors: np.ndarray,
    ids: Sequence[str],
    layer_sizes: Sequence[int],
    seed: int,
) -> ExemplarLayers:
    """K-Means centroids per granularity layer, unit-normalized.

    Assignments come from the fit itself; centroids are renormalized
    afterwards so exemplar similarities are dot products of unit vectors.
    """
    n = vectors.shape[0]
    layers: list[ExemplarLayer] = []
    for l, c in enumerate(layer_sizes):
        if n < c:
            raise ConfigurationError(f"{n} instances cannot form {c} exemplars")
        model = kmeans(vectors, c, seed=derive_seed(seed, "exemplar-layer", l))
        norms = np.linalg.norm(model.centroids, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise TrainingError("zero exemplar centroid")
        centroids = model.centroids / norms
        layers.append(
            ExemplarLayer(
                centroids=centroids,
                assignment={sid: int(lab) for sid, lab in zip(ids, model.labels)},
            )
        )
    return ExemplarLayers(layers=layers)


@dataclass
class ExemplarLossResult:
    loss: float
    d_vectors: np.ndarray
    per_instance: np.ndarray


def exemplar_loss(
    vectors: np.ndarray,
    layer_centroids: Sequence[np.ndarray],
    layer_assignments: Sequence[np.ndarray],
    temperature: float,
) -> ExemplarLossResult:
    """Layer-averaged log-softmax pull toward each instance's exemplar.

    sum_i (1/L) sum_l [ logsumexp_q(h_i.e_q/tau) - h_i.e_j(i,l)/tau ].
    Exemplars are constants: gradients flow only into the instances. With
    a single centroid in a layer the per-term loss is exactly 0.
    """
    n = vectors.shape[0]
    n_layers = len(layer_centroids)
    if n_layers != len(layer_assignments) or n_layers < 1:
        raise ConfigurationError("mismatched exemplar layers")
    d_vectors = np.zeros_like(vectors)
    per_instance = np.zeros(n)
    for centroids, assignment in zip(layer_centroids, layer_assignments):
        if len(assignment) != n:
            raise ConfigurationError("assignments do not cover all instances")
        scores = vectors @ centroids.T / temperature
        shifted = scores - scores.max(axis=1, keepdims=True)
        weights = np.exp(shifted)
        weights /= weights.sum(axis=1, keepdims=True)
        rows = np.arange(n)
        log_probs = shifted[rows, assignment] - np.log(
            np.exp(shifted).sum(axis=1)
        )
        per_instance += -log_probs / n_layers
        coeff = weights.copy()
        coeff[rows, assignment] -= 1.0
        d_vectors += (coeff @ centroids) / (temperature * n_layers)
    return ExemplarLossResult(
        loss=float(per_instance.sum()), d_vectors=d_vectors, per_instance=per_instance
    )


def total_loss(pair_within: float, pair_cross: float, exemplar: float) -> float:
    """The training objective is the plain sum of its three components."""
    return pair_within + pair_cross + exemplar


@dataclass
class BatchInstance:
    ref: InstanceRef
    base_id: str
    vector: np.ndarray


def sample_negative(
    anchor_base_id: str,
    partner_ref: InstanceRef,
    pool: Sequence[BatchInstance],
    rng: np.random.Generator,
) -> int:
    """Uniform negative draw from the batch pool.

    Excluded: every instance from the anchor's source sentence (covering
    the anchor itself and its synthetic derivative) and the anchor's
    paired partner. Returns the pool index.
    """
    eligible = [
        i
        for i, inst in enumerate(pool)
        if inst.base_id != anchor_base_id and inst.ref != partner_ref
    ]
    if not eligible:
        raise BatchConstructionError(
            f"no eligible negative for anchor sentence {anchor_base_id!r}"
        )
    return eligible[int(rng.integers(len(eligible)))]


@dataclass
class TrainState:
    params: EncoderParams
    first_moment: np.ndarray
    second_moment: np.ndarray
    step: int = 0
    epoch: int = 0

    @classmethod
    def fresh(cls, params: EncoderParams) -> "TrainState":
        return cls(
            params=params,
            first_moment=np.zeros_like(params.table),
            second_moment=np.zeros_like(params.table),
        )

    def adamw_update(self, grad: np.ndarray, config: LossConfig) -> None:
        self.step += 1
        b1, b2 = config.beta1, config.beta2
        self.first_moment = b1 * self.first_moment + (1 - b1) * grad
        self.second_moment = b2 * self.second_moment + (1 - b2) * grad**2
        m_hat = self.first_moment / (1 - b1**self.step)
        v_hat = self.second_moment / (1 - b2**self.step)
        self.params.table -= config.learning_rate * (
            m_hat / (np.sqrt(v_hat) + config.adam_eps)
            + config.weight_decay * self.params.table
        )


@dataclass
class EpochLoss:
    epoch: int
    mean_pair_loss_w: float
    mean_pair_loss_c: float
    mean_exem_loss: float
    mean_total: float


@dataclass
class TrainResult:
    params: EncoderParams
    state: TrainState
    log: list[EpochLoss]


def write_loss_log(log: Sequence[EpochLoss], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_LOG_COLUMNS)
        for row in log:
            writer.writerow(
                [
                    row.epoch,
                    repr(row.mean_pair_loss_w),
                    repr(row.mean_pair_loss_c),
                    repr(row.mean_exem_loss),
                    repr(row.mean_total),
                ]
            )


def _base_id(vectorizer: Vectorizer, ref: InstanceRef) -> str:
    sentence = vectorizer.sentence(ref.sentence_id)
    if isinstance(sentence, SyntheticSentence):
        return sentence.parent_id
    return sentence.id


def _shuffle_into_batches(
    pairs_w: list[PositivePair],
    pairs_c: list[PositivePair],
    batch_size: int,
    rng: np.random.Generator,
) -> list[list[tuple[PositivePair, bool]]]:
    w = [(p, True) for p in pairs_w]
    c = [(p, False) for p in pairs_c]
    if w:
        perm = rng.permutation(len(w))
        w = [w[i] for i in perm]
    if c:
        perm = rng.permutation(len(c))
        c = [c[i] for i in perm]
    total = len(w) + len(c)
    n_batches = max(1, total // batch_size)
    batches: list[list[tuple[PositivePair, bool]]] = []
    wi = ci = 0
    for b in range(n_batches):
        take_w = round(len(w) * (b + 1) / n_batches) - wi
        take_c = round(len(c) * (b + 1) / n_batches) - ci
        batch = w[wi : wi + take_w] + c[ci : ci + take_c]
        wi += take_w
        ci += take_c
        if batch:
            batches.append(batch)
    if len(batches) > 1 and len(batches[-1]) < max(2, batch_size // 4):
        tail = batches.pop()
        batches[-1].extend(tail)
    return batches


def _batch_has_negatives(
    batch: list[tuple[PositivePair, bool]], base_of: Callable[[InstanceRef], str]
) -> bool:
    refs = [ref for pair, _ in batch for ref in (pair.anchor, pair.partner)]
    bases = [base_of(ref) for ref in refs]
    for pair, _ in batch:
        anchor_base = base_of(pair.anchor)
        ok = any(
            base != anchor_base and ref != pair.partner
            for ref, base in zip(refs, bases)
        )
        if not ok:
            return False
    return True


def _make_batches(
    pairs_w: list[PositivePair],
    pairs_c: list[PositivePair],
    batch_size: int,
    rng: np.random.Generator,
    base_of: Callable[[InstanceRef], str],
    attempts: int = 10,
) -> list[list[tuple[PositivePair, bool]]]:
    """Shuffle both sets and mix them into batches proportionally.

    Each batch draws from the within and cross sets in proportion to
    their sizes, so both loss components are observed per step whenever
    both sets are non-empty; a trailing undersized batch is merged into
    its predecessor. Batches are validated up front to offer an eligible
    negative for every pair and rebuilt (reshuffled) when one does not.
    """
    if not pairs_w and not pairs_c:
        raise ConfigurationError("no positive pairs")
    for _ in range(attempts):
        batches = _shuffle_into_batches(pairs_w, pairs_c, batch_size, rng)
        if all(_batch_has_negatives(batch, base_of) for batch in batches):
            return batches
    raise BatchConstructionError(
        "could not build batches with eligible negatives; the corpus may be "
        "too small or too homogeneous"
    )


WithinFactory = Callable[[int], WithinPairs]


def train(
    corpus: Corpus,
    pairs_w: Sequence[PositivePair],
    pairs_c: Sequence[PositivePair],
    config: LossConfig,
    params: EncoderParams,
    m: int,
    synthetic: Optional[dict[str, Sentence]] = None,
    within_factory: Optional[WithinFactory] = None,
    use_nce_for_cross: bool = False,
) -> TrainResult:
    """Run the epoch loop and return trained parameters plus a loss log.

    Per epoch: exemplars are recomputed from the deterministic-variant
    vectors of all corpus sentences, pairs are reshuffled into mixed
    batches, and every batch applies one AdamW step on the summed
    objective. When ``within_factory`` is given and the config asks for
    resampling, the within-sentence pair set is rebuilt with a fresh
    derived seed at each epoch boundary. Fully deterministic given
    config.seed.

    Under ``use_nce_for_pairs`` the within-sentence sub-batch switches to
    the InfoNCE objective (negatives drawn from the minibatch pool);
    cross-sentence pairs keep the margin loss unless ``use_nce_for_cross``
    is also set.
    """
    vectorizer = Vectorizer(corpus, m=m, params=params)
    if not vectorizer.trainable:
        raise ConfigurationError("training requires a trainable encoder")
    vectorizer.set_synthetic(dict(synthetic or {}))
    pairs_w = list(pairs_w)
    pairs_c = list(pairs_c)
    if not pairs_w and not pairs_c:
        raise ConfigurationError("no positive pairs")

    state = TrainState.fresh(params)
    log: list[EpochLoss] = []
    ids = list(corpus.ids)

    for epoch in range(config.epochs):
        state.epoch = epoch
        if epoch > 0 and config.resample_within_pairs and within_factory is not None:
            rebuilt = within_factory(derive_seed(config.seed, "within-epoch", epoch))
            pairs_w = list(rebuilt.pairs)
            vectorizer.set_synthetic(dict(rebuilt.synthetic))

        det_vectors = np.stack(
            [vectorizer.vector(vectorizer.deterministic_ref(sid)) for sid in ids]
        )
        exemplars = compute_exemplars(
            det_vectors,
            ids,
            config.exemplar_layer_sizes,
            derive_seed(config.seed, "exemplar-epoch", epoch),
        )
        epoch_rng = np.random.default_rng(derive_seed(config.seed, "batches", epoch))
        batches = _make_batches(
            pairs_w,
            pairs_c,
            config.batch_size,
            epoch_rng,
            lambda ref: _base_id(vectorizer, ref),
        )

        sums = {"w": 0.0, "c": 0.0, "exem": 0.0, "total": 0.0}
        counts = {"w": 0, "c": 0, "batches": 0}
        for batch_index, batch in enumerate(batches):
            batch_rng = np.random.default_rng(
                derive_seed(config.seed, "batch", epoch, batch_index)
            )
            losses = _train_batch(
                batch,
                vectorizer,
                state,
                config,
                exemplars,
                batch_rng,
                epoch,
                batch_index,
                use_nce_for_cross,
            )
            loss_w, loss_c, loss_exem, n_w, n_c = losses
            batch_total = total_loss(loss_w, loss_c, loss_exem)
            if not np.isfinite(batch_total):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} batch {batch_index}: "
                    f"w={loss_w} c={loss_c} exem={loss_exem}"
                )
            sums["w"] += loss_w * max(n_w, 1) if n_w else 0.0
            sums["c"] += loss_c * max(n_c, 1) if n_c else 0.0
            sums["exem"] += loss_exem
            sums["total"] += batch_total
            counts["w"] += n_w
            counts["c"] += n_c
            counts["batches"] += 1

        log.append(
            EpochLoss(
                epoch=epoch,
                mean_pair_loss_w=(sums["w"] / counts["w"] if counts["w"] else 0.0),
                mean_pair_loss_c=(sums["c"] / counts["c"] if counts["c"] else 0.0),
                mean_exem_loss=sums["exem"] / counts["batches"],
                mean_total=sums["total"] / counts["batches"],
            )
        )
        logger.info(
            "epoch %d: total %.6f (w %.6f, c %.6f, exem %.6f)",
            epoch,
            log[-1].mean_total,
            log[-1].mean_pair_loss_w,
            log[-1].mean_pair_loss_c,
            log[-1].mean_exem_loss,
        )
    return TrainResult(params=state.params, state=state, log=log)


def _train_batch(
    batch: list[tuple[PositivePair, bool]],
    vectorizer: Vectorizer,
    state: TrainState,
    config: LossConfig,
    exemplars: ExemplarLayers,
    rng: np.random.Generator,
    epoch: int,
    batch_index: int,
    use_nce_for_cross: bool,
) -> tuple[float, float, float, int, int]:
    """One forward/backward/update cycle; returns component losses."""
    grad_table = np.zeros_like(state.params.table)

    encoded: list[tuple[np.ndarray, Callable]] = []
    pool: list[BatchInstance] = []
    for pair, _ in batch:
        for ref in (pair.anchor, pair.partner):
            vec, backprop = vectorizer.vector_with_grad(ref)
            if not vec.any():
                raise TrainingError(
                    f"all-zero relation vector for {ref.sentence_id!r}"
                )
            encoded.append((vec, backprop))
            pool.append(
                BatchInstance(ref=ref, base_id=_base_id(vectorizer, ref), vector=vec)
            )

    anchors_idx = list(range(0, len(pool), 2))
    partners_idx = list(range(1, len(pool), 2))
    within_rows = [i for i, (_, is_w) in enumerate(batch) if is_w]
    cross_rows = [i for i, (_, is_w) in enumerate(batch) if not is_w]

    pool_matrix = np.stack([inst.vector for inst in pool])
    pool_bases = [inst.base_id for inst in pool]
    accum = np.zeros_like(pool_matrix)

    def run_margin(rows: list[int]) -> float:
        anchors = pool_matrix[[anchors_idx[i] for i in rows]]
        positives = pool_matrix[[partners_idx[i] for i in rows]]
        neg_pool_idx = []
        for i in rows:
            pair, _ = batch[i]
            neg_pool_idx.append(
                sample_negative(
                    pool_bases[anchors_idx[i]], pair.partner, pool, rng
                )
            )
        negatives = pool_matrix[neg_pool_idx]
        result = margin_pair_loss(anchors, positives, negatives, config.margin)
        for row, i in enumerate(rows):
            accum[anchors_idx[i]] += result.d_anchors[row]
            accum[partners_idx[i]] += result.d_positives[row]
            accum[neg_pool_idx[row]] += result.d_negatives[row]
        return result.loss

    def run_nce(rows: list[int]) -> float:
        anchors = pool_matrix[[anchors_idx[i] for i in rows]]
        positives = pool_matrix[[partners_idx[i] for i in rows]]
        bases = [pool_bases[anchors_idx[i]] for i in rows]
        result = info_nce_loss(
            anchors,
            positives,
            pool_matrix,
            bases,
            pool_bases,
            config.temperature,
            config.nce_negatives,
            rng,
        )
        for row, i in enumerate(rows):
            accum[anchors_idx[i]] += result.d_anchors[row]
            accum[partners_idx[i]] += result.d_positives[row]
        accum[...] += result.d_pool
        # Report the batch-mean per-anchor term so components stay on
        # comparable scales in the log.
        return result.loss / len(rows)

    loss_w = 0.0
    loss_c = 0.0
    if within_rows:
        loss_w = run_nce(within_rows) if config.use_nce_for_pairs else run_margin(within_rows)
    if cross_rows:
        use_nce = config.use_nce_for_pairs and use_nce_for_cross
        loss_c = run_nce(cross_rows) if use_nce else run_margin(cross_rows)

    # Exemplar pull on each batch anchor, averaged over the batch.
    anchor_vectors = pool_matrix[anchors_idx]
    anchor_ids = [pool[i].base_id for i in anchors_idx]
    assignments = [
        np.array([layer.assignment[sid] for sid in anchor_ids], dtype=np.intp)
        for layer in exemplars.layers
    ]
    exem = exemplar_loss(
        anchor_vectors,
        [layer.centroids for layer in exemplars.layers],
        assignments,
        config.temperature,
    )
    n_anchors = len(anchors_idx)
    loss_exem = exem.loss / n_anchors
    for row, i in enumerate(anchors_idx):
        accum[i] += exem.d_vectors[row] / n_anchors

    for (vec, backprop), d_vec in zip(encoded, accum):
        if d_vec.any():
            backprop(d_vec, grad_table)

    state.adamw_update(grad_table, config)
    return (
        loss_w,
        loss_c,
        loss_exem,
        len(within_rows),
        len(cross_rows),
    )


def save_checkpoint(state: TrainState, path) -> None:
    """Versioned npz dump of parameters plus optimizer state."""
    tokens = np.array(
        sorted(state.params.vocab, key=state.params.vocab.__getitem__), dtype=str
    )
    np.savez(
        path,
        format_version=np.int64(1),
        tokens=tokens,
        table=state.params.table,
        context_window=np.int64(state.params.context_window),
        first_moment=state.first_moment,
        second_moment=state.second_moment,
        step=np.int64(state.step),
        epoch=np.int64(state.epoch),
    )


def load_checkpoint(path) -> TrainState:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != 1:
            raise ConfigurationError(f"unsupported checkpoint version {version}")
        tokens = [str(t) for t in data["tokens"]]
        params = EncoderParams(
            vocab={tok: i for i, tok in enumerate(tokens)},
            table=np.array(data["table"], dtype=float),
            context_window=int(data["context_window"]),
        )
        state = TrainState(
            params=params,
            first_moment=np.array(data["first_moment"], dtype=float),
            second_moment=np.array(data["second_moment"], dtype=float),
            step=int(data["step"]),
            epoch=int(data["epoch"]),
        )
    return state


def gradient_check(
    loss_name: str, seed: int = 0, eps: float = 1e-5, trials: int = 3
) -> float:
    """Max relative error between analytic and central-difference grads.

    Builds random small instances (vector width <= 8, <= 6 instances) for
    the named loss, evaluates the analytic gradients, and compares each
    coordinate against (f(x+eps) - f(x-eps)) / (2 eps), reporting
    max |delta| / max(1e-12, |analytic|). Margin instances falling within
    a guard band of the hinge are resampled, as are coordinates whose
    analytic gradient is so small that the ratio would be pure float
    noise.
    """
    if not (1e-6 <= eps <= 1e-4):
        raise ValueError("eps out of the supported range")
    worst = 0.0
    for trial in range(trials):
        rng = np.random.default_rng(derive_seed("gradcheck", loss_name, seed, trial))
        if loss_name == "margin":
            worst = max(worst, _check_margin(rng, eps))
        elif loss_name == "nce":
            worst = max(worst, _check_nce(rng, eps))
        elif loss_name == "exemplar":
            worst = max(worst, _check_exemplar(rng, eps))
        else:
            raise ValueError(f"unknown loss {loss_name!r}")
    return worst


def _relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = analytic.ravel()
    numeric = numeric.ravel()
    # Coordinates that are (near) zero on both sides tell us nothing; the
    # spec ratio would amplify float dust below any meaningful scale.
    mask = (np.abs(analytic) > 1e-7) | (np.abs(numeric) > 1e-7)
    if not mask.any():
        return 0.0
    delta = np.abs(analytic[mask] - numeric[mask])
    denom = np.maximum(1e-12, np.abs(analytic[mask]))
    return float(np.max(delta / denom))


def _central_diff(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float) -> np.ndarray:
    grad = np.zeros_like(x)
    flat = x.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(x)
        flat[i] = orig - eps
        down = f(x)
        flat[i] = orig
        out[i] = (up - down) / (2 * eps)
    return grad


def _check_margin(rng: np.random.Generator, eps: float) -> float:
    m, d = 4, 6
    margin = 0.75
    while True:
        anchors = rng.standard_normal((m, d))
        positives = rng.standard_normal((m, d))
        negatives = rng.standard_normal((m, d))
        gaps = [
            cosine_distance(anchors[i], positives[i])
            - cosine_distance(anchors[i], negatives[i])
            + margin
            for i in range(m)
        ]
        if all(abs(g) > 1e-2 for g in gaps):
            break
    result = margin_pair_loss(anchors, positives, negatives, margin)
    packed = np.concatenate([anchors.ravel(), positives.ravel(), negatives.ravel()])
    analytic = np.concatenate(
        [result.d_anchors.ravel(), result.d_positives.ravel(), result.d_negatives.ravel()]
    )

    def f(x: np.ndarray) -> float:
        a = x[: m * d].reshape(m, d)
        p = x[m * d : 2 * m * d].reshape(m, d)
        n = x[2 * m * d :].reshape(m, d)
        return margin_pair_loss(a, p, n, margin).loss

    numeric = _central_diff(f, packed, eps)
    return _relative_errors(analytic, numeric)


def _unit_rows(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    x = rng.standard_normal(shape)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _check_nce(rng: np.random.Generator, eps: float) -> float:
    n, d, pool_size, j = 3, 6, 6, 3
    tau = 0.5
    anchors = _unit_rows(rng, (n, d))
    positives = _unit_rows(rng, (n, d))
    pool = _unit_rows(rng, (pool_size, d))
    neg_idx = np.stack([rng.choice(pool_size, size=j, replace=False) for _ in range(n)])
    result = info_nce_given_negatives(anchors, positives, pool, neg_idx, tau)
    packed = np.concatenate([anchors.ravel(), positives.ravel(), pool.ravel()])
    analytic = np.concatenate(
        [result.d_anchors.ravel(), result.d_positives.ravel(), result.d_pool.ravel()]
    )

    def f(x: np.ndarray) -> float:
        a = x[: n * d].reshape(n, d)
        p = x[n * d : 2 * n * d].reshape(n, d)
        q = x[2 * n * d :].reshape(pool_size, d)
        return info_nce_given_negatives(a, p, q, neg_idx, tau).loss

    numeric = _central_diff(f, packed, eps)
    return _relative_errors(analytic, numeric)


def _check_exemplar(rng: np.random.Generator, eps: float) -> float:
    n, d = 5, 6
    tau = 0.25
    vectors = _unit_rows(rng, (n, d))
    layer_centroids = [_unit_rows(rng, (2, d)), _unit_rows(rng, (3, d))]
    layer_assignments = [
        rng.integers(0, 2, size=n).astype(np.intp),
        rng.integers(0, 3, size=n).astype(np.intp),
    ]
    result = exemplar_loss(vectors, layer_centroids, layer_assignments, tau)

    def f(x: np.ndarray) -> float:
        return exemplar_loss(
            x.reshape(n, d), layer_centroids, layer_assignments, tau
        ).loss

    numeric = _central_diff(f, vectors.copy(), eps)
    return _relative_errors(result.d_vectors, numeric)
