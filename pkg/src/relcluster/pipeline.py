"""Pipeline stages: ingest, mine, train, cluster, evaluate, stats.

Each stage reads the artifacts of its predecessors from the per-seed run
directory and writes its own; any failure halts the run with the stage
name while partial artifacts stay on disk. All artifact writers emit
canonical JSON (sorted keys, LF endings), so a run directory is
byte-reproducible from its manifest in the offline adapter modes.
"""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .clustering import infer_clusters
from .config import RunConfig, manifest
from .corpus import Corpus, build_entity_pool, load_corpus
from .encoder import Vectorizer, init_params, load_external_encodings
from .errors import (
    ConfigurationError,
    EvaluationError,
    StageDependencyError,
    StageError,
)
from .metrics import EvaluationReport, evaluate
from .pairs_cross import (
    MiningStats,
    build_rewrite_pairs,
    build_template_table,
    extract_all_builtin,
    load_external_triples,
    load_rewrites,
    make_nli_adapter,
    mining_stats,
    mutual_pairs,
    same_template_pairs,
)
from .pairs_within import WithinPairs, build_within_pairs, dump_pairs
from .seeding import derive_seed
from .training import train, save_checkpoint, load_checkpoint, write_loss_log

logger = logging.getLogger(__name__)

STAGES = ("config", "ingest", "mine", "train", "cluster", "evaluate", "stats")


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")


def seed_dir(config: RunConfig, seed: int) -> Path:
    return Path(config.output_dir) / f"seed_{seed}"


def stage_ingest(config: RunConfig) -> Corpus:
    corpus = load_corpus(config.corpus_path)
    if config.k > len(corpus):
        raise ConfigurationError(
            f"k={config.k} exceeds corpus size {len(corpus)}"
        )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        {
            "sentences": len(corpus),
            "entity_types": sorted(corpus.entity_types),
            "with_gold": sum(1 for s in corpus if s.gold_relation is not None),
        },
        out / "corpus_summary.json",
    )
    return corpus


@dataclass
class MiningResult:
    within: WithinPairs
    cross: list
    stats: MiningStats


def mine_pairs(config: RunConfig, corpus: Corpus, seed: int) -> MiningResult:
    """Mine P_w and P_c for one seed (pure function of corpus + config + seed)."""
    pool = build_entity_pool(corpus)
    if config.no_within_pairs:
        within = WithinPairs(pairs=(), synthetic={})
    else:
        within = build_within_pairs(
            corpus,
            config.m,
            pool,
            seed=derive_seed(seed, "mine-within"),
            include_entity_aug=not config.no_entity_aug,
        )

    if config.triple_source == "file":
        triples = load_external_triples(config.triples_path, corpus)
    else:
        triples = extract_all_builtin(corpus)
    tbl = build_template_table(triples, config.t)
    sentences = {s.id: s for s in corpus}

    same = same_template_pairs(tbl)
    if (
        config.max_same_template_pairs is not None
        and len(same) > config.max_same_template_pairs
    ):
        raise ConfigurationError(
            f"{len(same)} same-template pairs exceed the configured guard "
            f"({config.max_same_template_pairs})"
        )
    adapter = make_nli_adapter(
        config.nli_mode,
        scores_path=config.nli_scores_path,
        gateway_url=config.gateway_url,
    )
    entailed = mutual_pairs(tbl, sentences, adapter, config.r)

    rewrite_pairs = None
    tbl_rewritten = None
    if config.rewrites_path and not config.no_chatgpt_pairs:
        rewrites = load_rewrites(config.rewrites_path, corpus)
        rewrite_pairs, tbl_rewritten = build_rewrite_pairs(
            rewrites,
            config.t,
            adapter,
            config.r,
            config.f,
            derive_seed(seed, "mine-rewrites"),
            same + entailed,
        )

    cross = [] if config.no_cross_pairs else same + entailed + (rewrite_pairs or [])
    stats = mining_stats(
        tbl, tbl_rewritten, same, entailed, rewrite_pairs, corpus
    )
    return MiningResult(within=within, cross=cross, stats=stats)


def stage_mine(config: RunConfig, corpus: Corpus, seed: int) -> MiningResult:
    result = mine_pairs(config, corpus, seed)
    out = seed_dir(config, seed)
    out.mkdir(parents=True, exist_ok=True)
    dump_pairs(result.within.pairs, out / "pairs_within.jsonl")
    dump_pairs(result.cross, out / "pairs_cross.jsonl")
    _write_json(result.stats.to_json(), out / "mining_stats.json")
    return result


def stage_train(
    config: RunConfig, corpus: Corpus, seed: int, mining: Optional[MiningResult] = None
):
    if config.external_encodings_path:
        raise ConfigurationError(
            "training is disabled with frozen external encodings; "
            "run mine/cluster/evaluate instead"
        )
    mining = mining or mine_pairs(config, corpus, seed)
    params = init_params(
        corpus, config.embedding_dim, config.context_window, derive_seed(seed, "init")
    )
    pool = build_entity_pool(corpus)

    def within_factory(epoch_seed: int) -> WithinPairs:
        return build_within_pairs(
            corpus,
            config.m,
            pool,
            seed=epoch_seed,
            include_entity_aug=not config.no_entity_aug,
        )

    result = train(
        corpus,
        mining.within.pairs,
        mining.cross,
        config.loss_config(seed),
        params,
        m=config.m,
        synthetic=mining.within.synthetic,
        within_factory=None if config.no_within_pairs else within_factory,
    )
    out = seed_dir(config, seed)
    out.mkdir(parents=True, exist_ok=True)
    write_loss_log(result.log, out / "loss_log.csv")
    save_checkpoint(result.state, out / "checkpoint.npz")
    return result


def _vectorizer(config: RunConfig, corpus: Corpus, seed: int) -> Vectorizer:
    if config.external_encodings_path:
        external = load_external_encodings(config.external_encodings_path, corpus)
        return Vectorizer(corpus, m=config.m, external=external)
    checkpoint = seed_dir(config, seed) / "checkpoint.npz"
    if not checkpoint.exists():
        raise StageDependencyError(
            f"no checkpoint at {checkpoint}; run the train stage first"
        )
    state = load_checkpoint(checkpoint)
    return Vectorizer(corpus, m=config.m, params=state.params)


def stage_cluster(config: RunConfig, corpus: Corpus, seed: int) -> dict[str, int]:
    vectorizer = _vectorizer(config, corpus, seed)
    labels = infer_clusters(
        corpus,
        vectorizer,
        config.k,
        seed=derive_seed(seed, "cluster"),
        restarts=config.kmeans_restarts,
    )
    out = seed_dir(config, seed)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "labels.jsonl", "w", encoding="utf-8") as fh:
        for sid in corpus.ids:
            fh.write(json.dumps({"id": sid, "label": labels[sid]}, sort_keys=True))
            fh.write("\n")
    return labels


def load_labels(path) -> dict[str, int]:
    labels: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                labels[obj["id"]] = int(obj["label"])
    return labels


def stage_evaluate(
    config: RunConfig, corpus: Corpus, seed: int, labels: Optional[dict[str, int]] = None
) -> Optional[EvaluationReport]:
    """Score predicted labels against gold. Returns None (and writes a
    skipped marker) when the corpus carries no gold labels at all; errors
    when gold is only partially present."""
    out = seed_dir(config, seed)
    if labels is None:
        path = out / "labels.jsonl"
        if not path.exists():
            raise StageDependencyError(f"no labels at {path}; run the cluster stage")
        labels = load_labels(path)
    missing = [s.id for s in corpus if s.gold_relation is None]
    if len(missing) == len(corpus):
        _write_json(
            {"skipped": "corpus has no gold relations"}, out / "report.json"
        )
        logger.info("evaluation skipped: no gold labels")
        return None
    if missing:
        raise EvaluationError(f"sentences missing gold relations: {missing}")
    pred = [labels[s.id] for s in corpus]
    gold = [s.gold_relation for s in corpus]
    report = evaluate(pred, gold)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        fh.write(report.dumps())
    return report


def _staged(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        logger.error("%s stage failed: %s", stage, exc)
        raise StageError(stage, exc) from exc


def run_seed(config: RunConfig, corpus: Corpus, seed: int) -> Optional[EvaluationReport]:
    mining = _staged("mine", stage_mine, config, corpus, seed)
    if config.external_encodings_path:
        logger.info("external encodings: training disabled, clustering frozen vectors")
    else:
        _staged("train", stage_train, config, corpus, seed, mining)
    labels = _staged("cluster", stage_cluster, config, corpus, seed)
    return _staged("evaluate", stage_evaluate, config, corpus, seed, labels)


def aggregate_reports(reports: dict[int, Optional[EvaluationReport]]) -> dict:
    """Per-seed metric table plus mean and standard deviation rows."""
    scored = {s: r for s, r in reports.items() if r is not None}
    out: dict = {"seeds": sorted(reports)}
    if not scored:
        out["skipped"] = "no gold labels"
        return out
    per_seed = {
        str(seed): {name: getattr(rep, name) for name in EvaluationReport.FIELDS}
        for seed, rep in sorted(scored.items())
    }
    mean = {}
    std = {}
    for name in EvaluationReport.FIELDS:
        values = [getattr(rep, name) for _, rep in sorted(scored.items())]
        mean[name] = statistics.fmean(values)
        std[name] = statistics.pstdev(values) if len(values) > 1 else 0.0
    out["per_seed"] = per_seed
    out["mean"] = mean
    out["std"] = std
    out["mean_x100"] = {k: round(v * 100, 1) for k, v in mean.items()}
    out["std_x100"] = {k: round(v * 100, 1) for k, v in std.items()}
    return out


def run_pipeline(config: RunConfig) -> dict[int, Optional[EvaluationReport]]:
    """Execute every stage for every seed and write the aggregate."""
    config.validate()
    corpus = stage_ingest(config)
    out = Path(config.output_dir)
    _write_json(manifest(config), out / "manifest.json")
    reports: dict[int, Optional[EvaluationReport]] = {}
    if config.parallel_seeds and len(config.seeds) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(4, len(config.seeds))) as pool:
            futures = {
                seed: pool.submit(run_seed, config, corpus, seed)
                for seed in config.seeds
            }
            for seed, future in futures.items():
                reports[seed] = future.result()
    else:
        for seed in config.seeds:
            reports[seed] = run_seed(config, corpus, seed)
    _write_json(aggregate_reports(reports), out / "aggregate.json")
    emit_stats(config)
    return reports


ABLATION_VARIANTS = {
    "full": {},
    "no_entity_aug": {"no_entity_aug": True},
    "no_within_pairs": {"no_within_pairs": True},
    "no_chatgpt_pairs": {"no_chatgpt_pairs": True},
    "no_cross_pairs": {"no_cross_pairs": True},
    "nce_loss": {"nce_for_pairs": True},
}


def run_ablation_suite(config: RunConfig) -> dict:
    """Run every ablation variant with the shared seed set.

    Differences between variants are attributable to the ablated
    component because seeds, corpus, and all other settings are shared.
    Variants that fail are reported as failed; the rest still appear.
    """
    import dataclasses

    config.validate()
    base_out = Path(config.output_dir)
    table: dict = {}
    for name, flags in ABLATION_VARIANTS.items():
        variant = dataclasses.replace(
            config, output_dir=str(base_out / "ablation" / name), **flags
        )
        try:
            reports = run_pipeline(variant)
            table[name] = aggregate_reports(reports)
        except Exception as exc:  # noqa: BLE001 - per-variant isolation
            logger.error("ablation variant %s failed: %s", name, exc)
            table[name] = {"failed": str(exc)}
    _write_json(table, base_out / "ablation_table.json")
    with open(base_out / "ablation_table.txt", "w", encoding="utf-8") as fh:
        fh.write(format_ablation_table(table))
    return table


def format_ablation_table(table: dict) -> str:
    header = (
        f"{'variant':<18}{'B3 P':>8}{'B3 R':>8}{'B3 F1':>8}"
        f"{'V hom':>8}{'V comp':>8}{'V F1':>8}{'ARI':>8}\n"
    )
    lines = [header, "-" * len(header) + "\n"]
    order = ("b3_precision", "b3_recall", "b3_f1", "homogeneity", "completeness", "v_f1", "ari")
    for name, agg in table.items():
        if "mean" not in agg:
            lines.append(f"{name:<18}{agg.get('failed', 'skipped')}\n")
            continue
        cells = "".join(
            f"{agg['mean'][metric] * 100:>8.1f}" for metric in order
        )
        lines.append(f"{name:<18}{cells}\n")
    return "".join(lines)


def emit_stats(config: RunConfig) -> dict:
    """Collect per-seed mining statistics into one table."""
    out = Path(config.output_dir)
    rows = {}
    for seed in config.seeds:
        path = seed_dir(config, seed) / "mining_stats.json"
        if not path.exists():
            raise StageDependencyError(
                f"missing mining artifacts at {path}; run the mine stage first"
            )
        with open(path, "r", encoding="utf-8") as fh:
            rows[str(seed)] = json.load(fh)
    _write_json(rows, out / "stats.json")
    with open(out / "stats.txt", "w", encoding="utf-8") as fh:
        fh.write(format_stats_table(rows))
    return rows


def _fmt_absent(value, scale: float = 1.0, pct: bool = False) -> str:
    if value is None:
        return "absent"
    if pct:
        return f"{value * 100:.1f}%"
    if isinstance(value, float):
        return f"{value * scale:.2f}"
    return str(value)


def format_stats_table(rows: dict) -> str:
    lines = []
    for seed, stats in rows.items():
        lines.append(f"seed {seed}\n")
        lines.append(f"  templates (original):  {stats['template_count']}\n")
        lines.append(
            f"  templates (rewritten): {_fmt_absent(stats['rewritten_template_count'])}\n"
        )
        lines.append(
            f"  avg sentences per template: {stats['avg_sentences_per_template']:.2f}\n"
        )
        lines.append(
            f"  sentences covered: {stats['sentences_covered']} "
            f"({stats['coverage_fraction'] * 100:.1f}%)\n"
        )
        lines.append(f"  {'pair source':<22}{'total':>8}  correct\n")
        for source in ("same_template", "entailed_template", "rewrite_derived"):
            total = stats["pair_counts"][source]
            correct = stats["correct_fractions"][source]
            lines.append(
                f"  {source:<22}{_fmt_absent(total):>8}  "
                f"{_fmt_absent(correct, pct=True)}\n"
            )
        lines.append("\n")
    return "".join(lines)
