"""Command-line interface.

Subcommands: ingest, mine, train, cluster, evaluate, ablate, stats, all.
Flags mirror RunConfig field names in kebab-case and override both the
config file (--config) and RELCLUSTER_* environment variables. Exit
codes identify the failing stage: 0 success, 2 config, 3 ingest, 4 mine,
5 train, 6 cluster, 7 evaluate, 8 stats.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig, THRESHOLD_PRESETS, from_sources, manifest
from .corpus import load_corpus
from .errors import (
    ConfigurationError,
    CorpusError,
    EvaluationError,
    MiningError,
    RelclusterError,
    SchemaError,
    StageDependencyError,
    StageError,
    TrainingError,
)

EXIT_CODES = {
    "config": 2,
    "ingest": 3,
    "mine": 4,
    "train": 5,
    "cluster": 6,
    "evaluate": 7,
    "stats": 8,
}

logger = logging.getLogger(__name__)


def _flag_name(field: str) -> str:
    return "--" + field.replace("_", "-")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(RunConfig):
        name = _flag_name(f.name)
        ftype = str(f.type)
        if "bool" in ftype:
            parser.add_argument(name, dest=f.name, action="store_true", default=None)
        elif f.name in ("seeds", "exemplar_layer_sizes"):
            parser.add_argument(name, dest=f.name, type=int, nargs="+", default=None)
        elif "int" in ftype:
            parser.add_argument(name, dest=f.name, type=int, default=None)
        elif "float" in ftype:
            parser.add_argument(name, dest=f.name, type=float, default=None)
        else:
            parser.add_argument(name, dest=f.name, type=str, default=None)
    parser.add_argument(
        "--threshold-preset",
        choices=sorted(THRESHOLD_PRESETS),
        default=None,
        help="named template-frequency threshold preset (sets --t)",
    )
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("-v", "--verbose", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relcluster",
        description=(
            "Unsupervised relation extraction: mine positive pairs, train "
            "relation representations, cluster, and evaluate."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, help_text in (
        ("ingest", "validate the corpus and write a summary"),
        ("mine", "mine within- and cross-sentence positive pairs"),
        ("train", "train the relation encoder on mined pairs"),
        ("cluster", "cluster relation vectors with K-Means"),
        ("evaluate", "score predicted labels against gold relations"),
        ("ablate", "run the ablation suite over shared seeds"),
        ("stats", "emit mining statistics tables"),
        ("all", "run the full pipeline for every seed"),
    ):
        p = sub.add_parser(command, help=help_text)
        _add_config_flags(p)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    if args.threshold_preset is not None:
        overrides["t"] = THRESHOLD_PRESETS[args.threshold_preset]
    config = from_sources(file_path=args.config, overrides=overrides)
    config.validate()
    return config


def _run_stage(command: str, config: RunConfig) -> int:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    if command == "ablate":
        pipeline.run_ablation_suite(config)
        print((out / "ablation_table.txt").read_text(encoding="utf-8"))
        return 0

    if command == "all":
        reports = pipeline.run_pipeline(config)
        agg = pipeline.aggregate_reports(reports)
        print(json.dumps(agg.get("mean_x100", agg), sort_keys=True, indent=2))
        return 0

    stage = command
    if command == "ingest":
        corpus = pipeline.stage_ingest(config)
        pipeline._write_json(manifest(config), out / "manifest.json")
        print(f"loaded {len(corpus)} sentences, {len(corpus.entity_types)} entity types")
        return 0

    corpus = load_corpus(config.corpus_path)
    if command == "mine":
        for seed in config.seeds:
            pipeline.stage_mine(config, corpus, seed)
        pipeline.emit_stats(config)
        print((out / "stats.txt").read_text(encoding="utf-8"))
    elif command == "train":
        for seed in config.seeds:
            result = pipeline.stage_train(config, corpus, seed)
            final = result.log[-1].mean_total if result.log else float("nan")
            print(f"seed {seed}: final epoch mean loss {final:.6f}")
    elif command == "cluster":
        for seed in config.seeds:
            pipeline.stage_cluster(config, corpus, seed)
            print(f"seed {seed}: labels written")
    elif command == "evaluate":
        reports = {}
        for seed in config.seeds:
            reports[seed] = pipeline.stage_evaluate(config, corpus, seed)
        agg = pipeline.aggregate_reports(reports)
        pipeline._write_json(agg, out / "aggregate.json")
        print(json.dumps(agg.get("mean_x100", agg), sort_keys=True, indent=2))
    elif command == "stats":
        pipeline.emit_stats(config)
        print((out / "stats.txt").read_text(encoding="utf-8"))
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigurationError(f"unknown command {command!r}")
    return 0


_STAGE_ERRORS = (
    (ConfigurationError, "config"),
    (CorpusError, "ingest"),
    (SchemaError, "mine"),
    (MiningError, "mine"),
    (TrainingError, "train"),
    (EvaluationError, "evaluate"),
    (StageDependencyError, "stats"),
)

_COMMAND_STAGE = {
    "ingest": "ingest",
    "mine": "mine",
    "train": "train",
    "cluster": "cluster",
    "evaluate": "evaluate",
    "stats": "stats",
    "all": "config",
    "ablate": "config",
}


def _classify(exc: RelclusterError, command: str) -> str:
    if isinstance(exc, StageError) and exc.stage in EXIT_CODES:
        return exc.stage
    for etype, stage in _STAGE_ERRORS:
        if isinstance(exc, etype):
            if etype is StageDependencyError and command in _COMMAND_STAGE:
                return _COMMAND_STAGE[command]
            return stage
    return _COMMAND_STAGE.get(command, "config")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
    except (ConfigurationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    try:
        return _run_stage(args.command, config)
    except RelclusterError as exc:
        stage = _classify(exc, args.command)
        print(f"{stage} stage failed: {exc}", file=sys.stderr)
        return EXIT_CODES.get(stage, 1)


if __name__ == "__main__":
    sys.exit(main())
