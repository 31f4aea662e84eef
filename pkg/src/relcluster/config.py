"""Run configuration: defaults, JSON schema, env and flag overrides.

Precedence, lowest to highest: built-in defaults, config file values,
environment variables (prefix RELCLUSTER_, upper-cased field names), CLI
flags. The fully resolved config is dumped into the run manifest along
with a content hash, so a run directory pins everything needed to
reproduce it.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigurationError
from .training import LossConfig

CONFIG_VERSION = 1
ENV_PREFIX = "RELCLUSTER_"

# Template-frequency threshold presets; pick with --threshold-preset.
THRESHOLD_PRESETS = {"coarse": 4, "fine": 2}

# Documented search grid for the margin hyperparameter.
MARGIN_GRID = (0.25, 0.5, 0.75, 1.0)

DEFAULT_CLUSTERS = 10

ABLATION_FLAGS = (
    "no_entity_aug",
    "no_within_pairs",
    "no_chatgpt_pairs",
    "no_cross_pairs",
    "nce_for_pairs",
)


@dataclass
class RunConfig:
    # paths
    corpus_path: str = ""
    output_dir: str = "runs/out"
    triples_path: Optional[str] = None
    nli_scores_path: Optional[str] = None
    rewrites_path: Optional[str] = None
    external_encodings_path: Optional[str] = None
    # mining
    m: int = 2
    t: int = 4
    r: float = 0.95
    f: float = 0.10
    k: int = DEFAULT_CLUSTERS
    triple_source: str = "builtin"  # builtin | file
    nli_mode: str = "lexical_stub"  # lexical_stub | offline_file | http_gateway
    gateway_url: Optional[str] = None
    max_same_template_pairs: Optional[int] = None
    # encoder
    embedding_dim: int = 16
    context_window: int = 1
    # training
    margin: float = 0.75
    temperature: float = 0.02
    nce_negatives: int = 10
    exemplar_layer_sizes: Optional[tuple[int, ...]] = None  # default (k, 2k, 4k)
    learning_rate: float = 1e-5
    epochs: int = 5
    batch_size: int = 32
    weight_decay: float = 0.01
    resample_within_pairs: bool = True
    # clustering
    kmeans_restarts: int = 8
    # ablations
    no_entity_aug: bool = False
    no_within_pairs: bool = False
    no_chatgpt_pairs: bool = False
    no_cross_pairs: bool = False
    nce_for_pairs: bool = False
    # execution
    seeds: tuple[int, ...] = (0, 1, 2)
    parallel_seeds: bool = False

    def layer_sizes(self) -> tuple[int, ...]:
        if self.exemplar_layer_sizes is not None:
            return tuple(self.exemplar_layer_sizes)
        return (self.k, 2 * self.k, 4 * self.k)

    def loss_config(self, seed: int) -> LossConfig:
        return LossConfig(
            margin=self.margin,
            temperature=self.temperature,
            nce_negatives=self.nce_negatives,
            use_nce_for_pairs=self.nce_for_pairs,
            exemplar_layer_sizes=self.layer_sizes(),
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=seed,
            weight_decay=self.weight_decay,
            resample_within_pairs=self.resample_within_pairs,
        )

    def validate(self) -> None:
        if not self.corpus_path:
            raise ConfigurationError("corpus_path is required")
        if self.t < 1:
            raise ConfigurationError("t must be >= 1")
        if not (0.0 < self.r <= 1.0):
            raise ConfigurationError("r must be in (0, 1]")
        if not (0.0 < self.f <= 1.0):
            raise ConfigurationError("f must be in (0, 1]")
        if self.k < 2:
            raise ConfigurationError("k must be >= 2")
        if self.m < 1:
            raise ConfigurationError("m must be >= 1")
        if self.embedding_dim < 1 or self.context_window < 0:
            raise ConfigurationError("bad encoder dimensions")
        if self.triple_source not in ("builtin", "file"):
            raise ConfigurationError(f"unknown triple_source {self.triple_source!r}")
        if self.triple_source == "file" and not self.triples_path:
            raise ConfigurationError("triple_source=file requires triples_path")
        if self.nli_mode not in ("lexical_stub", "offline_file", "http_gateway"):
            raise ConfigurationError(f"unknown nli_mode {self.nli_mode!r}")
        if self.nli_mode == "offline_file" and not self.nli_scores_path:
            raise ConfigurationError("nli_mode=offline_file requires nli_scores_path")
        if self.nli_mode == "http_gateway" and not self.gateway_url:
            raise ConfigurationError("nli_mode=http_gateway requires gateway_url")
        if self.no_within_pairs and self.no_cross_pairs:
            raise ConfigurationError("no positive pairs: both pair sources disabled")
        if not self.seeds:
            raise ConfigurationError("need at least one seed")
        # Exercises the LossConfig invariants early.
        self.loss_config(self.seeds[0])

    def to_json(self) -> dict:
        obj = {"config_version": CONFIG_VERSION}
        for f_ in dataclasses.fields(self):
            value = getattr(self, f_.name)
            if isinstance(value, tuple):
                value = list(value)
            obj[f_.name] = value
        return obj


_TUPLE_FIELDS = {"seeds", "exemplar_layer_sizes"}
_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    """Parse an env-var or flag string into the field's type."""
    if raw.lower() in ("none", "null"):
        return None
    if name in _TUPLE_FIELDS:
        return tuple(int(x) for x in raw.replace(",", " ").split())
    ftype = _FIELD_TYPES.get(name, "str")
    if "bool" in str(ftype):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"cannot parse boolean {name}={raw!r}")
    if "int" in str(ftype):
        return int(raw)
    if "float" in str(ftype):
        return float(raw)
    return raw


def from_sources(
    file_path=None, env: Optional[dict] = None, overrides: Optional[dict] = None
) -> RunConfig:
    """Resolve a RunConfig from file, environment, and explicit overrides."""
    values: dict = {}
    if file_path is not None:
        with open(file_path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        version = loaded.pop("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigurationError(f"unsupported config_version {version}")
        unknown = set(loaded) - set(_FIELD_TYPES)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        values.update(loaded)
    env = dict(os.environ if env is None else env)
    for name in _FIELD_TYPES:
        key = ENV_PREFIX + name.upper()
        if key in env:
            values[name] = _coerce(name, env[key])
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    for name in _TUPLE_FIELDS:
        if values.get(name) is not None:
            values[name] = tuple(values[name])
    config = RunConfig(**values)
    return config


def config_hash(config: RunConfig) -> str:
    payload = json.dumps(config.to_json(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def manifest(config: RunConfig) -> dict:
    import numpy

    from . import __version__

    return {
        "config": config.to_json(),
        "config_hash": config_hash(config),
        "versions": {
            "relcluster": __version__,
            "numpy": numpy.__version__,
        },
        "presets": {
            "template_threshold": THRESHOLD_PRESETS,
            "margin_grid": list(MARGIN_GRID),
            "clusters": DEFAULT_CLUSTERS,
        },
    }
