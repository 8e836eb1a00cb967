"""Pipeline configuration: nested dataclasses, YAML files, env overrides.

Defaults are the paper-scale settings; ``desk_profile()`` shrinks the
dimensions roughly fourfold (and the annealing horizon accordingly) so
a full pipeline run finishes in minutes. Any field can be overridden by
a config file or by ``MEDQGEN_<SECTION>__<FIELD>`` environment
variables (double underscore between section and field, e.g.
``MEDQGEN_TRAINING__LR=0.01``; top-level fields use ``MEDQGEN_SEED``).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError

ENV_PREFIX = "MEDQGEN_"


@dataclass
class PathsConfig:
    pairs: str = "data/pairs.jsonl"
    materials: str = "data/materials.txt"
    dictionary: str = "data/dictionary.tsv"
    embeddings: str = "artifacts/embeddings.txt"
    checkpoints: str = "artifacts"
    outputs: str = "outputs"


@dataclass
class DimsConfig:
    embedding: int = 200
    phrase_encoder: int = 300
    context: int = 600
    latent: int = 200
    mlp_hidden: int = 400
    decoder: int = 400
    entity_embedding: int = 50
    tagger_hidden: int = 100


@dataclass
class TrainingConfig:
    batch_size: int = 30
    lr: float = 0.001
    tagger_lr: float = 0.001
    clip_norm: float = 5.0
    anneal_batches: int = 10_000
    generator_epochs: int = 30
    tagger_epochs: int = 20
    tagger_target_accuracy: float = 0.99
    bow_weight: float = 1.0
    use_type_pass: bool = True
    use_entity_pass: bool = True


@dataclass
class DetectorConfig:
    retrieved_texts: int = 10
    pool_window: int = 3
    doc_phrase_len: int = 8
    doc_phrase_stride: int = 4
    bm25_k1: float = 1.2
    bm25_b: float = 0.75


@dataclass
class GenerationConfig:
    n_samples: int = 10
    beam_width: int = 5
    max_phrase_len: int = 30


@dataclass
class EmbeddingConfig:
    window: int = 3
    epochs: int = 3
    negatives: int = 5
    lr: float = 0.025


@dataclass
class SynthConfig:
    n_answers: int = 10
    pairs_per_answer: int = 20
    phrases_per_question: int = 4
    key_phrases_per_answer: int = 3
    key_in_question: int = 2
    n_types: int = 5
    distractor_vocab: int = 24
    filler_vocab: int = 20
    docs_per_answer: int = 4
    background_docs: int = 20
    doc_filler_tokens: int = 10
    key_cooccur: float = 1.0
    distractor_cooccur: float = 0.0


@dataclass
class PipelineConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    dims: DimsConfig = field(default_factory=DimsConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return _build(cls, data, path="")

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def validate(self):
        bad = []
        for section_name in ("dims", "training", "detector", "generation",
                             "embedding", "synth"):
            section = getattr(self, section_name)
            for f in fields(section):
                value = getattr(section, f.name)
                if isinstance(value, bool):
                    continue
                if isinstance(value, int) and value <= 0 and f.name not in (
                        "anneal_batches",):
                    bad.append(f"{section_name}.{f.name}={value}")
                if isinstance(value, float) and value < 0:
                    bad.append(f"{section_name}.{f.name}={value}")
        if self.synth.key_in_question > self.synth.phrases_per_question:
            bad.append("synth.key_in_question>synth.phrases_per_question")
        if bad:
            raise ConfigError("invalid config fields: " + ", ".join(sorted(bad)))

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"config root must be a mapping: {path}")
        return cls.from_dict(data)


def _build(cls, data: dict, path: str):
    valid = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(valid))
    if unknown:
        where = path or "top level"
        raise ConfigError(f"unknown config fields at {where}: {', '.join(unknown)}")
    kwargs = {}
    for name, f in valid.items():
        if name not in data:
            continue
        value = data[name]
        if dataclasses.is_dataclass(f.type) or f.type in _SECTION_TYPES:
            section_cls = _SECTION_TYPES.get(f.type, f.type)
            if not isinstance(value, dict):
                raise ConfigError(f"config section {name!r} must be a mapping")
            kwargs[name] = _build(section_cls, value, f"{path + '.' if path else ''}{name}")
        else:
            kwargs[name] = _coerce(value, f, path)
    return cls(**kwargs)


_SECTION_TYPES = {
    "PathsConfig": PathsConfig,
    "DimsConfig": DimsConfig,
    "TrainingConfig": TrainingConfig,
    "DetectorConfig": DetectorConfig,
    "GenerationConfig": GenerationConfig,
    "EmbeddingConfig": EmbeddingConfig,
    "SynthConfig": SynthConfig,
}


def _coerce(value, f, path):
    target = f.type if isinstance(f.type, type) else {"int": int, "float": float,
                                                      "str": str, "bool": bool}.get(f.type)
    if target is None:
        return value
    if target is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    if target is float and isinstance(value, (int, float)):
        return float(value)
    if target is int:
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"field {path}.{f.name}: expected int, got {value!r}")
        if isinstance(value, float) and value != int(value):
            raise ConfigError(f"field {path}.{f.name}: expected int, got {value!r}")
        return int(value)
    if not isinstance(value, target):
        try:
            return target(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field {path}.{f.name}: {exc}") from exc
    return value


def desk_profile() -> PipelineConfig:
    """Dims divided by ~4 and a short annealing horizon; minutes, not hours."""
    cfg = PipelineConfig()
    cfg.dims = DimsConfig(embedding=50, phrase_encoder=75, context=150,
                          latent=50, mlp_hidden=100, decoder=100,
                          entity_embedding=12, tagger_hidden=25)
    cfg.training.anneal_batches = 500
    cfg.training.tagger_lr = 0.02
    cfg.training.lr = 0.002
    cfg.generation.max_phrase_len = 12
    return cfg


def paper_profile() -> PipelineConfig:
    return PipelineConfig()


PROFILES = {"paper": paper_profile, "desk": desk_profile}


def merge_config_file(base: PipelineConfig, path) -> PipelineConfig:
    """Overlay a (possibly partial) YAML config document onto base."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    merged = base.to_dict()
    _deep_merge(merged, data)
    return PipelineConfig.from_dict(merged)


def _deep_merge(base: dict, update: dict):
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value


def apply_env_overrides(cfg: PipelineConfig, environ=None) -> PipelineConfig:
    """MEDQGEN_SECTION__FIELD=value (or MEDQGEN_SEED=value) overrides."""
    environ = os.environ if environ is None else environ
    data = cfg.to_dict()
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        spec = key[len(ENV_PREFIX):].lower()
        if "__" in spec:
            section, field_name = spec.split("__", 1)
            if section not in data or not isinstance(data[section], dict):
                raise ConfigError(f"unknown config section in {key}")
            if field_name not in data[section]:
                raise ConfigError(f"unknown config field in {key}")
            data[section][field_name] = _parse_env_value(raw)
        else:
            if spec not in data or isinstance(data[spec], dict):
                raise ConfigError(f"unknown top-level config field in {key}")
            data[spec] = _parse_env_value(raw)
    return PipelineConfig.from_dict(data)


def _parse_env_value(raw: str):
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw
