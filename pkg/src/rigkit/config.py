"""Pipeline configuration: one YAML file, validated, with endpoint overrides from the environment."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .rec.train import DROPOUTS, L2_COEFS, LEARNING_RATES, LOSSES, OPTIMIZERS, EncoderConfig
from .synth import SyntheticSpec

ENV_URLS = {
    "generator": "RIGKIT_GENERATOR_URL",
    "scorer": "RIGKIT_SCORER_URL",
    "embedder": "RIGKIT_EMBEDDER_URL",
}


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Paths(_Section):
    sessions: str = "sessions.jsonl"
    workdir: str = "work"
    reports: str = "reports"
    models: str = "models"


class HttpSettings(_Section):
    url: Optional[str] = None
    timeout: float = Field(default=30.0, gt=0)
    retries: int = Field(default=3, ge=1)
    backoff: float = Field(default=0.5, ge=0)


class GeneratorSettings(HttpSettings):
    kind: Literal["mock", "http"] = "mock"
    seed: int = 0
    max_tokens: int = Field(default=256, ge=1)
    temperature: float = Field(default=0.0, ge=0)


class ScorerSettings(HttpSettings):
    kind: Literal["mock", "http"] = "mock"
    seed: int = 0


class EmbedderSettings(HttpSettings):
    kind: Literal["hash", "http"] = "hash"
    dim: int = Field(default=64, ge=1)


class Backends(_Section):
    generator: GeneratorSettings = GeneratorSettings()
    concept_generator: Optional[GeneratorSettings] = None
    scorer: ScorerSettings = ScorerSettings()
    embedder: EmbedderSettings = EmbedderSettings()
    # JSON manifest with "mock" lookup tables, as written by the synth command
    mock_tables: Optional[str] = None
    parallelism: int = Field(default=4, ge=1)


class RelationSettings(_Section):
    threshold: float = Field(default=0.9, ge=0.0, le=1.0)
    include_within_session: bool = True
    include_shared_concept: bool = True
    max_pairs_per_intention: int = Field(default=50, ge=1)
    seed: int = 0


class MetapathSettings(_Section):
    min_paths: int = Field(default=6, ge=1)


class TripletSettings(_Section):
    enabled: bool = False
    margin: float = Field(default=0.2, ge=0)
    lr: float = Field(default=1e-3, gt=0)
    steps_per_eval: int = Field(default=50, ge=1)
    max_evals: int = Field(default=20, ge=1)
    patience: int = Field(default=3, ge=1)


class RecoverySettings(_Section):
    hidden: int = Field(default=128, ge=2)
    noise: int = Field(default=10, ge=1)
    temperature: float = Field(default=0.1, gt=0)
    lr: float = Field(default=1e-3, gt=0)
    steps: int = Field(default=300, ge=1)


class EvalSettings(_Section):
    seed: int = 0
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    intention_negatives: int = Field(default=30, ge=1)
    concept_pool: int = Field(default=500, ge=1)
    recovery_negatives: int = Field(default=10, ge=1)
    triplet: TripletSettings = TripletSettings()
    recovery: RecoverySettings = RecoverySettings()

    @field_validator("ratios")
    @classmethod
    def _ratios(cls, v):
        if min(v) < 0 or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("ratios must be non-negative and sum to 1")
        return v


class RecSettings(_Section):
    d: int = Field(default=64, ge=1)
    layers: int = Field(default=2, ge=0)
    blocks: int = Field(default=1, ge=0)
    heads: int = Field(default=1, ge=1)
    max_len: int = Field(default=50, ge=1)
    dropout: float = 0.0
    lr: float = 1e-2
    loss: str = "CE"
    l2: float = 0.0
    optimizer: str = "sgd"
    batch_size: int = Field(default=128, ge=1)
    max_epochs: int = Field(default=30, ge=1)
    patience: int = Field(default=3, ge=1)
    seed: int = 0
    ablation_seeds: list[int] = [0, 1, 2, 3, 4]
    split_seed: int = 0
    cutoffs: list[int] = [5, 10, 20, 50, 100]
    # build the item graph from training-split session pairs only
    train_only_item_graph: bool = True

    @model_validator(mode="after")
    def _grid(self):
        for name, value, grid in (("dropout", self.dropout, DROPOUTS), ("lr", self.lr, LEARNING_RATES),
                                  ("loss", self.loss, LOSSES), ("l2", self.l2, L2_COEFS),
                                  ("optimizer", self.optimizer, OPTIMIZERS)):
            if value not in grid:
                raise ValueError(f"rec.{name} must be one of {list(grid)}")
        if not self.ablation_seeds:
            raise ValueError("rec.ablation_seeds must not be empty")
        if any(k < 1 for k in self.cutoffs):
            raise ValueError("rec.cutoffs must be positive")
        return self

    def encoder_config(self, seed: int | None = None) -> EncoderConfig:
        fields = self.model_dump(exclude={"ablation_seeds", "split_seed", "cutoffs", "train_only_item_graph"})
        if seed is not None:
            fields["seed"] = seed
        return EncoderConfig(**fields)


class SynthSettings(_Section):
    n_themes: int = 3
    items_per_theme: int = 200
    n_sessions: int = 5000
    min_len: int = 3
    max_len: int = 8
    noise: float = 0.1
    groups_per_theme: int = 10
    intentions_per_group: int = 2
    popularity_skew: float = 1.0
    seed: int = 7

    def spec(self) -> SyntheticSpec:
        return SyntheticSpec(**self.model_dump())


class PipelineConfig(_Section):
    paths: Paths = Paths()
    backends: Backends = Backends()
    relations: RelationSettings = RelationSettings()
    metapath: MetapathSettings = MetapathSettings()
    eval: EvalSettings = EvalSettings()
    rec: RecSettings = RecSettings()
    synth: SynthSettings = SynthSettings()

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Copy with every named seed replaced by ``seed``."""
        data = self.model_dump()
        for section in ("relations", "eval", "synth"):
            data[section]["seed"] = seed
        data["rec"]["seed"] = seed
        data["rec"]["split_seed"] = seed
        data["backends"]["generator"]["seed"] = seed
        data["backends"]["scorer"]["seed"] = seed
        if data["backends"]["concept_generator"]:
            data["backends"]["concept_generator"]["seed"] = seed
        return PipelineConfig.model_validate(data)

    def echo(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        return config_hash(self.echo())


def config_hash(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def apply_env(config: PipelineConfig, environ=None) -> PipelineConfig:
    """Endpoints come from RIGKIT_*_URL when set; nothing else is read from the environment."""
    environ = os.environ if environ is None else environ
    data = config.model_dump()
    for name, var in ENV_URLS.items():
        if environ.get(var):
            data["backends"][name]["url"] = environ[var]
    return PipelineConfig.model_validate(data)


def load_config(path: str | Path | None, environ=None) -> tuple[PipelineConfig, Path]:
    """Parse and validate a config file; returns the config and the directory paths resolve against."""
    if path is None:
        return apply_env(PipelineConfig(), environ), Path.cwd()
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        config = PipelineConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return apply_env(config, environ), path.resolve().parent


def dump_config(config: PipelineConfig) -> str:
    return yaml.safe_dump(config.echo(), sort_keys=True)
