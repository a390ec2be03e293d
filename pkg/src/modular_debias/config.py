"""Run configuration: TOML file, environment and command-line overrides."""

import logging
import os
import tomllib
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .cda_pipeline import DEFAULT_THRESHOLDS
from .corpus import DEFAULT_MAX_VOCAB, BiasDimension
from .datasets import MAX_SIMILARITY
from .exceptions import ConfigError, InputFileError
from .tinylm import EncoderConfig
from .training import TRAINING_PRESETS, TrainConfig

logger = logging.getLogger(__name__)

SEED_ENV = "MAFIA_SEED"
CONFLICT_POLICIES = ("raise", "skip")
CROWS_REDUCTIONS = ("log", "raw")


@dataclass(frozen=True)
class PipelineConfig:
    """Pair extraction, proposal and filtering."""

    dimension: str = "gender"
    property_allowlist: tuple[str, ...] = ()
    proposer_retries: int = 3
    proposer_retry_delay: float = 1.0
    threshold_gender: float = DEFAULT_THRESHOLDS[BiasDimension.GENDER]
    threshold_race: float = DEFAULT_THRESHOLDS[BiasDimension.RACE]
    threshold_religion: float = DEFAULT_THRESHOLDS[BiasDimension.RELIGION]
    threshold_profession: float = DEFAULT_THRESHOLDS[BiasDimension.PROFESSION]
    on_conflict: str = "skip"

    def __post_init__(self) -> None:
        """Validate the dimension and conflict policy.

        Raises:
            ConfigError: On an unknown dimension or policy

        """
        BiasDimension.parse(self.dimension)
        if self.on_conflict not in CONFLICT_POLICIES:
            msg = (
                f"pipeline.on_conflict must be one of {CONFLICT_POLICIES}, "
                f"got {self.on_conflict!r}"
            )
            raise ConfigError(msg)

    def thresholds(self) -> dict[BiasDimension, float]:
        """Per-dimension frequency thresholds."""
        return {d: getattr(self, f"threshold_{d.value}") for d in BiasDimension}


@dataclass(frozen=True)
class ModelConfig:
    """Toy encoder and adapter sizes."""

    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ff_dim: int = 128
    max_vocab: int = DEFAULT_MAX_VOCAB
    max_seq_len: int = 32
    reduction_factor: int = 16


@dataclass(frozen=True)
class TrainingConfig:
    """Optimizer and schedule; ``max_steps = 0`` means epochs decide the length."""

    learning_rate: float = 3e-5
    epochs: int = 2
    batch_size: int = 32
    warmup_ratio: float = 0.1
    weight_decay: float = 0.0
    mlm_probability: float = 0.15
    seed: int = 0
    adapter_drop_prob: float = 0.0
    max_grad_norm: float = 1.0
    max_steps: int = 0
    log_every: int = 50


@dataclass(frozen=True)
class EvaluationConfig:
    """Metric settings."""

    alpha: float = 1.0
    power: float = -5.0
    crows_reduce: str = "log"
    batch_size: int = 64
    similarity_scale: float = MAX_SIMILARITY

    def __post_init__(self) -> None:
        """Validate the CrowS reduction.

        Raises:
            ConfigError: On an unknown reduction

        """
        if self.crows_reduce not in CROWS_REDUCTIONS:
            msg = (
                f"evaluation.crows_reduce must be one of {CROWS_REDUCTIONS}, "
                f"got {self.crows_reduce!r}"
            )
            raise ConfigError(msg)


@dataclass(frozen=True)
class PathsConfig:
    """Default locations; empty strings select the shipped assets.

    ``pairs_dir`` holds ``<dimension>.tsv`` pair lists read in place of the shipped ones.
    """

    out: str = "run"
    pairs_dir: str = ""
    templates: str = ""


SECTIONS = ("pipeline", "model", "training", "evaluation", "paths")


@dataclass(frozen=True)
class CliConfig:
    """Resolved configuration of one command."""

    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def to_dict(self) -> dict[str, Any]:
        """Serialize for run manifests."""
        return asdict(self)

    def train_config(self) -> TrainConfig:
        """Training settings as a :class:`TrainConfig`.

        Raises:
            ConfigError: If a value is out of range

        """
        t = self.training
        return TrainConfig(
            learning_rate=t.learning_rate,
            epochs=t.epochs,
            batch_size=t.batch_size,
            warmup_ratio=t.warmup_ratio,
            weight_decay=t.weight_decay,
            mlm_probability=t.mlm_probability,
            seed=t.seed,
            adapter_drop_prob=t.adapter_drop_prob,
            max_grad_norm=t.max_grad_norm,
            max_steps=t.max_steps or None,
        )

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        """Encoder settings for a vocabulary of the given size."""
        m = self.model
        return EncoderConfig(
            num_layers=m.num_layers,
            hidden_dim=m.hidden_dim,
            num_heads=m.num_heads,
            ff_dim=m.ff_dim,
            vocab_size=vocab_size,
            max_seq_len=m.max_seq_len,
            seed=self.training.seed,
        )


def _coerce(section: str, key: str, default: Any, value: Any) -> Any:  # noqa: ANN401
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, int | float) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    elif isinstance(default, tuple) and isinstance(value, list | tuple):
        if all(isinstance(v, str) for v in value):
            return tuple(value)
    msg = f"{where}: expected {type(default).__name__}, got {value!r}"
    raise ConfigError(msg)


def _parse_text(default: Any, text: str) -> Any:  # noqa: ANN401
    if isinstance(default, bool):
        lowered = text.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        return text
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        return text
    if isinstance(default, tuple):
        return [part.strip() for part in text.split(",") if part.strip()]
    return text


def _apply(config: CliConfig, section: str, values: Mapping[str, Any]) -> CliConfig:
    if section not in SECTIONS:
        msg = f"Unknown configuration section [{section}]"
        raise ConfigError(msg)
    current = getattr(config, section)
    known = {f.name: getattr(current, f.name) for f in fields(current)}
    updates = {}
    for key, value in values.items():
        if key not in known:
            msg = f"Unknown configuration key {section}.{key}"
            raise ConfigError(msg)
        updates[key] = _coerce(section, key, known[key], value)
    return replace(config, **{section: replace(current, **updates)})


def _split_key(dotted: str) -> tuple[str, str]:
    section, _, key = dotted.partition(".")
    if not key:
        msg = f"Expected section.key, got {dotted!r}"
        raise ConfigError(msg)
    return section, key


def parse_assignment(config: CliConfig, assignment: str) -> tuple[str, str, Any]:
    """Parse ``section.key=value`` using the field's type.

    Raises:
        ConfigError: On malformed text or an unknown key

    """
    dotted, sep, text = assignment.partition("=")
    if not sep:
        msg = f"Expected section.key=value, got {assignment!r}"
        raise ConfigError(msg)
    section, key = _split_key(dotted.strip())
    if section not in SECTIONS:
        msg = f"Unknown configuration section [{section}]"
        raise ConfigError(msg)
    current = getattr(config, section)
    if not hasattr(current, key):
        msg = f"Unknown configuration key {section}.{key}"
        raise ConfigError(msg)
    return section, key, _parse_text(getattr(current, key), text)


def read_config_file(path: Path) -> dict[str, Any]:
    """Read a TOML configuration document.

    Raises:
        InputFileError: If the file does not exist
        ConfigError: If it is not valid TOML

    """
    if not path.is_file():
        raise InputFileError(path)
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as e:
        msg = f"Invalid configuration file {path}: {e}"
        raise ConfigError(msg) from e


def preset_values(name: str) -> dict[str, Any]:
    """Training-section values of a named preset.

    Raises:
        ConfigError: On an unknown preset

    """
    if name not in TRAINING_PRESETS:
        msg = f"Unknown training preset {name!r}, expected one of {sorted(TRAINING_PRESETS)}"
        raise ConfigError(msg)
    preset = TRAINING_PRESETS[name]
    return {
        "learning_rate": preset.learning_rate,
        "epochs": preset.epochs,
        "batch_size": preset.batch_size,
    }


def load_config(
    path: Path | None = None,
    *,
    assignments: Iterable[str] = (),
    flags: Mapping[str, Any] | None = None,
    env: Mapping[str, str] | None = None,
    preset: str | None = None,
) -> CliConfig:
    """Resolve configuration: flags > ``MAFIA_SEED`` > file > preset > defaults.

    Args:
        path: Optional TOML file
        assignments: Generic ``section.key=value`` overrides (flag level)
        flags: Dedicated flag values keyed by ``section.key``; None values are ignored
        env: Environment, ``os.environ`` by default
        preset: Training preset replacing the default learning rate, epochs and batch size

    Returns:
        The resolved configuration

    Raises:
        ConfigError: On unknown keys or presets, wrong types or an invalid seed variable

    """
    config = CliConfig()
    if preset is not None:
        config = _apply(config, "training", preset_values(preset))
    if path is not None:
        document = read_config_file(path)
        for section, values in document.items():
            if not isinstance(values, Mapping):
                msg = f"Configuration entry {section!r} must be a table"
                raise ConfigError(msg)
            config = _apply(config, section, values)
    environ = os.environ if env is None else env
    seed_text = environ.get(SEED_ENV)
    if seed_text:
        try:
            seed = int(seed_text)
        except ValueError as e:
            msg = f"{SEED_ENV} must be an integer, got {seed_text!r}"
            raise ConfigError(msg) from e
        config = _apply(config, "training", {"seed": seed})
        logger.debug("Seed %d taken from %s", seed, SEED_ENV)
    for assignment in assignments:
        section, key, value = parse_assignment(config, assignment)
        config = _apply(config, section, {key: value})
    for dotted, value in (flags or {}).items():
        if value is None:
            continue
        section, key = _split_key(dotted)
        config = _apply(config, section, {key: value})
    return config
