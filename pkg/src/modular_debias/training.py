"""Optimization loops for adapter pretraining, task finetuning and fusion training."""

import hashlib
import json
import logging
import math
import time
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .artifacts import fingerprint, write_json_atomic
from .corpus import MASK_ID, PAD_ID, Corpus, Vocabulary
from .datasets import HEAD_FOR_TASK, MlmData, TaskData, TaskType, pad_batch
from .exceptions import (
    ConfigError,
    FingerprintMismatchError,
    InputFileError,
    ModelConfigError,
    ModularDebiasError,
    TrainingError,
)
from .tinylm import TinyLM, WiringMode

logger = logging.getLogger(__name__)

IGNORE_INDEX = -100
MASK_REPLACE_RATIO = 0.8
RANDOM_REPLACE_RATIO = 0.1
DEFAULT_LOG_EVERY = 50
ADAPTER_DROP_GRID = (0.2, 0.4, 0.6, 0.8)
ADAPTER_DROP_PICK = 0.6
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, schedule and masking settings for one training run."""

    learning_rate: float = 3e-5
    epochs: int = 2
    batch_size: int = 32
    scheduler: Literal["cosine"] = "cosine"
    warmup_ratio: float = 0.1
    optimizer: Literal["adamw"] = "adamw"
    weight_decay: float = 0.0
    mlm_probability: float = 0.15
    seed: int = 0
    adapter_drop_prob: float = 0.0
    max_grad_norm: float = 1.0
    max_steps: int | None = None

    def __post_init__(self) -> None:
        """Validate ranges.

        Raises:
            ConfigError: If a setting is out of range

        """
        checks = [
            (0 < self.mlm_probability < 1, "mlm_probability must lie in (0, 1)"),
            (0 <= self.warmup_ratio < 1, "warmup_ratio must lie in [0, 1)"),
            (0 <= self.adapter_drop_prob < 1, "adapter_drop_prob must lie in [0, 1)"),
            (self.learning_rate > 0, "learning_rate must be positive"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.max_grad_norm > 0, "max_grad_norm must be positive"),
            (self.max_steps is None or self.max_steps >= 1, "max_steps must be >= 1"),
            (self.scheduler == "cosine", "only the cosine scheduler is supported"),
            (self.optimizer == "adamw", "only the adamw optimizer is supported"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        return asdict(self)


# Full-scale settings; desk-scale runs keep the smaller default batch.
DBA_PRESET = TrainConfig(learning_rate=3e-5, epochs=2, batch_size=512)
TASK_PRESET = TrainConfig(learning_rate=2e-5, epochs=10, batch_size=512)
TRAINING_PRESETS = {"dba": DBA_PRESET, "task": TASK_PRESET}


def derive_seed(seed: int, label: str) -> int:
    """Derive an independent 63-bit seed for one named random stream."""
    digest = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def warmup_steps(total_steps: int, warmup_ratio: float) -> int:
    """Number of linear warmup steps, ``ceil(ratio * total)``."""
    return math.ceil(warmup_ratio * total_steps)


def lr_at(step: int, total_steps: int, base_lr: float, warmup_ratio: float = 0.1) -> float:
    """Learning rate at 0-indexed step: linear warmup, then cosine decay to 0."""
    warm = warmup_steps(total_steps, warmup_ratio)
    if step < warm:
        return base_lr * (step + 1) / warm
    if total_steps <= warm:
        return base_lr
    progress = min((step - warm) / (total_steps - warm), 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def mask_tokens(
    ids: np.ndarray,
    vocab_size: int,
    first_regular_id: int,
    probability: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Select prediction targets among regular tokens and corrupt them 80/10/10.

    Args:
        ids: Token ids (any shape)
        vocab_size: Number of ids random replacements are drawn below
        first_regular_id: Ids below this are special and never selected
        probability: Chance of selecting each regular token
        rng: Random stream

    Returns:
        Corrupted ids and labels (original id at targets, IGNORE_INDEX elsewhere)

    """
    selected = (rng.random(ids.shape) < probability) & (ids >= first_regular_id)
    action = rng.random(ids.shape)
    random_ids = rng.integers(first_regular_id, max(vocab_size, first_regular_id + 1), ids.shape)
    inputs = ids.copy()
    to_mask = selected & (action < MASK_REPLACE_RATIO)
    to_random = selected & (action >= MASK_REPLACE_RATIO) & (
        action < MASK_REPLACE_RATIO + RANDOM_REPLACE_RATIO
    )
    inputs[to_mask] = MASK_ID
    inputs[to_random] = random_ids[to_random]
    labels = np.where(selected, ids, IGNORE_INDEX)
    return inputs, labels


def _epoch_order(size: int, seed: int, epoch: int, *, shuffle: bool) -> np.ndarray:
    if not shuffle:
        return np.arange(size)
    return np.random.default_rng(derive_seed(seed, f"shuffle:{epoch}")).permutation(size)


def _mlm_epoch(
    encoded: Sequence[Sequence[int]],
    vocab_size: int,
    first_regular_id: int,
    cfg: TrainConfig,
    epoch: int,
    *,
    shuffle: bool = True,
) -> Iterator[tuple[Tensor, Tensor]]:
    order = _epoch_order(len(encoded), cfg.seed, epoch, shuffle=shuffle)
    rng = np.random.default_rng(derive_seed(cfg.seed, f"mlm:{epoch}"))
    for start in range(0, len(order), cfg.batch_size):
        ids, _ = pad_batch([encoded[i] for i in order[start : start + cfg.batch_size]])
        inputs, labels = mask_tokens(
            ids.numpy(), vocab_size, first_regular_id, cfg.mlm_probability, rng
        )
        yield torch.from_numpy(inputs), torch.from_numpy(labels)


def mlm_batches(
    corpus: Corpus,
    vocab: Vocabulary,
    cfg: TrainConfig,
    *,
    max_len: int = 32,
    epoch: int = 0,
    shuffle: bool = True,
) -> Iterator[tuple[Tensor, Tensor]]:
    """Yield masked (input ids, label ids) batches for one epoch of a corpus.

    Padding positions stay PAD in the inputs, so the attention mask is
    ``input_ids != PAD_ID``.
    """
    encoded = MlmData(corpus).encode(vocab, max_len)
    yield from _mlm_epoch(encoded, len(vocab), vocab.first_regular_id, cfg, epoch, shuffle=shuffle)


def adapter_drop_hook(cfg: TrainConfig, total_steps: int, num_layers: int) -> np.ndarray:
    """Per-step, per-block skip flags for the task adapter ([steps, layers] booleans)."""
    if cfg.adapter_drop_prob == 0:
        return np.zeros((total_steps, num_layers), dtype=bool)
    rng = np.random.default_rng(derive_seed(cfg.seed, "adapter_drop"))
    return rng.random((total_steps, num_layers)) < cfg.adapter_drop_prob


@dataclass
class RunManifest:
    """Provenance of one training run, stored next to its checkpoint."""

    config: dict[str, Any]
    wiring: dict[str, Any]
    fingerprints: dict[str, str]
    seed: int
    wall_clock_seconds: float
    final_losses: dict[str, float | None]
    checkpoint_path: str | None = None
    epoch_losses: list[float] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)
    version: int = MANIFEST_VERSION
    _written: bool = field(default=False, init=False, repr=False, compare=False)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        data = asdict(self)
        data.pop("_written")
        return data

    def write(self, path: Path) -> None:
        """Write the manifest; a manifest object is written at most once.

        Raises:
            ModularDebiasError: If this manifest was already written

        """
        if self._written:
            msg = "Run manifest already written"
            raise ModularDebiasError(msg)
        write_json_atomic(path, self.to_dict())
        self._written = True
        logger.info("Wrote run manifest %s", path)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunManifest":
        """Restore from :meth:`to_dict` output."""
        return cls(**{k: v for k, v in data.items() if k != "_written"})


def load_run_manifest(path: Path, datasets: Mapping[str, TaskData] | None = None) -> RunManifest:
    """Read a manifest and, if datasets are given, verify their fingerprints.

    Raises:
        InputFileError: If the manifest does not exist
        FingerprintMismatchError: If a dataset changed since the run

    """
    if not path.is_file():
        raise InputFileError(path)
    manifest = RunManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))
    for name, data in (datasets or {}).items():
        recorded = manifest.fingerprints.get(name)
        actual = fingerprint(data.canonical_bytes())
        if recorded != actual:
            msg = f"Dataset {name!r} fingerprint {actual} does not match recorded {recorded}"
            raise FingerprintMismatchError(msg)
    return manifest


def _check_task(model: TinyLM, data: TaskData) -> None:
    expected = HEAD_FOR_TASK[data.task_type]
    if model.head_kind != expected:
        msg = f"{data.task_type} data needs a {expected} head, model has {model.head_kind}"
        raise ModelConfigError(msg)


def _targets(data: TaskData) -> list[float]:
    return [] if isinstance(data, MlmData) else data.targets()


def _task_loss(
    model: TinyLM,
    data_type: TaskType,
    inputs: Tensor,
    targets: Tensor,
    skip: Sequence[bool] | None,
) -> Tensor:
    attention_mask = inputs != PAD_ID
    if data_type == TaskType.MLM:
        logits = model(inputs, attention_mask, skip_task_adapter=skip)
        summed = F.cross_entropy(
            logits.reshape(-1, logits.shape[-1]),
            targets.reshape(-1),
            ignore_index=IGNORE_INDEX,
            reduction="sum",
        )
        count = int((targets != IGNORE_INDEX).sum())
        return summed / max(count, 1)
    output = model(inputs, attention_mask, skip_task_adapter=skip, return_logits=True)
    if data_type == TaskType.REGRESSION:
        return F.mse_loss(output, targets.to(output.dtype))
    return F.binary_cross_entropy_with_logits(output, targets.to(output.dtype))


def _epoch_batches(
    data: TaskData,
    encoded: list[list[int]],
    targets: list[float],
    vocab: Vocabulary,
    cfg: TrainConfig,
    epoch: int,
) -> Iterator[tuple[Tensor, Tensor]]:
    if data.task_type == TaskType.MLM:
        yield from _mlm_epoch(encoded, len(vocab), vocab.first_regular_id, cfg, epoch)
        return
    order = _epoch_order(len(encoded), cfg.seed, epoch, shuffle=True)
    for start in range(0, len(order), cfg.batch_size):
        chunk = order[start : start + cfg.batch_size]
        ids, _ = pad_batch([encoded[i] for i in chunk])
        yield ids, torch.tensor([targets[i] for i in chunk], dtype=torch.float32)


def train(  # noqa: PLR0913
    model: TinyLM,
    mode: WiringMode,
    data: TaskData,
    cfg: TrainConfig,
    vocab: Vocabulary,
    *,
    log_every: int = DEFAULT_LOG_EVERY,
    extra: dict[str, Any] | None = None,
) -> tuple[TinyLM, RunManifest]:
    """Train the parameters a wiring mode selects and freeze everything else.

    Args:
        model: Model with the components the mode needs
        mode: Wiring mode (selects active adapters and trainable parameters)
        data: Dataset whose task type matches the model head
        cfg: Training configuration
        vocab: Vocabulary used to encode data
        log_every: Steps between progress log lines
        extra: Additional manifest fields (e.g. the resolved CLI config)

    Returns:
        The trained model (in eval mode) and the run manifest

    Raises:
        ModelConfigError: If the data does not match the head or the mode the model
        TrainingError: If the loss becomes non-finite

    """
    _check_task(model, data)
    model.set_wiring(mode)
    trainable = model.trainable_names(mode)
    model.freeze_except(trainable)
    params = [p for name, p in model.named_parameters() if name in trainable]
    optimizer = torch.optim.AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    torch.manual_seed(derive_seed(cfg.seed, "torch"))

    encoded = data.encode(vocab, model.config.max_seq_len)
    targets = _targets(data)
    steps_per_epoch = math.ceil(len(encoded) / cfg.batch_size)
    total_steps = cfg.max_steps if cfg.max_steps is not None else cfg.epochs * steps_per_epoch
    if steps_per_epoch == 0:
        logger.warning("Training data is empty, nothing to do")
        total_steps = 0
    drop_schedule = adapter_drop_hook(cfg, total_steps, model.config.num_layers)
    logger.info(
        "Training %s: %d trainable tensors, %d steps (%d per epoch)",
        mode.kind,
        len(params),
        total_steps,
        steps_per_epoch,
    )

    started = time.monotonic()
    model.train()
    step = 0
    epoch = 0
    epoch_losses: list[float] = []
    last_loss: float | None = None
    while step < total_steps:
        losses: list[float] = []
        for inputs, batch_targets in _epoch_batches(data, encoded, targets, vocab, cfg, epoch):
            if step >= total_steps:
                break
            lr = lr_at(step, total_steps, cfg.learning_rate, cfg.warmup_ratio)
            for param_group in optimizer.param_groups:
                param_group["lr"] = lr
            skip = drop_schedule[step].tolist() if mode.task_adapter else None
            loss = _task_loss(model, data.task_type, inputs, batch_targets, skip)
            if not torch.isfinite(loss):
                msg = f"Non-finite loss {loss.item()}"
                raise TrainingError(msg, step, lr)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, cfg.max_grad_norm)
            optimizer.step()
            last_loss = loss.item()
            losses.append(last_loss)
            if log_every and step % log_every == 0:
                logger.info("step %d: loss %.4f, lr %.3e", step, last_loss, lr)
            step += 1
        if losses:
            epoch_losses.append(float(np.mean(losses)))
            logger.info("epoch %d: mean loss %.4f", epoch, epoch_losses[-1])
        epoch += 1
    model.eval()

    manifest = RunManifest(
        config=cfg.to_dict(),
        wiring=mode.to_dict(),
        fingerprints={"train": fingerprint(data.canonical_bytes())},
        seed=cfg.seed,
        wall_clock_seconds=round(time.monotonic() - started, 3),
        final_losses={
            "epoch_mean": epoch_losses[-1] if epoch_losses else None,
            "last_step": last_loss,
        },
        epoch_losses=epoch_losses,
        extra=dict(extra or {}),
    )
    return model, manifest


def predict(model: TinyLM, data: TaskData, vocab: Vocabulary, batch_size: int = 64) -> np.ndarray:
    """Model outputs for every regression pair or classification text, in order.

    Raises:
        ModelConfigError: If the data does not match the head or is MLM data

    """
    _check_task(model, data)
    if isinstance(data, MlmData):
        msg = "predict() needs regression or classification data"
        raise ModelConfigError(msg)
    encoded = data.encode(vocab, model.config.max_seq_len)
    model.eval()
    outputs: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(encoded), batch_size):
            ids, mask = pad_batch(encoded[start : start + batch_size])
            outputs.append(model(ids, mask).double().numpy())
    return np.concatenate(outputs) if outputs else np.zeros(0)


def with_overrides(cfg: TrainConfig, **overrides: Any) -> TrainConfig:  # noqa: ANN401
    """Copy cfg with the non-None overrides applied."""
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
