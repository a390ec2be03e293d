"""A small masked-language-model encoder with attachable adapters, fusion and heads.

Parameter names are grouped by prefix:

- ``encoder.`` embeddings and transformer blocks
- ``adapters.<name>.<layer>.`` one bottleneck adapter per block and adapter name
- ``fusion.<layer>.`` per-block fusion query/key/value projections
- ``head.`` the single task head (MLM decoder, regression or classifier)

A :class:`WiringMode` selects which adapters run and which prefixes train.
"""

import logging
import math
import re
import zlib
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass
from enum import StrEnum
from typing import Any

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .corpus import PAD_ID
from .exceptions import InputShapeError, ModelConfigError

logger = logging.getLogger(__name__)

DEFAULT_REDUCTION_FACTOR = 16
INIT_STD = 0.02
ADAPTER_UP_INIT_STD = 1e-5
FUSION_VALUE_NOISE = 1e-3
ADAPTER_NAME_PATTERN = re.compile(r"^[A-Za-z0-9_-]+$")
FUSION_SEED_KEY = "fusion"


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder dimensions and initialization seed (toy defaults)."""

    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ff_dim: int = 128
    vocab_size: int = 2048
    max_seq_len: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate dimensions.

        Raises:
            ModelConfigError: If a dimension is not positive or heads do not divide d

        """
        sizes = ("num_layers", "hidden_dim", "num_heads", "ff_dim", "vocab_size", "max_seq_len")
        for name in sizes:
            if getattr(self, name) < 1:
                msg = f"{name} must be positive, got {getattr(self, name)}"
                raise ModelConfigError(msg)
        if self.hidden_dim % self.num_heads:
            msg = f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}"
            raise ModelConfigError(msg)

    def to_dict(self) -> dict[str, int]:
        """Serialize to a plain dict."""
        return asdict(self)


@dataclass(frozen=True)
class AdapterConfig:
    """A bottleneck adapter: LayerNorm, down-projection, SiLU, up-projection, residual."""

    name: str
    reduction_factor: int = DEFAULT_REDUCTION_FACTOR
    activation: str = "silu"

    def __post_init__(self) -> None:
        """Validate the name and reduction factor.

        Raises:
            ModelConfigError: On an unusable name, factor or activation

        """
        if not ADAPTER_NAME_PATTERN.match(self.name):
            msg = f"Adapter name {self.name!r} must match {ADAPTER_NAME_PATTERN.pattern}"
            raise ModelConfigError(msg)
        if self.reduction_factor < 1:
            msg = f"reduction_factor must be >= 1, got {self.reduction_factor}"
            raise ModelConfigError(msg)
        if self.activation != "silu":
            msg = f"Only the silu activation is supported, got {self.activation!r}"
            raise ModelConfigError(msg)

    def bottleneck_dim(self, hidden_dim: int) -> int:
        """Bottleneck width d / r.

        Raises:
            ModelConfigError: If the bottleneck would be empty

        """
        dim = hidden_dim // self.reduction_factor
        if dim < 1:
            msg = (
                f"Adapter {self.name!r}: hidden_dim {hidden_dim} / reduction factor "
                f"{self.reduction_factor} leaves an empty bottleneck"
            )
            raise ModelConfigError(msg)
        return dim

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        return asdict(self)


class HeadKind(StrEnum):
    """Task head attached on top of the encoder."""

    MLM = "mlm"
    REGRESSION = "regression"
    CLASSIFIER = "classifier"


class WiringKind(StrEnum):
    """Which components run and train."""

    DBA_PRETRAIN = "dba_pretrain"
    FULL_FINETUNE = "full_finetune"
    TASK_ADAPTER = "task_adapter"
    FUSION = "fusion"


@dataclass(frozen=True)
class WiringMode:
    """A wiring kind plus the adapters it involves.

    ``adapters`` are the debiasing adapters (stacked in order, or fused in
    FUSION mode); ``task_adapter`` runs after them in every block.
    """

    kind: WiringKind
    adapters: tuple[str, ...] = ()
    task_adapter: str | None = None

    @classmethod
    def dba_pretrain(cls, adapter: str) -> "WiringMode":
        """(a) Train one debiasing adapter with the MLM head."""
        return cls(WiringKind.DBA_PRETRAIN, (adapter,))

    @classmethod
    def full_finetune(
        cls, adapters: Sequence[str] = (), task_adapter: str | None = None
    ) -> "WiringMode":
        """(b) Train every parameter."""
        return cls(WiringKind.FULL_FINETUNE, tuple(adapters), task_adapter)

    @classmethod
    def with_task_adapter(cls, task_adapter: str, adapters: Sequence[str] = ()) -> "WiringMode":
        """(c) Frozen debiasing adapters stacked with a trainable task adapter."""
        return cls(WiringKind.TASK_ADAPTER, tuple(adapters), task_adapter)

    @classmethod
    def fusion(cls, adapters: Sequence[str], task_adapter: str | None = None) -> "WiringMode":
        """(d) Fused debiasing adapters stacked with a task adapter."""
        return cls(WiringKind.FUSION, tuple(adapters), task_adapter)

    @property
    def involved(self) -> tuple[str, ...]:
        """Every adapter name the mode references."""
        return (*self.adapters, self.task_adapter) if self.task_adapter else self.adapters

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        return {
            "kind": self.kind.value,
            "adapters": list(self.adapters),
            "task_adapter": self.task_adapter,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WiringMode":
        """Restore from :meth:`to_dict` output."""
        return cls(WiringKind(data["kind"]), tuple(data["adapters"]), data.get("task_adapter"))


def _seeded_generator(seed: int, key: str = "") -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed((seed + (zlib.crc32(key.encode("utf-8")) if key else 0)) % 2**63)
    return generator


def _init_linear(layer: nn.Linear, generator: torch.Generator, std: float = INIT_STD) -> None:
    with torch.no_grad():
        layer.weight.copy_(torch.randn(layer.weight.shape, generator=generator) * std)
        if layer.bias is not None:
            layer.bias.zero_()


def _init_norm(norm: nn.LayerNorm) -> None:
    with torch.no_grad():
        norm.weight.fill_(1.0)
        norm.bias.zero_()


class SelfAttention(nn.Module):
    """Multi-head self-attention with an explicit key or full attention mask."""

    def __init__(self, hidden_dim: int, num_heads: int) -> None:
        """Create the projections."""
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = hidden_dim // num_heads
        self.query = nn.Linear(hidden_dim, hidden_dim)
        self.key = nn.Linear(hidden_dim, hidden_dim)
        self.value = nn.Linear(hidden_dim, hidden_dim)
        self.output = nn.Linear(hidden_dim, hidden_dim)

    def _split(self, x: Tensor) -> Tensor:
        batch, seq, _ = x.shape
        return x.view(batch, seq, self.num_heads, self.head_dim).transpose(1, 2)

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        """Attend over positions allowed by mask ([b, s, s] boolean).

        A query row whose mask is all False attends to nothing and receives
        only the output bias.
        """
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        allowed = mask.unsqueeze(1)
        scores = scores.masked_fill(~allowed, torch.finfo(scores.dtype).min)
        weights = torch.softmax(scores, dim=-1) * allowed.to(scores.dtype)
        context = (weights @ v).transpose(1, 2).reshape(x.shape)
        return self.output(context)


class EncoderBlock(nn.Module):
    """Post-LayerNorm transformer block."""

    def __init__(self, config: EncoderConfig) -> None:
        """Create the attention and feed-forward sublayers."""
        super().__init__()
        self.attention = SelfAttention(config.hidden_dim, config.num_heads)
        self.attention_norm = nn.LayerNorm(config.hidden_dim)
        self.ff_in = nn.Linear(config.hidden_dim, config.ff_dim)
        self.ff_out = nn.Linear(config.ff_dim, config.hidden_dim)
        self.ff_norm = nn.LayerNorm(config.hidden_dim)

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        """Return the block output after the feed-forward sublayer."""
        h = self.attention_norm(x + self.attention(x, mask))
        return self.ff_norm(h + self.ff_out(F.gelu(self.ff_in(h))))


class Encoder(nn.Module):
    """Token and position embeddings followed by a stack of blocks."""

    def __init__(self, config: EncoderConfig) -> None:
        """Create embeddings and blocks."""
        super().__init__()
        self.token_embedding = nn.Embedding(config.vocab_size, config.hidden_dim)
        self.position_embedding = nn.Embedding(config.max_seq_len, config.hidden_dim)
        self.embedding_norm = nn.LayerNorm(config.hidden_dim)
        self.layers = nn.ModuleList(EncoderBlock(config) for _ in range(config.num_layers))

    def embed(self, input_ids: Tensor) -> Tensor:
        """Embed token ids."""
        positions = torch.arange(input_ids.shape[1], device=input_ids.device)
        return self.embedding_norm(
            self.token_embedding(input_ids) + self.position_embedding(positions)[None]
        )


class Adapter(nn.Module):
    """One bottleneck adapter: ``h + Up(silu(Down(LN(h))))``."""

    def __init__(self, hidden_dim: int, bottleneck_dim: int) -> None:
        """Create the adapter layers."""
        super().__init__()
        self.norm = nn.LayerNorm(hidden_dim)
        self.down = nn.Linear(hidden_dim, bottleneck_dim)
        self.up = nn.Linear(bottleneck_dim, hidden_dim)

    def reset_parameters(self, generator: torch.Generator) -> None:
        """Initialize so a fresh adapter is a near-identity residual."""
        _init_norm(self.norm)
        _init_linear(self.down, generator)
        _init_linear(self.up, generator, ADAPTER_UP_INIT_STD)

    def forward(self, h: Tensor) -> Tensor:
        """Apply the adapter with its residual connection."""
        if h.shape[-1] != self.down.in_features:
            msg = f"Adapter expects hidden size {self.down.in_features}, got {h.shape[-1]}"
            raise InputShapeError(msg)
        return h + self.up(F.silu(self.down(self.norm(h))))


class Fusion(nn.Module):
    """Per-token attention over k adapter outputs."""

    def __init__(self, hidden_dim: int) -> None:
        """Create the query, key and value projections."""
        super().__init__()
        self.query = nn.Linear(hidden_dim, hidden_dim)
        self.key = nn.Linear(hidden_dim, hidden_dim)
        self.value = nn.Linear(hidden_dim, hidden_dim)
        self.scale = 1.0 / math.sqrt(hidden_dim)

    def reset_parameters(self, generator: torch.Generator) -> None:
        """Small random query/key; value starts at identity plus noise."""
        _init_linear(self.query, generator)
        _init_linear(self.key, generator)
        with torch.no_grad():
            noise = torch.randn(self.value.weight.shape, generator=generator) * FUSION_VALUE_NOISE
            self.value.weight.copy_(torch.eye(self.value.in_features) + noise)
            self.value.bias.zero_()

    def forward(
        self, h: Tensor, adapter_outputs: Sequence[Tensor]
    ) -> tuple[Tensor, Tensor]:
        """Return the fused activation and the [b, s, k] fusion weights."""
        if not adapter_outputs:
            msg = "Fusion needs at least one adapter output"
            raise ModelConfigError(msg)
        if any(a.shape != h.shape for a in adapter_outputs):
            msg = "All adapter outputs must share the hidden activation's shape"
            raise InputShapeError(msg)
        stacked = torch.stack(list(adapter_outputs), dim=2)
        scores = torch.einsum("bsd,bskd->bsk", self.query(h), self.key(stacked)) * self.scale
        weights = torch.softmax(scores, dim=-1)
        fused = torch.einsum("bsk,bskd->bsd", weights, self.value(stacked))
        return fused, weights


class MlmHead(nn.Module):
    """Transform plus vocabulary decoder."""

    def __init__(self, config: EncoderConfig) -> None:
        """Create the head layers."""
        super().__init__()
        self.transform = nn.Linear(config.hidden_dim, config.hidden_dim)
        self.norm = nn.LayerNorm(config.hidden_dim)
        self.decoder = nn.Linear(config.hidden_dim, config.vocab_size)

    def forward(self, hidden: Tensor) -> Tensor:
        """Return [b, s, vocab] logits."""
        return self.decoder(self.norm(F.gelu(self.transform(hidden))))


class PooledHead(nn.Module):
    """Scalar head over the first ([CLS]) position."""

    def __init__(self, config: EncoderConfig) -> None:
        """Create the pooler and output layers."""
        super().__init__()
        self.pooler = nn.Linear(config.hidden_dim, config.hidden_dim)
        self.output = nn.Linear(config.hidden_dim, 1)

    def forward(self, hidden: Tensor) -> Tensor:
        """Return one raw score per sequence."""
        return self.output(torch.tanh(self.pooler(hidden[:, 0]))).squeeze(-1)


def _reset_module(module: nn.Module, generator: torch.Generator) -> None:
    for sub in module.modules():
        if isinstance(sub, nn.Linear):
            _init_linear(sub, generator)
        elif isinstance(sub, nn.LayerNorm):
            _init_norm(sub)
        elif isinstance(sub, nn.Embedding):
            with torch.no_grad():
                sub.weight.copy_(torch.randn(sub.weight.shape, generator=generator) * INIT_STD)


class TinyLM(nn.Module):
    """Encoder plus named adapters, optional fusion and one head."""

    def __init__(self, config: EncoderConfig) -> None:
        """Create and seed the bare encoder; attach components with the add_* methods."""
        super().__init__()
        self.config = config
        self.encoder = Encoder(config)
        self.adapters = nn.ModuleDict()
        self.adapter_configs: dict[str, AdapterConfig] = {}
        self.fusion: nn.ModuleList | None = None
        self.fusion_adapters: tuple[str, ...] = ()
        self.head: nn.Module | None = None
        self.head_kind: HeadKind | None = None
        self.wiring = WiringMode.full_finetune()
        _reset_module(self.encoder, _seeded_generator(config.seed))

    # construction

    def add_adapter(self, adapter: AdapterConfig) -> None:
        """Attach a freshly initialized adapter to every block.

        Raises:
            ModelConfigError: If an adapter of that name exists

        """
        if adapter.name in self.adapters:
            msg = f"Adapter {adapter.name!r} already exists"
            raise ModelConfigError(msg)
        bottleneck = adapter.bottleneck_dim(self.config.hidden_dim)
        layers = nn.ModuleList(
            Adapter(self.config.hidden_dim, bottleneck) for _ in range(self.config.num_layers)
        )
        generator = _seeded_generator(self.config.seed, f"adapter:{adapter.name}")
        for layer in layers:
            layer.reset_parameters(generator)
        self.adapters[adapter.name] = layers.to(self._dtype())
        self.adapter_configs[adapter.name] = adapter
        logger.debug("Added adapter %s (bottleneck %d)", adapter.name, bottleneck)

    def add_fusion(self, adapter_names: Sequence[str]) -> None:
        """Attach per-block fusion layers over the named adapters.

        Raises:
            ModelConfigError: If no adapters are named, one is missing, or fusion exists

        """
        names = tuple(adapter_names)
        if not names:
            msg = "Fusion requires at least one adapter"
            raise ModelConfigError(msg)
        self._require_adapters(names)
        if self.fusion is not None:
            msg = "Model already has a fusion layer"
            raise ModelConfigError(msg)
        generator = _seeded_generator(self.config.seed, FUSION_SEED_KEY)
        layers = range(self.config.num_layers)
        fusion = nn.ModuleList(Fusion(self.config.hidden_dim) for _ in layers)
        for layer in fusion:
            layer.reset_parameters(generator)
        self.fusion = fusion.to(self._dtype())
        self.fusion_adapters = names

    def set_head(self, kind: HeadKind | str) -> None:
        """Attach (or replace) the task head."""
        kind = HeadKind(kind)
        head: nn.Module = MlmHead(self.config) if kind == HeadKind.MLM else PooledHead(self.config)
        _reset_module(head, _seeded_generator(self.config.seed, f"head:{kind}"))
        self.head = head.to(self._dtype())
        self.head_kind = kind

    def set_wiring(self, mode: WiringMode) -> None:
        """Select the active wiring after validating it against attached components.

        Raises:
            ModelConfigError: If the mode does not fit the model

        """
        self._require_adapters(mode.involved)
        if mode.task_adapter is not None and mode.task_adapter in mode.adapters:
            msg = f"Adapter {mode.task_adapter!r} cannot be both task and debiasing adapter"
            raise ModelConfigError(msg)
        if mode.kind == WiringKind.DBA_PRETRAIN:
            if len(mode.adapters) != 1 or mode.task_adapter is not None:
                msg = "DBA pretraining trains exactly one adapter and no task adapter"
                raise ModelConfigError(msg)
            if self.head_kind != HeadKind.MLM:
                msg = "DBA pretraining requires the MLM head"
                raise ModelConfigError(msg)
        elif mode.kind == WiringKind.TASK_ADAPTER:
            if mode.task_adapter is None:
                msg = "Task-adapter mode requires a task adapter"
                raise ModelConfigError(msg)
            if self.head_kind in (None, HeadKind.MLM):
                msg = "Task-adapter mode requires a regression or classifier head"
                raise ModelConfigError(msg)
        elif mode.kind == WiringKind.FUSION:
            if not mode.adapters:
                msg = "Fusion mode requires at least one debiasing adapter"
                raise ModelConfigError(msg)
            if self.fusion is None or self.fusion_adapters != mode.adapters:
                msg = f"No fusion layer over adapters {list(mode.adapters)}"
                raise ModelConfigError(msg)
            if self.head is None:
                msg = "Fusion mode requires a task head"
                raise ModelConfigError(msg)
        self.wiring = mode

    def _require_adapters(self, names: Iterable[str]) -> None:
        missing = [n for n in names if n not in self.adapters]
        if missing:
            msg = f"Unknown adapters: {', '.join(missing)}"
            raise ModelConfigError(msg)

    def _dtype(self) -> torch.dtype:
        return self.encoder.token_embedding.weight.dtype

    # parameter bookkeeping

    def trainable_names(self, mode: WiringMode | None = None) -> set[str]:
        """Names of the parameters a wiring mode trains."""
        mode = mode or self.wiring
        names = {name for name, _ in self.named_parameters()}
        if mode.kind == WiringKind.FULL_FINETUNE:
            return names
        prefixes: list[str] = ["head."]
        if mode.kind == WiringKind.DBA_PRETRAIN:
            prefixes.append(f"adapters.{mode.adapters[0]}.")
        if mode.kind == WiringKind.FUSION:
            prefixes.append("fusion.")
        if mode.task_adapter is not None:
            prefixes.append(f"adapters.{mode.task_adapter}.")
        return {n for n in names if n.startswith(tuple(prefixes))}

    def freeze_except(self, names: Iterable[str]) -> None:
        """Set requires_grad on exactly the named parameters."""
        keep = set(names)
        for name, param in self.named_parameters():
            param.requires_grad_(name in keep)

    def parameter_groups(self) -> dict[str, list[str]]:
        """Parameter names by component: encoder, each adapter, fusion, head."""
        groups: dict[str, list[str]] = {}
        for name, _ in self.named_parameters():
            parts = name.split(".")
            group = f"adapters.{parts[1]}" if parts[0] == "adapters" else parts[0]
            groups.setdefault(group, []).append(name)
        return groups

    def describe(self) -> dict[str, Any]:
        """Architecture description stored in checkpoints."""
        return {
            "encoder": self.config.to_dict(),
            "adapters": [self.adapter_configs[n].to_dict() for n in self.adapters],
            "fusion": list(self.fusion_adapters) if self.fusion is not None else None,
            "head": self.head_kind.value if self.head_kind else None,
            "wiring": self.wiring.to_dict(),
        }

    @classmethod
    def from_description(cls, description: dict[str, Any]) -> "TinyLM":
        """Rebuild the architecture (with fresh weights) from :meth:`describe` output."""
        model = cls(EncoderConfig(**description["encoder"]))
        for adapter in description["adapters"]:
            model.add_adapter(AdapterConfig(**adapter))
        if description.get("fusion"):
            model.add_fusion(description["fusion"])
        if description.get("head"):
            model.set_head(description["head"])
        model.set_wiring(WiringMode.from_dict(description["wiring"]))
        return model

    # forward

    def _check_inputs(self, input_ids: Tensor, attention_mask: Tensor | None) -> Tensor:
        if input_ids.dim() != 2:  # noqa: PLR2004
            msg = f"input_ids must be [batch, seq], got shape {tuple(input_ids.shape)}"
            raise InputShapeError(msg)
        batch, seq = input_ids.shape
        if seq > self.config.max_seq_len:
            msg = f"Sequence length {seq} exceeds max_seq_len {self.config.max_seq_len}"
            raise InputShapeError(msg)
        if input_ids.numel() and (
            int(input_ids.min()) < 0 or int(input_ids.max()) >= self.config.vocab_size
        ):
            msg = f"Token ids must lie in [0, {self.config.vocab_size})"
            raise InputShapeError(msg)
        if attention_mask is None:
            attention_mask = input_ids != PAD_ID
        mask = attention_mask.bool()
        if mask.shape == (batch, seq):
            return mask[:, None, :].expand(batch, seq, seq)
        if mask.shape == (batch, seq, seq):
            return mask
        msg = f"attention_mask shape {tuple(mask.shape)} does not match input ({batch}, {seq})"
        raise InputShapeError(msg)

    def encode(
        self,
        input_ids: Tensor,
        attention_mask: Tensor | None = None,
        skip_task_adapter: Sequence[bool] | None = None,
    ) -> Tensor:
        """Return final hidden states [b, s, d] under the active wiring.

        skip_task_adapter (one flag per block) is honored only in training mode.
        """
        mask = self._check_inputs(input_ids, attention_mask)
        mode = self.wiring
        h = self.encoder.embed(input_ids)
        for index, block in enumerate(self.encoder.layers):
            h = block(h, mask)
            if mode.kind == WiringKind.FUSION and self.fusion is not None:
                outputs = [self.adapters[name][index](h) for name in mode.adapters]
                h, _ = self.fusion[index](h, outputs)
            else:
                for name in mode.adapters:
                    h = self.adapters[name][index](h)
            if mode.task_adapter is not None:
                skip = self.training and skip_task_adapter is not None and skip_task_adapter[index]
                if not skip:
                    h = self.adapters[mode.task_adapter][index](h)
        return h

    def forward(
        self,
        input_ids: Tensor,
        attention_mask: Tensor | None = None,
        *,
        skip_task_adapter: Sequence[bool] | None = None,
        return_logits: bool = False,
    ) -> Tensor:
        """Run the head on the encoded batch.

        Returns:
            MLM logits [b, s, vocab]; regression scores [b]; classifier
            probabilities [b] (logits when return_logits is set)

        Raises:
            ModelConfigError: If no head is attached
            InputShapeError: On malformed inputs

        """
        if self.head is None:
            msg = "Model has no head attached"
            raise ModelConfigError(msg)
        output = self.head(self.encode(input_ids, attention_mask, skip_task_adapter))
        if self.head_kind == HeadKind.CLASSIFIER and not return_logits:
            return torch.sigmoid(output)
        return output


def build_model(
    enc: EncoderConfig,
    adapters: Sequence[AdapterConfig] = (),
    fusion: bool = False,  # noqa: FBT001, FBT002
    head: HeadKind | str | None = HeadKind.MLM,
    task_adapter: AdapterConfig | None = None,
) -> TinyLM:
    """Build a deterministically initialized model.

    With fusion set, a fusion layer is attached over all of ``adapters`` and the
    model is wired in FUSION mode; otherwise adapters are stacked in order.

    Raises:
        ModelConfigError: On fusion without adapters or an invalid configuration

    """
    if fusion and not adapters:
        msg = "fusion=True requires at least one adapter"
        raise ModelConfigError(msg)
    model = TinyLM(enc)
    for adapter in adapters:
        model.add_adapter(adapter)
    if task_adapter is not None:
        model.add_adapter(task_adapter)
    if head is not None:
        model.set_head(head)
    names = [a.name for a in adapters]
    task_name = task_adapter.name if task_adapter else None
    if fusion:
        model.add_fusion(names)
        model.set_wiring(WiringMode.fusion(names, task_name))
    else:
        model.set_wiring(WiringMode.full_finetune(names, task_name))
    return model


def adapter_forward(h: Tensor, adapter: Adapter) -> Tensor:
    """Apply one adapter block to hidden activations [b, s, d]."""
    return adapter(h)


def fusion_forward(h: Tensor, adapter_outputs: Sequence[Tensor], fusion: Fusion) -> Tensor:
    """Fuse k adapter outputs for hidden activations h."""
    fused, _ = fusion(h, adapter_outputs)
    return fused


def forward(model: TinyLM, batch: Tensor, attention_mask: Tensor | None = None) -> Tensor:
    """Evaluate the model's head on a token-id batch."""
    return model(batch, attention_mask)


def trainable_mask(model: TinyLM, mode: WiringMode) -> set[str]:
    """Parameter names a wiring mode trains, after validating the mode.

    Raises:
        ModelConfigError: If the mode references missing components

    """
    previous = model.wiring
    model.set_wiring(mode)
    try:
        return model.trainable_names(mode)
    finally:
        model.wiring = previous
