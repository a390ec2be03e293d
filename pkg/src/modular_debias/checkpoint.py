"""Single-archive model checkpoints with a JSON manifest and float32 blobs."""

import json
import logging
import zipfile
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .artifacts import atomic_writer, dumps_json, fingerprint
from .corpus import Vocabulary
from .exceptions import CheckpointError, InputFileError
from .tinylm import AdapterConfig, TinyLM

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
PARAMS_PREFIX = "params/"
BLOB_DTYPE = "<f4"
# fixed member timestamp keeps archives byte-identical across runs
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class LoadedCheckpoint:
    """A restored model with its vocabulary and manifest."""

    model: TinyLM
    vocab: Vocabulary | None
    manifest: dict[str, Any]


def encoder_fingerprint(model: TinyLM) -> str:
    """Fingerprint of the encoder weights as they would be stored."""
    blobs = b"".join(
        p.detach().cpu().to(torch.float32).numpy().astype(BLOB_DTYPE).tobytes()
        for p in model.encoder.parameters()
    )
    return fingerprint(blobs)


def vocab_fingerprint(vocab: Vocabulary) -> str:
    """Fingerprint of the token-id assignment."""
    return fingerprint("\n".join(vocab.tokens).encode("utf-8"))


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(
    path: Path,
    model: TinyLM,
    vocab: Vocabulary | None = None,
    extra: dict[str, Any] | None = None,
) -> None:
    """Write model weights and architecture atomically to a checkpoint archive.

    Args:
        path: Archive path
        model: Model to save
        vocab: Vocabulary the model was trained with
        extra: Additional manifest fields (e.g. seed)

    """
    params = [(name, p.detach().cpu()) for name, p in model.named_parameters()]
    manifest: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        **model.describe(),
        "parameters": [{"name": name, "shape": list(p.shape)} for name, p in params],
        "vocab": vocab.to_dict() if vocab is not None else None,
        "encoder_fingerprint": encoder_fingerprint(model),
        "vocab_fingerprint": vocab_fingerprint(vocab) if vocab is not None else None,
        **(extra or {}),
    }
    with atomic_writer(path) as handle, zipfile.ZipFile(handle, "w") as archive:
        archive.writestr(_member(MANIFEST_NAME), dumps_json(manifest))
        for name, tensor in params:
            blob = tensor.to(torch.float32).numpy().astype(BLOB_DTYPE).tobytes()
            archive.writestr(_member(PARAMS_PREFIX + name), blob)
    logger.info("Saved checkpoint with %d tensors to %s", len(params), path)


def _read_archive(path: Path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    if not path.is_file():
        raise InputFileError(path)
    try:
        with zipfile.ZipFile(path) as archive:
            manifest = json.loads(archive.read(MANIFEST_NAME).decode("utf-8"))
            blobs: dict[str, np.ndarray] = {}
            for entry in manifest.get("parameters", []):
                raw = archive.read(PARAMS_PREFIX + entry["name"])
                array = np.frombuffer(raw, dtype=BLOB_DTYPE)
                shape = tuple(entry["shape"])
                if array.size != int(np.prod(shape, dtype=np.int64)):
                    msg = f"Blob {entry['name']} holds {array.size} values, expected {shape}"
                    raise CheckpointError(msg)
                blobs[entry["name"]] = array.reshape(shape)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, OSError) as e:
        msg = f"Failed to read checkpoint {path}: {e}"
        raise CheckpointError(msg) from e
    if manifest.get("format_version") != FORMAT_VERSION:
        msg = f"Unsupported checkpoint format {manifest.get('format_version')!r} in {path}"
        raise CheckpointError(msg)
    return manifest, blobs


def _copy_into(model: TinyLM, blobs: dict[str, np.ndarray], names: Iterable[str]) -> None:
    params = dict(model.named_parameters())
    with torch.no_grad():
        for name in names:
            param = params[name]
            value = torch.from_numpy(blobs[name].copy())
            if tuple(value.shape) != tuple(param.shape):
                msg = f"Shape mismatch for {name}: {tuple(value.shape)} vs {tuple(param.shape)}"
                raise CheckpointError(msg)
            param.copy_(value.to(param.dtype))


def load_checkpoint(path: Path) -> LoadedCheckpoint:
    """Rebuild a model from a checkpoint archive.

    Raises:
        InputFileError: If the archive does not exist
        CheckpointError: If it is corrupt or does not match its manifest

    """
    manifest, blobs = _read_archive(path)
    try:
        model = TinyLM.from_description(manifest)
    except (KeyError, TypeError, ValueError) as e:
        msg = f"Checkpoint {path} has an invalid architecture description: {e}"
        raise CheckpointError(msg) from e
    expected = {name for name, _ in model.named_parameters()}
    if expected != set(blobs):
        msg = f"Checkpoint {path} parameters do not match its architecture"
        raise CheckpointError(msg)
    _copy_into(model, blobs, expected)
    vocab = Vocabulary.from_dict(manifest["vocab"]) if manifest.get("vocab") else None
    logger.info("Loaded checkpoint %s", path)
    return LoadedCheckpoint(model, vocab, manifest)


def _check_same_base(
    manifest: dict[str, Any], model: TinyLM, vocab: Vocabulary | None, path: Path
) -> None:
    recorded = manifest.get("encoder_fingerprint")
    if recorded != encoder_fingerprint(model):
        msg = f"Checkpoint {path} was trained over different encoder weights than the model"
        raise CheckpointError(msg)
    if vocab is None:
        return
    recorded = manifest.get("vocab_fingerprint")
    if recorded != vocab_fingerprint(vocab):
        msg = f"Checkpoint {path} uses a different vocabulary than the model"
        raise CheckpointError(msg)


def load_adapters(
    model: TinyLM,
    path: Path,
    names: Iterable[str] | None = None,
    vocab: Vocabulary | None = None,
) -> list[str]:
    """Copy trained adapters from a checkpoint into model, adding them if absent.

    Adapters only transfer between models sharing one frozen encoder, so the
    checkpoint's recorded encoder fingerprint must match the model's, and its
    vocabulary fingerprint must match vocab when one is given.

    Args:
        model: Target model (its encoder must match the checkpoint's dimensions)
        path: Checkpoint holding the adapters
        names: Adapters to copy, all of the checkpoint's adapters by default
        vocab: Vocabulary the model is used with

    Returns:
        Names of the copied adapters

    Raises:
        CheckpointError: If an adapter is missing, dimensions differ, or the
            checkpoint was trained over another encoder or vocabulary

    """
    manifest, blobs = _read_archive(path)
    encoder = manifest["encoder"]
    for key in ("hidden_dim", "num_layers"):
        if encoder[key] != getattr(model.config, key):
            expected = getattr(model.config, key)
            msg = f"Checkpoint {path} has {key}={encoder[key]}, model has {expected}"
            raise CheckpointError(msg)
    _check_same_base(manifest, model, vocab, path)
    available = {a["name"]: AdapterConfig(**a) for a in manifest["adapters"]}
    wanted = list(names) if names is not None else list(available)
    for name in wanted:
        if name not in available:
            msg = f"Adapter {name!r} not found in {path}"
            raise CheckpointError(msg)
        if name not in model.adapters:
            model.add_adapter(available[name])
        _copy_into(model, blobs, [n for n in blobs if n.startswith(f"adapters.{name}.")])
    logger.info("Loaded adapters %s from %s", ", ".join(wanted), path)
    return wanted

