"""Atomic artifact writes and content fingerprints."""

import contextlib
import hashlib
import json
import logging
import os
import tempfile
from collections.abc import Iterator
from pathlib import Path
from typing import IO, Any

logger = logging.getLogger(__name__)

FINGERPRINT_BYTES = 8


def fingerprint(data: bytes) -> str:
    """Return a 64-bit content hash as 16 hex digits."""
    return hashlib.blake2b(data, digest_size=FINGERPRINT_BYTES).hexdigest()


def dumps_json(payload: Any) -> str:  # noqa: ANN401
    """Serialize JSON deterministically (sorted keys, trailing newline)."""
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@contextlib.contextmanager
def atomic_writer(path: Path) -> Iterator[IO[bytes]]:
    """Context manager yielding a binary handle that replaces path on success.

    The data goes to a temporary file in the same directory, which is renamed
    over path only when the block exits cleanly. On error the temporary file
    is removed and path is left untouched.

    Args:
        path: Destination file

    Yields:
        Writable binary file object

    """
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    temp_path = Path(temp_name)
    try:
        with os.fdopen(fd, "wb") as handle:
            yield handle
            handle.flush()
            os.fsync(handle.fileno())
        temp_path.replace(path)
        logger.debug("Wrote %s", path)
    finally:
        with contextlib.suppress(FileNotFoundError):
            temp_path.unlink()


def write_bytes_atomic(path: Path, data: bytes) -> None:
    """Atomically replace path with data."""
    with atomic_writer(path) as handle:
        handle.write(data)


def write_text_atomic(path: Path, text: str) -> None:
    """Atomically replace path with UTF-8 text."""
    write_bytes_atomic(path, text.encode("utf-8"))


def write_json_atomic(path: Path, payload: Any) -> None:  # noqa: ANN401
    """Atomically replace path with deterministic JSON."""
    write_text_atomic(path, dumps_json(payload))
