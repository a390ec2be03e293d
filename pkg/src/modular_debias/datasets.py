"""Task-typed training datasets and batch collation."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

import torch
from torch import Tensor

from .corpus import PAD_ID, Corpus, Vocabulary, tokenize
from .exceptions import DatasetError, InputFileError
from .tinylm import HeadKind

logger = logging.getLogger(__name__)

MIN_SIMILARITY = 0.0
MAX_SIMILARITY = 5.0


class TaskType(StrEnum):
    """Training objective of a dataset."""

    MLM = "mlm"
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


HEAD_FOR_TASK = {
    TaskType.MLM: HeadKind.MLM,
    TaskType.REGRESSION: HeadKind.REGRESSION,
    TaskType.CLASSIFICATION: HeadKind.CLASSIFIER,
}


@dataclass(frozen=True)
class SimilarityExample:
    """A sentence pair with a similarity target in [0, 5]."""

    sentence_a: str
    sentence_b: str
    score: float

    def __post_init__(self) -> None:
        """Validate the target range.

        Raises:
            DatasetError: If the score is outside [0, 5]

        """
        if not MIN_SIMILARITY <= self.score <= MAX_SIMILARITY:
            msg = f"similarity score {self.score} outside [{MIN_SIMILARITY}, {MAX_SIMILARITY}]"
            raise DatasetError(msg)


@dataclass(frozen=True)
class LabeledText:
    """A text with a binary label."""

    text: str
    label: int

    def __post_init__(self) -> None:
        """Validate the label.

        Raises:
            DatasetError: If the label is not 0 or 1

        """
        if self.label not in (0, 1):
            msg = f"label must be 0 or 1, got {self.label!r}"
            raise DatasetError(msg)


@dataclass
class MlmData:
    """Masked language modeling over a corpus."""

    corpus: Corpus
    task_type: TaskType = field(default=TaskType.MLM, init=False)

    def __len__(self) -> int:
        """Return the number of sentences."""
        return len(self.corpus)

    def canonical_bytes(self) -> bytes:
        """Canonical serialization used for fingerprints."""
        return self.corpus.canonical_bytes()

    def encode(self, vocab: Vocabulary, max_len: int) -> list[list[int]]:
        """Encode every sentence as ``[CLS] ... [SEP]``."""
        return [vocab.encode_sentence(s.tokens, max_len) for s in self.corpus]


@dataclass
class RegressionData:
    """Sentence-pair similarity regression."""

    examples: list[SimilarityExample]
    task_type: TaskType = field(default=TaskType.REGRESSION, init=False)

    def __len__(self) -> int:
        """Return the number of pairs."""
        return len(self.examples)

    def canonical_bytes(self) -> bytes:
        """Canonical serialization used for fingerprints."""
        return "\n".join(
            f"{e.sentence_a}\t{e.sentence_b}\t{e.score!r}" for e in self.examples
        ).encode("utf-8")

    def encode(self, vocab: Vocabulary, max_len: int) -> list[list[int]]:
        """Encode every pair as ``[CLS] a [SEP] b [SEP]``."""
        return [
            vocab.encode_pair(tokenize(e.sentence_a), tokenize(e.sentence_b), max_len)
            for e in self.examples
        ]

    def targets(self) -> list[float]:
        """Similarity targets in example order."""
        return [e.score for e in self.examples]


@dataclass
class ClassificationData:
    """Binary text classification."""

    examples: list[LabeledText]
    task_type: TaskType = field(default=TaskType.CLASSIFICATION, init=False)

    def __len__(self) -> int:
        """Return the number of texts."""
        return len(self.examples)

    def canonical_bytes(self) -> bytes:
        """Canonical serialization used for fingerprints."""
        return "\n".join(f"{e.label}\t{e.text}" for e in self.examples).encode("utf-8")

    def encode(self, vocab: Vocabulary, max_len: int) -> list[list[int]]:
        """Encode every text as ``[CLS] ... [SEP]``."""
        return [vocab.encode_sentence(tokenize(e.text), max_len) for e in self.examples]

    def targets(self) -> list[float]:
        """Labels as floats in example order."""
        return [float(e.label) for e in self.examples]


TaskData = MlmData | RegressionData | ClassificationData


def pad_batch(sequences: Sequence[Sequence[int]]) -> tuple[Tensor, Tensor]:
    """Right-pad id sequences into an id matrix and a key mask."""
    width = max((len(s) for s in sequences), default=0)
    ids = torch.full((len(sequences), width), PAD_ID, dtype=torch.long)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = torch.tensor(list(seq), dtype=torch.long)
    return ids, ids != PAD_ID


def read_classification_dataset(path: Path) -> ClassificationData:
    """Read a ``text<TAB>label`` file.

    Raises:
        InputFileError: If the file does not exist
        DatasetError: On a malformed row, naming its line number

    """
    if not path.is_file():
        raise InputFileError(path)
    examples: list[LabeledText] = []
    with path.open(encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2:  # noqa: PLR2004
                msg = f"expected 2 tab-separated fields, got {len(fields)}"
                raise DatasetError(msg, line_number)
            try:
                examples.append(LabeledText(fields[0], int(fields[1])))
            except (ValueError, DatasetError) as e:
                raise DatasetError(str(e), line_number) from e
    if not examples:
        logger.warning("Classification dataset %s is empty", path)
    return ClassificationData(examples)
