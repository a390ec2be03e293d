"""Sentences, corpora, the word tokenizer and the model vocabulary."""

import logging
import re
from collections import Counter
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

from .exceptions import ConfigError, DatasetError, InputFileError

logger = logging.getLogger(__name__)

TOKEN_PATTERN = re.compile(r"\w+(?:['-]\w+)*|[^\w\s]")
NO_SPACE_BEFORE = frozenset({".", ",", "!", "?", ";", ":", ")"})
NO_SPACE_AFTER = frozenset({"("})

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
MASK_TOKEN = "[MASK]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(len(SPECIAL_TOKENS))

DEFAULT_MAX_VOCAB = 2048


class BiasDimension(StrEnum):
    """The four bias dimensions handled by the pipeline."""

    GENDER = "gender"
    RACE = "race"
    RELIGION = "religion"
    PROFESSION = "profession"

    @classmethod
    def parse(cls, value: "str | BiasDimension") -> "BiasDimension":
        """Parse a dimension name case-insensitively.

        Raises:
            ConfigError: If the name is not a known dimension

        """
        try:
            return cls(str(value).strip().lower())
        except ValueError as e:
            known = ", ".join(d.value for d in cls)
            msg = f"Unknown bias dimension {value!r} (expected one of: {known})"
            raise ConfigError(msg) from e


class Origin(StrEnum):
    """Where a sentence of an augmented corpus came from."""

    ORIGINAL = "original"
    COUNTERFACTUAL = "counterfactual"


def tokenize(text: str) -> list[str]:
    """Split text into word and punctuation tokens.

    Hyphenated and apostrophe words ("African-American", "don't") stay whole.
    """
    return TOKEN_PATTERN.findall(text)


def detokenize(tokens: Sequence[str]) -> str:
    """Join tokens back into text, the inverse of :func:`tokenize` on normalized text."""
    parts: list[str] = []
    previous = ""
    for token in tokens:
        if parts and token not in NO_SPACE_BEFORE and previous not in NO_SPACE_AFTER:
            parts.append(" ")
        parts.append(token)
        previous = token
    return "".join(parts)


def normalize(text: str) -> str:
    """Return the canonical spacing of text under the tokenizer."""
    return detokenize(tokenize(text))


@dataclass(frozen=True)
class Sentence:
    """A corpus sentence with its tokens and optional augmentation tag."""

    text: str
    tokens: tuple[str, ...]
    origin: Origin | None = None

    @classmethod
    def from_text(cls, text: str, origin: Origin | None = None) -> "Sentence":
        """Create a sentence, normalizing its spacing so tokens round-trip to text."""
        tokens = tuple(tokenize(text))
        return cls(text=detokenize(tokens), tokens=tokens, origin=origin)

    def with_origin(self, origin: Origin) -> "Sentence":
        """Return a copy tagged with origin."""
        return Sentence(text=self.text, tokens=self.tokens, origin=origin)


@dataclass
class Corpus:
    """An ordered list of sentences."""

    sentences: list[Sentence] = field(default_factory=list)

    @classmethod
    def from_texts(cls, texts: Iterable[str], origin: Origin | None = None) -> "Corpus":
        """Build a corpus from raw strings, skipping blank ones."""
        return cls([Sentence.from_text(t, origin) for t in texts if t.strip()])

    def __len__(self) -> int:
        """Return the number of sentences."""
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        """Iterate over sentences in order."""
        return iter(self.sentences)

    def __add__(self, other: "Corpus") -> "Corpus":
        """Concatenate two corpora."""
        return Corpus([*self.sentences, *other.sentences])

    @property
    def texts(self) -> list[str]:
        """Sentence texts in corpus order."""
        return [s.text for s in self.sentences]

    def to_lines(self) -> list[str]:
        """Serialize to lines; tagged sentences are written as ``origin<TAB>text``."""
        return [f"{s.origin}\t{s.text}" if s.origin else s.text for s in self.sentences]

    def canonical_bytes(self) -> bytes:
        """Canonical serialization used for fingerprints."""
        return "\n".join(self.to_lines()).encode("utf-8")


def parse_corpus_lines(lines: Iterable[str]) -> Corpus:
    """Parse corpus lines written by :meth:`Corpus.to_lines` or plain text."""
    tags = {o.value: o for o in Origin}
    sentences: list[Sentence] = []
    for line in lines:
        text = line.rstrip("\n")
        if not text.strip():
            continue
        origin = None
        tag, sep, rest = text.partition("\t")
        if sep and tag in tags:
            origin, text = tags[tag], rest
        sentences.append(Sentence.from_text(text, origin))
    return Corpus(sentences)


def read_corpus(path: Path) -> Corpus:
    """Read a one-sentence-per-line corpus file.

    Raises:
        InputFileError: If the file does not exist

    """
    if not path.is_file():
        raise InputFileError(path)
    with path.open(encoding="utf-8") as handle:
        corpus = parse_corpus_lines(handle)
    logger.info("Read %d sentences from %s", len(corpus), path)
    return corpus


@dataclass
class Vocabulary:
    """Token to id mapping with the five special tokens at fixed ids."""

    tokens: list[str]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        """Validate the special-token prefix and build the lookup index."""
        if tuple(self.tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            msg = f"Vocabulary must start with the special tokens {SPECIAL_TOKENS}"
            raise DatasetError(msg)
        if len(set(self.tokens)) != len(self.tokens):
            msg = "Vocabulary contains duplicate tokens"
            raise DatasetError(msg)
        self._index = {token: i for i, token in enumerate(self.tokens)}

    @classmethod
    def build(
        cls,
        token_lists: Iterable[Sequence[str]],
        max_size: int = DEFAULT_MAX_VOCAB,
        min_count: int = 1,
    ) -> "Vocabulary":
        """Build a vocabulary from tokenized text, most frequent tokens first.

        Tokens are lowercased. Ties in frequency are broken alphabetically so the
        result does not depend on corpus order.
        """
        if max_size <= len(SPECIAL_TOKENS):
            msg = f"max_size must exceed {len(SPECIAL_TOKENS)}, got {max_size}"
            raise ConfigError(msg)
        counts: Counter[str] = Counter()
        for tokens in token_lists:
            counts.update(t.lower() for t in tokens)
        for special in SPECIAL_TOKENS:
            counts.pop(special, None)
        ranked = sorted(
            (t for t, c in counts.items() if c >= min_count),
            key=lambda t: (-counts[t], t),
        )
        kept = ranked[: max_size - len(SPECIAL_TOKENS)]
        if len(kept) < len(ranked):
            logger.info("Vocabulary truncated: kept %d of %d tokens", len(kept), len(ranked))
        return cls([*SPECIAL_TOKENS, *kept])

    @classmethod
    def from_corpus(cls, corpus: Corpus, max_size: int = DEFAULT_MAX_VOCAB) -> "Vocabulary":
        """Build a vocabulary covering a corpus."""
        return cls.build((s.tokens for s in corpus), max_size=max_size)

    def __len__(self) -> int:
        """Return the vocabulary size."""
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        """Check whether a (lowercased) token has its own id."""
        return isinstance(token, str) and token.lower() in self._index

    @property
    def first_regular_id(self) -> int:
        """Smallest id that is not a special token."""
        return len(SPECIAL_TOKENS)

    def token_id(self, token: str) -> int:
        """Id of a token, UNK for out-of-vocabulary tokens."""
        if token in SPECIAL_TOKENS:
            return self._index[token]
        return self._index.get(token.lower(), UNK_ID)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        """Map tokens to ids."""
        return [self.token_id(t) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        """Map ids back to tokens."""
        return [self.tokens[i] for i in ids]

    def encode_sentence(self, tokens: Sequence[str], max_len: int) -> list[int]:
        """Encode ``[CLS] tokens [SEP]``, truncating the tokens to fit max_len."""
        body = self.encode(tokens)[: max(max_len - 2, 0)]
        return [CLS_ID, *body, SEP_ID]

    def encode_pair(self, first: Sequence[str], second: Sequence[str], max_len: int) -> list[int]:
        """Encode ``[CLS] first [SEP] second [SEP]`` with the longer side truncated first."""
        a, b = self.encode(first), self.encode(second)
        budget = max(max_len - 3, 0)
        while len(a) + len(b) > budget:
            if len(a) >= len(b):
                a.pop()
            else:
                b.pop()
        return [CLS_ID, *a, SEP_ID, *b, SEP_ID]

    def to_dict(self) -> dict[str, Any]:
        """Serialize for a checkpoint manifest."""
        return {"tokens": list(self.tokens)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Vocabulary":
        """Restore from :meth:`to_dict` output."""
        return cls(list(data["tokens"]))
