"""Counterfactual pair construction and 2-way counterfactual data augmentation.

The pipeline runs in four steps:

1. ``extract_terms`` collects identity terms from a knowledge-base dump.
2. ``propose_pairs`` asks a pair proposer for a counterpart of every term.
3. ``filter_pairs`` drops pairs whose terms are too rare in a frequency table.
4. ``apply_cda`` doubles a corpus by swapping every pair term with its counterpart.
"""

import bz2
import gzip
import json
import logging
import re
import time
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Literal

from .artifacts import write_text_atomic
from .corpus import BiasDimension, Corpus, Origin, Sentence
from .exceptions import (
    ConfigError,
    DatasetError,
    DumpError,
    InputFileError,
    PairConflictError,
    PairListError,
    ProposerError,
)
from .proposer import PairProposer

logger = logging.getLogger(__name__)

MAX_TERM_WORDS = 5

DEFAULT_THRESHOLDS: dict[BiasDimension, float] = {
    BiasDimension.GENDER: 0.01,
    BiasDimension.RACE: 1.0,
    BiasDimension.RELIGION: 1.0,
    BiasDimension.PROFESSION: 1.0,
}

# WikiData properties and classes that identity terms are harvested from.
DEFAULT_PROPERTY_MAP: dict[str, BiasDimension] = {
    **dict.fromkeys(("P3321", "P6553", "P21", "P5185"), BiasDimension.GENDER),
    **dict.fromkeys(("P27", "P172", "Q874405", "Q3254959"), BiasDimension.RACE),
    **dict.fromkeys(
        (
            "P1049",
            "P140",
            "Q178885",
            "Q9174",
            "Q375011",
            "Q4392985",
            "Q21029893",
            "Q105889895",
            "Q179461",
            "Q1370598",
            "Q71966963",
        ),
        BiasDimension.RELIGION,
    ),
    **dict.fromkeys(("P101", "P106", "P3095"), BiasDimension.PROFESSION),
}

_GENDER_SEEDS = (
    ("man", "woman"),
    ("men", "women"),
    ("he", "she"),
    ("him", "her"),
    ("his", "hers"),
    ("boy", "girl"),
    ("boys", "girls"),
    ("father", "mother"),
    ("son", "daughter"),
    ("brother", "sister"),
    ("husband", "wife"),
    ("king", "queen"),
    ("male", "female"),
)
_RACE_SEEDS = (
    ("black", "white"),
    ("african", "european"),
    ("african-american", "caucasian"),
    ("asian", "hispanic"),
)
_RELIGION_SEEDS = (
    ("christian", "muslim"),
    ("jewish", "christian"),
    ("church", "mosque"),
    ("bible", "quran"),
    ("jew", "muslim"),
)

InvalidPolicy = Literal["raise", "skip"]


@dataclass
class Diagnostics:
    """Tally of everything a pipeline step skipped instead of failing on."""

    counts: Counter[str] = field(default_factory=Counter)
    details: dict[str, list[str]] = field(default_factory=dict)

    def note(self, kind: str, detail: str) -> None:
        """Record one skipped item."""
        self.counts[kind] += 1
        self.details.setdefault(kind, []).append(detail)
        logger.debug("Skipped (%s): %s", kind, detail)

    def __getitem__(self, kind: str) -> int:
        """Return the count for kind (0 if never noted)."""
        return self.counts[kind]

    def to_dict(self) -> dict[str, object]:
        """Serialize for manifests."""
        return {"counts": dict(sorted(self.counts.items())), "details": self.details}


@dataclass(frozen=True)
class CounterfactualPair:
    """An ordered (dominant, minority) term pair within one bias dimension."""

    dominant: str
    minority: str
    dimension: BiasDimension

    def __post_init__(self) -> None:
        """Validate the pair.

        Raises:
            PairListError: If a term is empty, too long, or both terms are equal

        """
        for term in (self.dominant, self.minority):
            words = term.split()
            if not words:
                msg = f"Empty term in pair ({self.dominant!r}, {self.minority!r})"
                raise PairListError(msg)
            if len(words) > MAX_TERM_WORDS:
                msg = f"Term {term!r} has more than {MAX_TERM_WORDS} words"
                raise PairListError(msg)
        if self.dominant.casefold() == self.minority.casefold():
            msg = f"Self-pair ({self.dominant!r}, {self.minority!r})"
            raise PairListError(msg)

    def to_line(self) -> str:
        """Render as a pair-list row."""
        return f"{self.dominant}\t{self.minority}\t{self.dimension}"


def default_seed_pairs(dimension: BiasDimension) -> list[CounterfactualPair]:
    """Seed pairs shown to the proposer; profession reuses the gender seeds."""
    seeds = {
        BiasDimension.GENDER: _GENDER_SEEDS,
        BiasDimension.RACE: _RACE_SEEDS,
        BiasDimension.RELIGION: _RELIGION_SEEDS,
        BiasDimension.PROFESSION: _GENDER_SEEDS,
    }[dimension]
    return [CounterfactualPair(d, m, dimension) for d, m in seeds]


def validate_pairs(pairs: Sequence[CounterfactualPair]) -> None:
    """Check that no term is the dominant side of two pairs in one dimension.

    Raises:
        PairListError: On a repeated dominant term

    """
    seen: set[tuple[BiasDimension, str]] = set()
    for pair in pairs:
        key = (pair.dimension, pair.dominant.casefold())
        if key in seen:
            msg = f"Dominant term {pair.dominant!r} appears twice in {pair.dimension} pairs"
            raise PairListError(msg)
        seen.add(key)


def parse_pair_lines(
    lines: Iterable[str],
    dimension: BiasDimension | None = None,
    *,
    on_invalid: InvalidPolicy = "raise",
    diagnostics: Diagnostics | None = None,
    source: str = "<pairs>",
) -> list[CounterfactualPair]:
    """Parse ``dominant<TAB>minority<TAB>dimension`` rows.

    Blank lines and lines starting with ``#`` are ignored. If dimension is given
    every row must carry it.

    Args:
        lines: Rows to parse
        dimension: Expected dimension of every row
        on_invalid: ``"raise"`` to fail on the first invalid row, ``"skip"`` to
            drop it and record it in diagnostics
        diagnostics: Tally for skipped rows
        source: Name used in messages

    Returns:
        Pairs in file order

    Raises:
        PairListError: On an invalid row when on_invalid is ``"raise"``

    """
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    pairs: list[CounterfactualPair] = []
    dominants: set[tuple[BiasDimension, str]] = set()
    for line_number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        try:
            fields = [f.strip() for f in line.split("\t")]
            if len(fields) != 3:  # noqa: PLR2004
                msg = f"expected 3 tab-separated fields, got {len(fields)}"
                raise PairListError(msg)
            row_dimension = BiasDimension.parse(fields[2])
            if dimension is not None and row_dimension != dimension:
                msg = f"expected dimension {dimension}, got {row_dimension}"
                raise PairListError(msg)
            pair = CounterfactualPair(fields[0], fields[1], row_dimension)
            key = (row_dimension, pair.dominant.casefold())
            if key in dominants:
                msg = f"dominant term {pair.dominant!r} already used"
                raise PairListError(msg)
        except (PairListError, ConfigError) as e:
            if on_invalid == "raise":
                msg = f"{source}:{line_number}: {e}"
                raise PairListError(msg) from e
            diagnostics.note("invalid_pair", f"{source}:{line_number}: {e}")
            continue
        dominants.add(key)
        pairs.append(pair)
    return pairs


def read_pair_list(
    path: Path,
    dimension: BiasDimension | None = None,
    *,
    on_invalid: InvalidPolicy = "raise",
    diagnostics: Diagnostics | None = None,
) -> list[CounterfactualPair]:
    """Read a pair-list file.

    Raises:
        InputFileError: If the file does not exist
        PairListError: On an invalid row when on_invalid is ``"raise"``

    """
    if not path.is_file():
        raise InputFileError(path)
    with path.open(encoding="utf-8") as handle:
        pairs = parse_pair_lines(
            handle,
            dimension,
            on_invalid=on_invalid,
            diagnostics=diagnostics,
            source=str(path),
        )
    logger.info("Read %d pairs from %s", len(pairs), path)
    return pairs


def load_default_pairs(
    dimension: BiasDimension,
    diagnostics: Diagnostics | None = None,
) -> list[CounterfactualPair]:
    """Load the pair list shipped with the package for a dimension.

    The shipped lists are kept verbatim, so rows that break the pair invariants
    (self-pairs, repeated dominants) are skipped and tallied in diagnostics.
    """
    asset = resources.files("modular_debias") / "data" / "pairs" / f"{dimension}.tsv"
    text = asset.read_text(encoding="utf-8")
    return parse_pair_lines(
        text.splitlines(),
        dimension,
        on_invalid="skip",
        diagnostics=diagnostics,
        source=f"{dimension}.tsv",
    )


def write_pair_list(path: Path, pairs: Iterable[CounterfactualPair]) -> None:
    """Write pairs atomically as a pair-list file."""
    write_text_atomic(path, "".join(f"{p.to_line()}\n" for p in pairs))


@dataclass(frozen=True)
class TermEntry:
    """One identity term harvested from the dump."""

    term: str
    dimension: BiasDimension
    source_property: str


@dataclass(frozen=True)
class TermCatalog:
    """Deduplicated identity terms in canonical (dimension, term) order."""

    entries: tuple[TermEntry, ...]

    def __iter__(self) -> Iterator[TermEntry]:
        """Iterate in canonical order."""
        return iter(self.entries)

    def __len__(self) -> int:
        """Return the number of entries."""
        return len(self.entries)

    def terms(self, dimension: BiasDimension) -> list[str]:
        """Terms of one dimension in catalog order."""
        return [e.term for e in self.entries if e.dimension == dimension]

    def to_lines(self) -> list[str]:
        """Serialize as ``term<TAB>dimension<TAB>property`` rows."""
        return [f"{e.term}\t{e.dimension}\t{e.source_property}" for e in self.entries]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "TermCatalog":
        """Parse rows written by :meth:`to_lines`.

        Raises:
            DatasetError: On a malformed row

        """
        entries = []
        for line_number, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:  # noqa: PLR2004
                msg = f"expected 3 tab-separated fields, got {len(fields)}"
                raise DatasetError(msg, line_number)
            try:
                dimension = BiasDimension.parse(fields[1])
            except ConfigError as e:
                raise DatasetError(str(e), line_number) from e
            entries.append(TermEntry(fields[0], dimension, fields[2]))
        return cls(tuple(entries))


def open_dump(path: Path) -> IO[str]:
    """Open a plain, gzip or bzip2 newline-delimited dump for reading.

    Raises:
        InputFileError: If the dump does not exist

    """
    if not path.is_file():
        raise InputFileError(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    if path.suffix == ".bz2":
        return bz2.open(path, "rt", encoding="utf-8")
    return path.open(encoding="utf-8")


def iter_dump(path: Path) -> Iterator[str]:
    """Yield the lines of a dump file.

    Raises:
        DumpError: If the dump cannot be read or decompressed

    """
    try:
        with open_dump(path) as handle:
            yield from handle
    except (OSError, EOFError, UnicodeDecodeError) as e:
        msg = f"Failed to read dump {path}: {e}"
        raise DumpError(msg) from e


def _parse_record(record: str | Mapping[str, object]) -> tuple[str, str] | None:
    if isinstance(record, str):
        if not record.strip():
            return None
        try:
            record = json.loads(record)
        except json.JSONDecodeError:
            return None
    if not isinstance(record, Mapping):
        return None
    prop, value = record.get("property"), record.get("value")
    if "id" not in record or not isinstance(prop, str) or not isinstance(value, str):
        return None
    value = " ".join(value.split())
    if not value:
        return None
    return prop, value


def extract_terms(
    dump: Iterable[str | Mapping[str, object]],
    property_allowlist: Iterable[str],
    dimension_map: Mapping[str, BiasDimension] | None = None,
    diagnostics: Diagnostics | None = None,
) -> TermCatalog:
    """Collect the value labels of allow-listed properties into a term catalog.

    Args:
        dump: JSON lines or already-parsed records with ``id``, ``property`` and
            ``value`` fields
        property_allowlist: Property codes to keep
        dimension_map: Property code to dimension, defaults to DEFAULT_PROPERTY_MAP
        diagnostics: Tally for malformed records

    Returns:
        Catalog with one entry per distinct (case-insensitive) term and dimension

    Raises:
        ConfigError: If the allow-list is empty or names an unmapped property

    """
    allowlist = frozenset(property_allowlist)
    mapping = dimension_map if dimension_map is not None else DEFAULT_PROPERTY_MAP
    if not allowlist:
        msg = "Property allow-list must not be empty"
        raise ConfigError(msg)
    unmapped = sorted(allowlist - set(mapping))
    if unmapped:
        msg = f"No bias dimension configured for properties: {', '.join(unmapped)}"
        raise ConfigError(msg)

    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    best: dict[tuple[BiasDimension, str], TermEntry] = {}
    for index, record in enumerate(dump):
        parsed = _parse_record(record)
        if parsed is None:
            diagnostics.note("malformed_record", f"record {index}")
            continue
        prop, value = parsed
        if prop not in allowlist:
            continue
        entry = TermEntry(value, mapping[prop], prop)
        key = (entry.dimension, value.casefold())
        current = best.get(key)
        # smallest surface form and property code win, whatever the record order
        if current is None or (value, prop) < (current.term, current.source_property):
            best[key] = entry

    if diagnostics["malformed_record"]:
        logger.warning("Skipped %d malformed dump records", diagnostics["malformed_record"])
    entries = sorted(best.values(), key=lambda e: (e.dimension.value, e.term.casefold(), e.term))
    logger.info("Extracted %d terms", len(entries))
    return TermCatalog(tuple(entries))


def _covered_terms(pairs: Iterable[CounterfactualPair]) -> set[str]:
    covered: set[str] = set()
    for pair in pairs:
        covered.add(pair.dominant.casefold())
        covered.add(pair.minority.casefold())
    return covered


def _ask_with_retries(  # noqa: PLR0913
    proposer: PairProposer,
    dimension: BiasDimension,
    seeds: list[tuple[str, str]],
    term: str,
    retries: int,
    retry_delay: float,
) -> str | list[str] | None:
    for attempt in range(1, max(retries, 1) + 1):
        try:
            return proposer.propose(dimension, seeds, term)
        except ProposerError:
            if attempt >= retries:
                raise
            logger.info("Proposer failed for %r, retrying...", term)
            time.sleep(retry_delay)
    return None


def propose_pairs(  # noqa: PLR0913
    catalog: TermCatalog,
    seed_pairs: Sequence[CounterfactualPair],
    proposer: PairProposer,
    dimension: BiasDimension,
    *,
    retries: int = 3,
    retry_delay: float = 1.0,
    diagnostics: Diagnostics | None = None,
) -> list[CounterfactualPair]:
    """Ask the proposer for a counterpart of every uncovered catalog term.

    Terms already on either side of a seed pair are skipped. Answers that are
    empty, refused, or equal to the term itself are discarded. Transport failures
    are retried and then recorded as unresolved instead of failing the run.

    Args:
        catalog: Terms to pair up
        seed_pairs: Example pairs shown to the proposer
        proposer: Pair proposer client
        dimension: Dimension whose terms are proposed
        retries: Attempts per term before giving up
        retry_delay: Seconds to wait between attempts
        diagnostics: Tally for discarded and unresolved terms

    Returns:
        Candidate pairs in catalog order

    Raises:
        PairListError: If a seed pair belongs to another dimension

    """
    for seed in seed_pairs:
        if seed.dimension != dimension:
            msg = f"Seed pair {seed.to_line()!r} does not match dimension {dimension}"
            raise PairListError(msg)

    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    covered = _covered_terms(seed_pairs)
    seeds = [(s.dominant, s.minority) for s in seed_pairs]
    pairs: list[CounterfactualPair] = []

    for term in catalog.terms(dimension):
        if term.casefold() in covered:
            continue
        try:
            answer = _ask_with_retries(proposer, dimension, seeds, term, retries, retry_delay)
        except ProposerError as e:
            logger.warning("Giving up on term %r after %d attempts: %s", term, retries, e)
            diagnostics.note("unresolved", term)
            continue
        # several proposals: the first one wins
        if isinstance(answer, list):
            answer = answer[0] if answer else None
        counterpart = " ".join((answer or "").split())
        if not counterpart:
            diagnostics.note("refused", term)
            continue
        try:
            pairs.append(CounterfactualPair(term, counterpart, dimension))
        except PairListError as e:
            diagnostics.note("rejected", f"{term}: {e}")

    logger.info("Proposed %d %s pairs", len(pairs), dimension)
    return pairs


@dataclass(frozen=True)
class FrequencyTable:
    """Term frequencies in occurrences per million words; lookups are case-insensitive."""

    frequencies: Mapping[str, float]

    def __post_init__(self) -> None:
        """Fold keys to lowercase and validate values.

        Raises:
            DatasetError: On a negative or non-finite frequency

        """
        folded: dict[str, float] = {}
        for term, value in self.frequencies.items():
            if not value >= 0 or value == float("inf"):
                msg = f"Invalid frequency {value!r} for term {term!r}"
                raise DatasetError(msg)
            key = " ".join(term.split()).casefold()
            folded[key] = folded.get(key, 0.0) + float(value)
        object.__setattr__(self, "frequencies", folded)

    def __getitem__(self, term: str) -> float:
        """Frequency of term, 0 if absent."""
        return self.frequencies.get(" ".join(term.split()).casefold(), 0.0)

    def __len__(self) -> int:
        """Return the number of terms."""
        return len(self.frequencies)


def read_frequency_table(path: Path) -> FrequencyTable:
    """Read a ``term<TAB>freq_per_million`` file.

    Raises:
        InputFileError: If the file does not exist
        DatasetError: On a malformed row, naming its line number

    """
    if not path.is_file():
        raise InputFileError(path)
    frequencies: dict[str, float] = {}
    with path.open(encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:  # noqa: PLR2004
                msg = f"expected 2 tab-separated fields, got {len(fields)}"
                raise DatasetError(msg, line_number)
            try:
                value = float(fields[1])
            except ValueError as e:
                msg = f"frequency {fields[1]!r} is not a number"
                raise DatasetError(msg, line_number) from e
            if not value >= 0:
                msg = f"frequency {value} is negative"
                raise DatasetError(msg, line_number)
            key = fields[0].strip()
            frequencies[key] = frequencies.get(key, 0.0) + value
    logger.info("Read %d term frequencies from %s", len(frequencies), path)
    return FrequencyTable(frequencies)


def filter_pairs(
    pairs: Sequence[CounterfactualPair],
    freq: FrequencyTable,
    thresholds: Mapping[BiasDimension, float] | None = None,
) -> list[CounterfactualPair]:
    """Keep pairs whose two terms both reach their dimension's frequency threshold.

    Dimensions missing from thresholds fall back to DEFAULT_THRESHOLDS.
    """
    limits = {**DEFAULT_THRESHOLDS, **(thresholds or {})}
    kept = [
        p
        for p in pairs
        if freq[p.dominant] >= limits[p.dimension] and freq[p.minority] >= limits[p.dimension]
    ]
    logger.info("Kept %d of %d pairs after frequency filtering", len(kept), len(pairs))
    return kept


def _mirror_case(replacement: str, original: str) -> str:
    if original[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    if original[:1].islower():
        return replacement[:1].lower() + replacement[1:]
    return replacement


def _fold(term: str) -> str:
    return " ".join(term.split()).casefold()


@dataclass(frozen=True)
class SwapTable:
    """Bidirectional term-to-counterpart map with its compiled matcher.

    The map is an involution: every term maps to a counterpart that maps back.
    """

    counterparts: Mapping[str, str]
    pattern: re.Pattern[str]

    @classmethod
    def build(
        cls,
        pairs: Iterable[CounterfactualPair],
        *,
        on_conflict: InvalidPolicy = "raise",
        diagnostics: Diagnostics | None = None,
    ) -> "SwapTable":
        """Build a swap table from pairs.

        A pair conflicts when one of its terms already maps to a different
        counterpart. Conflicting pairs are dropped whole when on_conflict is
        ``"skip"`` so the first pair seen wins.

        Raises:
            PairConflictError: On a conflicting pair when on_conflict is ``"raise"``

        """
        diagnostics = diagnostics if diagnostics is not None else Diagnostics()
        counterparts: dict[str, str] = {}
        for pair in pairs:
            dom, mino = _fold(pair.dominant), _fold(pair.minority)
            existing_dom, existing_min = counterparts.get(dom), counterparts.get(mino)
            if (existing_dom is None or _fold(existing_dom) == mino) and (
                existing_min is None or _fold(existing_min) == dom
            ):
                counterparts.setdefault(dom, pair.minority)
                counterparts.setdefault(mino, pair.dominant)
                continue
            msg = (
                f"Pair ({pair.dominant!r}, {pair.minority!r}) conflicts with "
                f"{dom!r}->{existing_dom!r} / {mino!r}->{existing_min!r}"
            )
            if on_conflict == "raise":
                raise PairConflictError(msg)
            diagnostics.note("conflict", msg)

        if diagnostics["conflict"]:
            logger.warning("Dropped %d conflicting pairs", diagnostics["conflict"])
        return cls(counterparts, _compile_terms(counterparts))

    def swap(self, text: str) -> str:
        """Replace every matched term by its counterpart in one pass."""
        if not self.counterparts:
            return text

        def replace(match: re.Match[str]) -> str:
            found = match.group(0)
            return _mirror_case(self.counterparts[_fold(found)], found)

        return self.pattern.sub(replace, text)


def _compile_terms(counterparts: Mapping[str, str]) -> re.Pattern[str]:
    # longest terms first so "african american" wins over "american"
    ordered = sorted(counterparts, key=lambda t: (-len(t), t))
    alternation = "|".join(r"\s+".join(re.escape(w) for w in t.split()) for t in ordered)
    # a trailing clitic (man's, he'd) still ends the term
    return re.compile(rf"(?<![\w'-])(?:{alternation})(?![\w-])", re.IGNORECASE)


def _as_table(pairs: Sequence[CounterfactualPair] | SwapTable) -> SwapTable:
    return pairs if isinstance(pairs, SwapTable) else SwapTable.build(pairs)


def swap_sentence(sentence: Sentence, pairs: Sequence[CounterfactualPair] | SwapTable) -> Sentence:
    """Swap every pair term in a sentence with its counterpart.

    Matching is case-insensitive, longest-match-first and word-boundary anchored.
    The first letter of each replacement copies the case of the replaced text.
    Replacements are never re-scanned, so applying the swap twice restores the
    sentence whenever its terms are spelled as in the pair list.

    Pass a :class:`SwapTable` built when the pair list is loaded to check it once
    up front; a raw pair list is checked here, on every call.

    Raises:
        PairConflictError: If a raw pair list maps one term to two counterparts

    """
    table = _as_table(pairs)
    return Sentence.from_text(table.swap(sentence.text), sentence.origin)


def apply_cda(corpus: Corpus, pairs: Sequence[CounterfactualPair] | SwapTable) -> Corpus:
    """Return the original sentences followed by their counterfactual versions.

    Sentences without any pair term are still emitted a second time, tagged
    counterfactual, so the output is always twice the input size.

    Raises:
        DatasetError: If the corpus already contains counterfactual sentences
        PairConflictError: If a raw pair list maps one term to two counterparts

    """
    table = _as_table(pairs)
    if any(s.origin == Origin.COUNTERFACTUAL for s in corpus):
        msg = "Corpus is already augmented (contains counterfactual sentences)"
        raise DatasetError(msg)
    originals = [s.with_origin(Origin.ORIGINAL) for s in corpus]
    swapped = [swap_sentence(s, table).with_origin(Origin.COUNTERFACTUAL) for s in originals]
    changed = sum(1 for a, b in zip(originals, swapped, strict=True) if a.text != b.text)
    logger.info("Augmented %d sentences (%d changed by swapping)", len(originals), changed)
    return Corpus([*originals, *swapped])


def build_cda_corpus(
    corpus: Corpus,
    pair_lists: Iterable[Sequence[CounterfactualPair] | SwapTable],
) -> Corpus:
    """Concatenate the 2-way CDA corpora of several pair lists (ALL-CDA)."""
    combined = Corpus()
    for pairs in pair_lists:
        combined = combined + apply_cda(corpus, pairs)
    return combined
