"""Deterministic construction of evaluation suites and synthetic corpora."""

import itertools
import json
import logging
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, TypeVar

import numpy as np

from .artifacts import write_text_atomic
from .bias_metrics import SimilarityTuple, StereoTriple
from .corpus import BiasDimension, Corpus
from .datasets import RegressionData, SimilarityExample
from .exceptions import ConfigError, DatasetError, InputFileError

logger = logging.getLogger(__name__)

T = TypeVar("T")

SUBJECT_SLOT = "<subject>"
ADJECTIVE_SLOT = "<adjective>"
VERB_SLOT = "<verb>"
OBJECT_SLOT = "<object>"
NOUN_SLOTS = (SUBJECT_SLOT, VERB_SLOT, OBJECT_SLOT)
ADJECTIVE_SLOTS = (ADJECTIVE_SLOT, VERB_SLOT, OBJECT_SLOT)
ARTICLE_PATTERN = re.compile(r"\ba/an\s+(\w)")
VOWELS = frozenset("aeiou")
DEFAULT_TEMPLATES = "templates.json"
SUITE_SAMPLE_SIZE = 16_384
MEANINGLESS_FILLS = ("banana", "tuesday", "staircase", "cucumber")
DEFAULT_LINKERS = ("is", "was", "seems")


@dataclass(frozen=True)
class TemplateSpec:
    """Sentence templates, slot fillers and identity terms for Bias-STS expansion.

    Noun templates carry ``<subject>``, ``<verb>`` and ``<object>``; adjective
    templates carry ``<adjective>`` instead of ``<subject>``. ``a/an`` before
    the object is resolved from the object's first letter.
    """

    noun_templates: tuple[str, ...]
    verbs: tuple[str, ...]
    objects: tuple[str, ...]
    identities: Mapping[str, tuple[str, ...]]
    adjective_templates: tuple[str, ...] = ()
    adjectives: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        """Validate slots and filler lists.

        Raises:
            ConfigError: If a template lacks a slot or repeats one, or a filler list is empty

        """
        if not self.noun_templates:
            msg = "TemplateSpec needs at least one noun template"
            raise ConfigError(msg)
        for template in self.noun_templates:
            _check_slots(template, NOUN_SLOTS)
        for template in self.adjective_templates:
            _check_slots(template, ADJECTIVE_SLOTS)
        if not self.verbs or not self.objects:
            msg = "TemplateSpec needs at least one verb and one object"
            raise ConfigError(msg)
        if bool(self.adjective_templates) != bool(self.adjectives):
            msg = "Adjective templates and adjectives must be given together"
            raise ConfigError(msg)

    @property
    def partners_per_slot(self) -> int:
        """Number of second sentences per (noun template, verb, object)."""
        return len(self.adjective_templates) * len(self.adjectives) or 1

    def tuple_count(self) -> int:
        """Closed-form number of tuples one dimension expands to."""
        return (
            len(self.noun_templates) * len(self.verbs) * len(self.objects) * self.partners_per_slot
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TemplateSpec":
        """Build from the JSON layout of the shipped template file.

        Raises:
            ConfigError: On missing or unknown keys

        """
        allowed = {
            "noun_templates",
            "verbs",
            "objects",
            "identities",
            "adjective_templates",
            "adjectives",
        }
        unknown = sorted(set(data) - allowed)
        if unknown:
            msg = f"Unknown template spec keys: {', '.join(unknown)}"
            raise ConfigError(msg)
        try:
            return cls(
                noun_templates=tuple(data["noun_templates"]),
                verbs=tuple(data["verbs"]),
                objects=tuple(data["objects"]),
                identities={k: tuple(v) for k, v in data["identities"].items()},
                adjective_templates=tuple(data.get("adjective_templates", ())),
                adjectives=tuple(data.get("adjectives", ())),
            )
        except KeyError as e:
            msg = f"Template spec is missing key {e}"
            raise ConfigError(msg) from e


def _check_slots(template: str, slots: Sequence[str]) -> None:
    for slot in slots:
        if template.count(slot) != 1:
            msg = f"Template {template!r} must contain {slot} exactly once"
            raise ConfigError(msg)


def load_template_spec(path: Path | None = None) -> TemplateSpec:
    """Read a template spec, the shipped default when no path is given.

    Raises:
        InputFileError: If path does not exist
        ConfigError: If the document is invalid

    """
    if path is None:
        asset = resources.files("modular_debias").joinpath("data", DEFAULT_TEMPLATES)
        text = asset.read_text("utf-8")
    elif not path.is_file():
        raise InputFileError(path)
    else:
        text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"Template spec is not valid JSON: {e}"
        raise ConfigError(msg) from e
    return TemplateSpec.from_dict(data)


def resolve_articles(text: str) -> str:
    """Replace ``a/an`` with the article matching the next word's first letter."""

    def choose(match: re.Match[str]) -> str:
        letter = match.group(1)
        article = "an" if letter.lower() in VOWELS else "a"
        return f"{article} {letter}"

    return ARTICLE_PATTERN.sub(choose, text)


def fill_template(template: str, slots: Mapping[str, str]) -> str:
    """Substitute slot values (keys like ``<verb>``) and resolve articles."""
    text = template
    for slot, value in slots.items():
        text = text.replace(slot, value)
    return resolve_articles(" ".join(text.split()))


def neutral_sentence(template: str, verb: str, obj: str) -> str:
    """Noun template with the identity modifier dropped (``The person ...``)."""
    return fill_template(template, {SUBJECT_SLOT: "", VERB_SLOT: verb, OBJECT_SLOT: obj})


def expand_bias_suite(spec: TemplateSpec, dimension: BiasDimension | str) -> list[SimilarityTuple]:
    """Expand every filler combination into one k-tuple of sentence pairs.

    Pair i of a tuple joins the sentence with identity term i to the shared
    second sentence (the adjective sentence, or the neutral sentence when the
    spec has no adjectives).

    Raises:
        ConfigError: If the dimension has no identity terms

    """
    name = str(dimension)
    identities = spec.identities.get(name, ())
    if not identities:
        msg = f"No identity terms for dimension {name!r}"
        raise ConfigError(msg)
    tuples: list[SimilarityTuple] = []
    for template, verb, obj in itertools.product(spec.noun_templates, spec.verbs, spec.objects):
        if spec.adjective_templates:
            partners = [
                fill_template(adj_form, {ADJECTIVE_SLOT: adj, VERB_SLOT: verb, OBJECT_SLOT: obj})
                for adj_form, adj in itertools.product(spec.adjective_templates, spec.adjectives)
            ]
        else:
            partners = [neutral_sentence(template, verb, obj)]
        firsts = [
            fill_template(template, {SUBJECT_SLOT: term, VERB_SLOT: verb, OBJECT_SLOT: obj})
            for term in identities
        ]
        for partner in partners:
            tuples.append(
                SimilarityTuple(
                    tuple_id=f"{name}-{len(tuples):06d}",
                    dimension=name,
                    identities=tuple(identities),
                    pairs=tuple((first, partner) for first in firsts),
                )
            )
    logger.info("Expanded %d %s tuples of size %d", len(tuples), name, len(identities))
    return tuples


def subsample(items: Sequence[T], n: int, seed: int) -> list[T]:
    """Uniform sample of n items without replacement, in original order.

    Raises:
        ConfigError: If n is negative or exceeds the number of items

    """
    return partition(items, n, seed)[0]


def partition(items: Sequence[T], n: int, seed: int) -> tuple[list[T], list[T]]:
    """Split items into a seeded sample of n and its complement, both in original order.

    Raises:
        ConfigError: If n is negative or exceeds the number of items

    """
    if not 0 <= n <= len(items):
        msg = f"Cannot sample {n} of {len(items)} items"
        raise ConfigError(msg)
    chosen = np.zeros(len(items), dtype=bool)
    chosen[np.random.default_rng(seed).choice(len(items), size=n, replace=False)] = True
    sample = [item for item, keep in zip(items, chosen, strict=True) if keep]
    rest = [item for item, keep in zip(items, chosen, strict=True) if not keep]
    return sample, rest


# suite files


@dataclass(frozen=True)
class SuiteRecord:
    """One sentence pair of a similarity tuple, as stored in suite files."""

    tuple_id: str
    component_index: int
    identity_term: str
    sentence_a: str
    sentence_b: str
    dimension: str

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        return {
            "tuple_id": self.tuple_id,
            "component_index": self.component_index,
            "identity_term": self.identity_term,
            "sentence_a": self.sentence_a,
            "sentence_b": self.sentence_b,
            "dimension": self.dimension,
        }


def suite_records(tuples: Iterable[SimilarityTuple]) -> list[SuiteRecord]:
    """Flatten tuples into per-pair records."""
    return [
        SuiteRecord(t.tuple_id, index, term, a, b, t.dimension)
        for t in tuples
        for index, (term, (a, b)) in enumerate(zip(t.identities, t.pairs, strict=True))
    ]


def group_records(records: Iterable[SuiteRecord]) -> list[SimilarityTuple]:
    """Reassemble tuples from records, in first-seen tuple order.

    Raises:
        DatasetError: If a tuple's component indices are not 0..k-1
            or its records disagree on the dimension

    """
    grouped: dict[str, list[SuiteRecord]] = {}
    for record in records:
        grouped.setdefault(record.tuple_id, []).append(record)
    tuples: list[SimilarityTuple] = []
    for tuple_id, members in grouped.items():
        members.sort(key=lambda r: r.component_index)
        if [r.component_index for r in members] != list(range(len(members))):
            msg = f"Tuple {tuple_id} has non-contiguous component indices"
            raise DatasetError(msg)
        dimensions = {r.dimension for r in members}
        if len(dimensions) != 1:
            msg = f"Tuple {tuple_id} mixes dimensions {sorted(dimensions)}"
            raise DatasetError(msg)
        tuples.append(
            SimilarityTuple(
                tuple_id=tuple_id,
                dimension=members[0].dimension,
                identities=tuple(r.identity_term for r in members),
                pairs=tuple((r.sentence_a, r.sentence_b) for r in members),
            )
        )
    return tuples


def write_suite(path: Path, tuples: Iterable[SimilarityTuple]) -> None:
    """Write a suite atomically as JSON lines, one record per sentence pair."""
    lines = [json.dumps(r.to_dict(), sort_keys=True) for r in suite_records(tuples)]
    write_text_atomic(path, "".join(f"{line}\n" for line in lines))


def read_suite(path: Path) -> list[SimilarityTuple]:
    """Read a suite written by :func:`write_suite`.

    Raises:
        InputFileError: If the file does not exist
        DatasetError: On a malformed line, naming its line number

    """
    if not path.is_file():
        raise InputFileError(path)
    records: list[SuiteRecord] = []
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                records.append(
                    SuiteRecord(
                        tuple_id=str(raw["tuple_id"]),
                        component_index=int(raw["component_index"]),
                        identity_term=str(raw["identity_term"]),
                        sentence_a=str(raw["sentence_a"]),
                        sentence_b=str(raw["sentence_b"]),
                        dimension=str(raw.get("dimension", raw["tuple_id"].split("-")[0])),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DatasetError(str(e), line_number) from e
    return group_records(records)


def load_similarity_dataset(path: Path) -> RegressionData:
    """Read a ``sentence1<TAB>sentence2<TAB>score`` similarity file.

    Raises:
        InputFileError: If the file does not exist
        DatasetError: On a column-count mismatch or score outside [0, 5], naming the line

    """
    if not path.is_file():
        raise InputFileError(path)
    examples: list[SimilarityExample] = []
    with path.open(encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:  # noqa: PLR2004
                msg = f"expected 3 tab-separated fields, got {len(fields)}"
                raise DatasetError(msg, line_number)
            try:
                examples.append(SimilarityExample(fields[0], fields[1], float(fields[2])))
            except (ValueError, DatasetError) as e:
                raise DatasetError(str(e), line_number) from e
    if not examples:
        logger.warning("Similarity dataset %s is empty", path)
    else:
        logger.info("Loaded %d similarity pairs from %s", len(examples), path)
    return RegressionData(examples)


def write_similarity_dataset(path: Path, data: RegressionData) -> None:
    """Write a similarity dataset atomically as three tab-separated columns."""
    lines = [f"{e.sentence_a}\t{e.sentence_b}\t{e.score!r}\n" for e in data.examples]
    write_text_atomic(path, "".join(lines))


# synthetic corpora


@dataclass(frozen=True)
class SynthCorpusSpec:
    """A corpus where each identity leans toward one pole of attributes.

    For the first identity of a pair, attributes come from ``pole_a`` with
    probability ``skew``; the second identity mirrors this with ``pole_b``.
    """

    identity_pairs: tuple[tuple[str, str], ...]
    pole_a: tuple[str, ...]
    pole_b: tuple[str, ...]
    skew: float = 0.95
    count: int = 1000
    seed: int = 0
    linkers: tuple[str, ...] = field(default=DEFAULT_LINKERS)

    def __post_init__(self) -> None:
        """Validate the spec.

        Raises:
            ConfigError: On an invalid field

        """
        if not 0.5 <= self.skew <= 1.0:  # noqa: PLR2004
            msg = f"skew must lie in [0.5, 1.0], got {self.skew}"
            raise ConfigError(msg)
        if self.count < 0:
            msg = f"count must be non-negative, got {self.count}"
            raise ConfigError(msg)
        if not self.identity_pairs or not self.pole_a or not self.pole_b or not self.linkers:
            msg = "identity pairs, both attribute poles and linkers must be non-empty"
            raise ConfigError(msg)
        if set(self.pole_a) & set(self.pole_b):
            msg = "attribute poles must be disjoint"
            raise ConfigError(msg)

    def identities(self) -> list[str]:
        """Every identity term, pair by pair."""
        return [term for pair in self.identity_pairs for term in pair]


def synth_bias_corpus(spec: SynthCorpusSpec) -> Corpus:
    """Generate ``<identity> <linker> <attribute>.`` sentences with the spec's skew."""
    rng = np.random.default_rng(spec.seed)
    pair_index = rng.integers(len(spec.identity_pairs), size=spec.count)
    side = rng.integers(2, size=spec.count)
    linker_index = rng.integers(len(spec.linkers), size=spec.count)
    on_own_pole = rng.random(spec.count) < spec.skew
    attr_draw = rng.random(spec.count)
    texts: list[str] = []
    for i in range(spec.count):
        identity = spec.identity_pairs[pair_index[i]][side[i]]
        own, other = (spec.pole_a, spec.pole_b) if side[i] == 0 else (spec.pole_b, spec.pole_a)
        pole = own if on_own_pole[i] else other
        attribute = pole[int(attr_draw[i] * len(pole))]
        texts.append(f"{identity} {spec.linkers[linker_index[i]]} {attribute}.")
    logger.info("Generated %d synthetic sentences (skew %.2f)", len(texts), spec.skew)
    return Corpus.from_texts(texts)


def synth_triple_suite(spec: SynthCorpusSpec, dimension: str = "synthetic") -> list[StereoTriple]:
    """Stereotype triples matched to a synthetic corpus.

    For every identity, linker and (pole-A, pole-B) attribute combination the
    context is ``<identity> <linker> BLANK.``; the stereotype is the attribute
    from the identity's own pole, the anti-stereotype the other pole's.
    """
    triples: list[StereoTriple] = []
    meaningless = itertools.cycle(MEANINGLESS_FILLS)
    for first, second in spec.identity_pairs:
        sides = ((first, spec.pole_a, spec.pole_b), (second, spec.pole_b, spec.pole_a))
        for identity, own, other in sides:
            attributes = itertools.product(own, other)
            for linker, (stereo, anti) in itertools.product(spec.linkers, attributes):
                triples.append(
                    StereoTriple(
                        id=f"{dimension}-{len(triples):05d}",
                        context=f"{identity} {linker} BLANK.",
                        stereotype=stereo,
                        anti_stereotype=anti,
                        meaningless=next(meaningless),
                        dimension=dimension,
                    )
                )
    return triples
