"""Fairness and bias metrics.

Every model-scoring metric accepts either a :class:`ModelScorer` (a model and
its vocabulary) or a :class:`ScoreLog` of pre-computed scores, so externally
produced (e.g. multilingual) evaluations go through the same code.
"""

import difflib
import json
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Literal

import numpy as np
import torch
from scipy import stats

from .artifacts import write_text_atomic
from .corpus import MASK_ID, Vocabulary, tokenize
from .datasets import pad_batch
from .exceptions import DatasetError, InputFileError, MetricError, UndefinedMetricError
from .tinylm import HeadKind, TinyLM

logger = logging.getLogger(__name__)

BLANK = "BLANK"
TIE_CREDIT = 0.5
DEFAULT_POWER = -5.0
DEFAULT_W0 = 0.25
DEFAULT_SUBMETRIC_WEIGHTS = (0.25, 0.25, 0.25)
SUBMETRICS = ("subgroup_auc", "bpsn_auc", "bnsp_auc")
JIGSAW_SUBGROUPS = (
    "male",
    "female",
    "homosexual_gay_or_lesbian",
    "christian",
    "jewish",
    "muslim",
    "black",
    "white",
    "psychiatric_or_mental_illness",
)
STS_DIMENSION = "sts"
PREDICTION_ROLE = "prediction"

Reduction = Literal["log", "raw"]


def round_half_up(value: float, places: int = 2) -> float:
    """Round for display the way reports do (0.125 -> 0.13)."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


# benchmark instances


@dataclass(frozen=True)
class StereoTriple:
    """A context with one blank and three fills."""

    id: str
    context: str
    stereotype: str
    anti_stereotype: str
    meaningless: str
    dimension: str

    def __post_init__(self) -> None:
        """Validate the blank and the fills.

        Raises:
            DatasetError: Unless there is exactly one blank and three distinct fills

        """
        if self.context.count(BLANK) != 1:
            msg = f"Triple {self.id}: context must contain exactly one {BLANK}"
            raise DatasetError(msg)
        fills = {f.casefold() for f in (self.stereotype, self.anti_stereotype, self.meaningless)}
        if len(fills) != 3:  # noqa: PLR2004
            msg = f"Triple {self.id}: fills must be distinct"
            raise DatasetError(msg)

    def render(self, fill: str) -> tuple[list[str], list[int]]:
        """Tokens of the filled sentence and the positions of the fill's tokens."""
        before, after = self.context.split(BLANK)
        prefix, filled = tokenize(before), tokenize(fill)
        start = len(prefix)
        return [*prefix, *filled, *tokenize(after)], list(range(start, start + len(filled)))


@dataclass(frozen=True)
class CrowsMinimalPair:
    """A stereotypical and an anti-stereotypical sentence."""

    id: str
    stereotypical: str
    anti_stereotypical: str
    dimension: str

    def __post_init__(self) -> None:
        """Validate that the sentences differ.

        Raises:
            DatasetError: If both sentences have the same tokens

        """
        if tokenize(self.stereotypical) == tokenize(self.anti_stereotypical):
            msg = f"Pair {self.id}: sentences do not differ"
            raise DatasetError(msg)


@dataclass(frozen=True)
class SimilarityTuple:
    """k sentence pairs sharing one template, one per identity term."""

    tuple_id: str
    dimension: str
    identities: tuple[str, ...]
    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        """Validate k.

        Raises:
            DatasetError: If k < 2 or identities and pairs disagree

        """
        if len(self.pairs) < 2 or len(self.pairs) != len(self.identities):  # noqa: PLR2004
            msg = f"Tuple {self.tuple_id}: needs k >= 2 pairs, one per identity"
            raise DatasetError(msg)

    @property
    def k(self) -> int:
        """Number of identity components."""
        return len(self.pairs)


@dataclass(frozen=True)
class AnnotatedComment:
    """A comment with its toxicity label, model score and identity flags."""

    text: str
    toxic: int
    score: float
    subgroups: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        """Validate label, score and flags.

        Raises:
            DatasetError: On an invalid field

        """
        if self.toxic not in (0, 1):
            msg = f"toxicity label must be 0 or 1, got {self.toxic!r}"
            raise DatasetError(msg)
        if not 0.0 <= self.score <= 1.0:
            msg = f"model score must lie in [0, 1], got {self.score!r}"
            raise DatasetError(msg)
        unknown = sorted(self.subgroups - set(JIGSAW_SUBGROUPS))
        if unknown:
            msg = f"unknown subgroup flags: {', '.join(unknown)}"
            raise DatasetError(msg)


def read_comments(path: Path) -> list[AnnotatedComment]:
    """Read ``{text, toxic, score, subgroups}`` JSON lines.

    Raises:
        InputFileError: If the file does not exist
        DatasetError: On a malformed line, naming its line number

    """
    if not path.is_file():
        raise InputFileError(path)
    comments: list[AnnotatedComment] = []
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                comments.append(
                    AnnotatedComment(
                        text=str(record["text"]),
                        toxic=int(record["toxic"]),
                        score=float(record["score"]),
                        subgroups=frozenset(record.get("subgroups", [])),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, DatasetError) as e:
                raise DatasetError(str(e), line_number) from e
    return comments


# score sources


@dataclass(frozen=True)
class ScoreRecord:
    """One externally computed score."""

    id: str
    dimension: str
    role: str
    score: float


class ScoreLog:
    """Pre-computed scores keyed by (item id, role).

    Roles: ``stereo``, ``anti``, ``meaningless`` (benchmarks), ``component-<i>``
    (similarity tuples) and ``prediction`` (plain STS rows).
    """

    def __init__(self, records: Iterable[ScoreRecord]) -> None:
        """Index records.

        Raises:
            DatasetError: On a duplicate (id, role)

        """
        self.records: list[ScoreRecord] = []
        self._index: dict[tuple[str, str], ScoreRecord] = {}
        for record in records:
            key = (record.id, record.role)
            if key in self._index:
                msg = f"Duplicate score for id {record.id!r}, role {record.role!r}"
                raise DatasetError(msg)
            self._index[key] = record
            self.records.append(record)

    def __len__(self) -> int:
        """Return the number of records."""
        return len(self.records)

    def score(self, item_id: str, role: str) -> float:
        """Score of one item and role.

        Raises:
            MetricError: If the score is missing

        """
        record = self._index.get((item_id, role))
        if record is None:
            msg = f"Score log has no entry for id {item_id!r}, role {role!r}"
            raise MetricError(msg)
        return record.score

    @classmethod
    def read(cls, path: Path) -> "ScoreLog":
        """Read ``{id, dimension, role, score}`` JSON lines.

        Raises:
            InputFileError: If the file does not exist
            DatasetError: On a malformed line, naming its line number

        """
        if not path.is_file():
            raise InputFileError(path)
        records: list[ScoreRecord] = []
        with path.open(encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                    score = float(raw["score"])
                    if not math.isfinite(score):
                        msg = f"score {score} is not finite"
                        raise DatasetError(msg)
                    records.append(
                        ScoreRecord(str(raw["id"]), str(raw["dimension"]), str(raw["role"]), score)
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError, DatasetError) as e:
                    raise DatasetError(str(e), line_number) from e
        logger.info("Read %d scores from %s", len(records), path)
        return cls(records)

    def write(self, path: Path) -> None:
        """Write the log atomically as JSON lines."""
        lines = [
            json.dumps(
                {"id": r.id, "dimension": r.dimension, "role": r.role, "score": r.score},
                sort_keys=True,
            )
            for r in self.records
        ]
        write_text_atomic(path, "".join(f"{line}\n" for line in lines))


@dataclass
class ModelScorer:
    """A model and vocabulary used as a score source."""

    model: TinyLM
    vocab: Vocabulary

    def pll(
        self, tokens: Sequence[str], targets: Sequence[int], reduce: Reduction = "log"
    ) -> float:
        """Pseudo-log-likelihood of target positions, see :func:`pll_score`."""
        return pll_score(self.model, self.vocab, tokens, targets, reduce=reduce)

    def predict_pairs(self, pairs: Sequence[tuple[str, str]], batch_size: int = 64) -> np.ndarray:
        """Regression-head similarity scores for sentence pairs."""
        if self.model.head_kind != HeadKind.REGRESSION:
            msg = f"Similarity scoring needs a regression head, model has {self.model.head_kind}"
            raise MetricError(msg)
        max_len = self.model.config.max_seq_len
        encoded = [self.vocab.encode_pair(tokenize(a), tokenize(b), max_len) for a, b in pairs]
        self.model.eval()
        outputs: list[np.ndarray] = []
        with torch.no_grad():
            for start in range(0, len(encoded), batch_size):
                ids, mask = pad_batch(encoded[start : start + batch_size])
                outputs.append(self.model(ids, mask).double().numpy())
        return np.concatenate(outputs) if outputs else np.zeros(0)


ScoreSource = ModelScorer | ScoreLog


def pll_score(
    model: TinyLM,
    vocab: Vocabulary,
    tokens: Sequence[str],
    targets: Sequence[int],
    *,
    reduce: Reduction = "log",
) -> float:
    """Mean log-probability of the original token at each target, masked one at a time.

    The single-mask copies are scored in one batched forward pass. With
    ``reduce="raw"`` the mean of the probabilities is returned instead.

    Args:
        model: Model with an MLM head
        vocab: Vocabulary the model was trained with
        tokens: Sentence tokens (without special tokens)
        targets: 0-based token positions to score

    Raises:
        MetricError: If targets are empty or out of range, or the head is not MLM

    """
    if model.head_kind != HeadKind.MLM:
        msg = f"Pseudo-log-likelihood needs an MLM head, model has {model.head_kind}"
        raise MetricError(msg)
    if not targets:
        msg = "pll_score needs at least one target position"
        raise MetricError(msg)
    if any(t < 0 or t >= len(tokens) for t in targets):
        msg = f"Target positions {list(targets)} out of range for {len(tokens)} tokens"
        raise MetricError(msg)
    if len(tokens) + 2 > model.config.max_seq_len:
        limit = model.config.max_seq_len
        msg = f"Sentence of {len(tokens)} tokens does not fit max_seq_len {limit}"
        raise MetricError(msg)
    ids = torch.tensor(vocab.encode_sentence(tokens, len(tokens) + 2))
    positions = torch.tensor([t + 1 for t in targets])
    batch = ids.repeat(len(targets), 1)
    batch[torch.arange(len(targets)), positions] = MASK_ID
    model.eval()
    with torch.no_grad():
        logits = model(batch, torch.ones_like(batch, dtype=torch.bool))
        log_probs = torch.log_softmax(logits.double(), dim=-1)
        picked = log_probs[torch.arange(len(targets)), positions, ids[positions]]
    if reduce == "raw":
        return float(picked.exp().mean())
    return float(picked.mean())


def preference_percent(preferred: Sequence[float], other: Sequence[float]) -> float:
    """100 x share of items where preferred > other, ties counting half."""
    a, b = np.asarray(preferred, dtype=float), np.asarray(other, dtype=float)
    if a.size == 0:
        msg = "Cannot compute a preference percentage over zero items"
        raise MetricError(msg)
    wins = np.count_nonzero(a > b) + TIE_CREDIT * np.count_nonzero(a == b)
    return float(100.0 * wins / a.size)


# StereoSet


@dataclass(frozen=True)
class StereoSetResult:
    """Stereotype score and LM score, overall and per dimension."""

    ss: float
    lm_score: float
    count: int
    by_dimension: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        return {
            "ss": self.ss,
            "lm_score": self.lm_score,
            "count": self.count,
            "by_dimension": self.by_dimension,
        }


def _triple_scores(source: ScoreSource, triple: StereoTriple) -> tuple[float, float, float]:
    if isinstance(source, ScoreLog):
        return (
            source.score(triple.id, "stereo"),
            source.score(triple.id, "anti"),
            source.score(triple.id, "meaningless"),
        )
    fills = (triple.stereotype, triple.anti_stereotype, triple.meaningless)
    stereo, anti, meaningless = (source.pll(*triple.render(fill)) for fill in fills)
    return stereo, anti, meaningless


def _stereoset_numbers(scores: np.ndarray) -> tuple[float, float]:
    stereo, anti, meaningless = scores[:, 0], scores[:, 1], scores[:, 2]
    ss = preference_percent(stereo, anti)
    lm = preference_percent(np.maximum(stereo, anti), meaningless)
    return ss, lm


def stereoset_eval(source: ScoreSource, triples: Sequence[StereoTriple]) -> StereoSetResult:
    """Percent of triples preferring the stereotype (SS) and a meaningful fill (LM score).

    Raises:
        MetricError: If there are no triples

    """
    if not triples:
        msg = "stereoset_eval needs at least one triple"
        raise MetricError(msg)
    scores = np.array([_triple_scores(source, t) for t in triples], dtype=float)
    ss, lm = _stereoset_numbers(scores)
    dimensions = np.array([t.dimension for t in triples])
    by_dimension = {}
    for dimension in sorted(set(dimensions.tolist())):
        dim_ss, dim_lm = _stereoset_numbers(scores[dimensions == dimension])
        by_dimension[dimension] = {"ss": dim_ss, "lm_score": dim_lm}
    logger.info("StereoSet over %d triples: SS %.2f, LM %.2f", len(triples), ss, lm)
    return StereoSetResult(ss, lm, len(triples), by_dimension)


# CrowS-Pairs


def unique_token_positions(
    first: Sequence[str], second: Sequence[str]
) -> tuple[list[int], list[int]]:
    """Positions of tokens each sentence does not share with the other.

    Shared tokens are the aligned matching blocks of the two (lowercased)
    token sequences.
    """
    a = [t.lower() for t in first]
    b = [t.lower() for t in second]
    shared_a: set[int] = set()
    shared_b: set[int] = set()
    matcher = difflib.SequenceMatcher(a=a, b=b, autojunk=False)
    for block in matcher.get_matching_blocks():
        shared_a.update(range(block.a, block.a + block.size))
        shared_b.update(range(block.b, block.b + block.size))
    return (
        [i for i in range(len(a)) if i not in shared_a],
        [i for i in range(len(b)) if i not in shared_b],
    )


@dataclass(frozen=True)
class CrowsResult:
    """CrowS-Pairs stereotype score."""

    ss: float
    count: int
    skipped: int
    by_dimension: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        return {
            "ss": self.ss,
            "count": self.count,
            "skipped": self.skipped,
            "by_dimension": self.by_dimension,
        }


def crows_eval(
    source: ScoreSource,
    pairs: Sequence[CrowsMinimalPair],
    *,
    reduce: Reduction = "log",
) -> CrowsResult:
    """Percent of pairs where the stereotypical sentence's unique tokens score higher.

    Pairs where either side has no unique token are skipped and counted.

    Raises:
        MetricError: If no pair can be scored

    """
    stereo_scores: list[float] = []
    anti_scores: list[float] = []
    dimensions: list[str] = []
    skipped = 0
    for pair in pairs:
        if isinstance(source, ScoreLog):
            stereo = source.score(pair.id, "stereo")
            anti = source.score(pair.id, "anti")
        else:
            stereo_tokens = tokenize(pair.stereotypical)
            anti_tokens = tokenize(pair.anti_stereotypical)
            stereo_unique, anti_unique = unique_token_positions(stereo_tokens, anti_tokens)
            if not stereo_unique or not anti_unique:
                skipped += 1
                logger.debug("Skipping pair %s: no unique tokens on one side", pair.id)
                continue
            stereo = source.pll(stereo_tokens, stereo_unique, reduce)
            anti = source.pll(anti_tokens, anti_unique, reduce)
        stereo_scores.append(stereo)
        anti_scores.append(anti)
        dimensions.append(pair.dimension)
    if skipped:
        logger.warning("Skipped %d CrowS pairs without unique tokens", skipped)
    if not stereo_scores:
        msg = "No CrowS pair could be scored"
        raise MetricError(msg)
    ss = preference_percent(stereo_scores, anti_scores)
    by_dimension = {}
    dims = np.array(dimensions)
    for dimension in sorted(set(dimensions)):
        chosen = dims == dimension
        by_dimension[dimension] = preference_percent(
            np.asarray(stereo_scores)[chosen], np.asarray(anti_scores)[chosen]
        )
    return CrowsResult(ss, len(stereo_scores), skipped, by_dimension)


# Bias-STS


def multiway_delta(scores: Sequence[float]) -> float:
    """Mean absolute difference over all unordered pairs of the k scores.

    Raises:
        MetricError: If k < 2

    """
    values = np.asarray(scores, dtype=float)
    if values.size < 2:  # noqa: PLR2004
        msg = f"multiway_delta needs k >= 2 scores, got {values.size}"
        raise MetricError(msg)
    upper = np.triu_indices(values.size, k=1)
    return float(np.abs(values[:, None] - values[None, :])[upper].mean())


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of two series.

    Raises:
        MetricError: On unequal lengths, fewer than two points or a constant series

    """
    x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        msg = f"pearson needs two equal-length series, got {x.shape} and {y.shape}"
        raise MetricError(msg)
    if x.size < 2:  # noqa: PLR2004
        msg = "pearson needs at least two points"
        raise MetricError(msg)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        msg = "Pearson correlation is undefined for a constant series"
        raise MetricError(msg)
    return float(stats.pearsonr(x, y).statistic)


def useful_fairness(rho: float, delta: float, alpha: float = 1.0) -> float:
    """Useful fairness: ``rho * alpha * (1 - delta)``.

    Raises:
        MetricError: If alpha is not positive

    """
    if alpha <= 0:
        msg = f"alpha must be positive, got {alpha}"
        raise MetricError(msg)
    return rho * alpha * (1.0 - delta)


def tuple_scores(source: ScoreSource, tuples: Sequence[SimilarityTuple]) -> list[np.ndarray]:
    """The k similarity scores of every tuple."""
    if isinstance(source, ScoreLog):
        return [
            np.array([source.score(t.tuple_id, f"component-{i}") for i in range(t.k)])
            for t in tuples
        ]
    flat = [pair for t in tuples for pair in t.pairs]
    predictions = source.predict_pairs(flat)
    scores: list[np.ndarray] = []
    offset = 0
    for t in tuples:
        scores.append(predictions[offset : offset + t.k])
        offset += t.k
    return scores


@dataclass(frozen=True)
class BiasStsResult:
    """Mean multi-way delta of one dimension's similarity tuples."""

    dimension: str
    delta: float
    count: int

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        return {"dimension": self.dimension, "delta": self.delta, "count": self.count}


def bias_sts_eval(
    source: ScoreSource,
    tuples: Sequence[SimilarityTuple],
    scale: float = 1.0,
) -> BiasStsResult:
    """Average the multi-way delta over tuples of a single dimension.

    Scores are divided by scale first (5 maps 0-5 similarity onto [0, 1]).

    Raises:
        MetricError: If there are no tuples, they mix dimensions or scale is not positive

    """
    if scale <= 0:
        msg = f"scale must be positive, got {scale}"
        raise MetricError(msg)
    if not tuples:
        msg = "bias_sts_eval needs at least one tuple"
        raise MetricError(msg)
    dimensions = {t.dimension for t in tuples}
    if len(dimensions) != 1:
        msg = f"Tuples mix dimensions: {sorted(dimensions)}"
        raise MetricError(msg)
    deltas = [multiway_delta(s / scale) for s in tuple_scores(source, tuples)]
    result = BiasStsResult(dimensions.pop(), float(np.mean(deltas)), len(tuples))
    logger.info(
        "Bias-STS %s: delta %.4f over %d tuples", result.dimension, result.delta, result.count
    )
    return result


def sts_eval(
    source: ScoreSource,
    pairs: Sequence[tuple[str, str]],
    gold: Sequence[float],
) -> float:
    """Pearson correlation between predicted and gold similarity.

    With a score log, row i is looked up as id ``str(i)``, role ``prediction``.
    """
    if isinstance(source, ScoreLog):
        predictions = np.array([source.score(str(i), PREDICTION_ROLE) for i in range(len(pairs))])
    else:
        predictions = source.predict_pairs(pairs)
    return pearson(predictions, gold)


# ROC-AUC and Jigsaw


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic with midranks.

    Raises:
        UndefinedMetricError: If only one class is present
        MetricError: On mismatched lengths or non-binary labels

    """
    s, y = np.asarray(scores, dtype=float), np.asarray(labels)
    if s.shape != y.shape:
        msg = f"scores and labels differ in shape: {s.shape} vs {y.shape}"
        raise MetricError(msg)
    if not np.isin(y, (0, 1)).all():
        msg = "labels must be 0 or 1"
        raise MetricError(msg)
    positives = int(np.count_nonzero(y == 1))
    negatives = y.size - positives
    if positives == 0 or negatives == 0:
        msg = "ROC-AUC is undefined when only one class is present"
        raise UndefinedMetricError(msg)
    ranks = stats.rankdata(s)
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - positives * (positives + 1) / 2.0) / (positives * negatives)


@dataclass(frozen=True)
class JigsawSubmetrics:
    """Per-subgroup AUCs; None marks an undefined (single-class) subset."""

    subgroup: str
    subgroup_auc: float | None
    bpsn_auc: float | None
    bnsp_auc: float | None
    size: int

    @property
    def defined(self) -> bool:
        """Whether all three AUCs are defined."""
        return None not in (self.subgroup_auc, self.bpsn_auc, self.bnsp_auc)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        return {
            "subgroup": self.subgroup,
            "subgroup_auc": self.subgroup_auc,
            "bpsn_auc": self.bpsn_auc,
            "bnsp_auc": self.bnsp_auc,
            "size": self.size,
        }


def _auc_or_none(comments: Sequence[AnnotatedComment], what: str) -> float | None:
    try:
        return roc_auc([c.score for c in comments], [c.toxic for c in comments])
    except UndefinedMetricError:
        logger.debug("%s is undefined (single class)", what)
        return None


def jigsaw_submetrics(comments: Sequence[AnnotatedComment], subgroup: str) -> JigsawSubmetrics:
    """Subgroup, BPSN and BNSP AUCs for one identity subgroup.

    Raises:
        MetricError: If the subgroup is not a known Jigsaw identity

    """
    if subgroup not in JIGSAW_SUBGROUPS:
        msg = f"Unknown subgroup {subgroup!r}"
        raise MetricError(msg)
    flagged = [c for c in comments if subgroup in c.subgroups]
    background = [c for c in comments if subgroup not in c.subgroups]
    bpsn = [c for c in flagged if not c.toxic] + [c for c in background if c.toxic]
    bnsp = [c for c in flagged if c.toxic] + [c for c in background if not c.toxic]
    return JigsawSubmetrics(
        subgroup=subgroup,
        subgroup_auc=_auc_or_none(flagged, f"{subgroup} subgroup AUC"),
        bpsn_auc=_auc_or_none(bpsn, f"{subgroup} BPSN AUC"),
        bnsp_auc=_auc_or_none(bnsp, f"{subgroup} BNSP AUC"),
        size=len(flagged),
    )


def generalized_mean(values: Sequence[float], p: float = DEFAULT_POWER) -> float:
    """Power mean ``((1/N) sum v^p)^(1/p)``.

    Raises:
        MetricError: If values are empty or negative, p is 0, or a zero meets p < 0

    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        msg = "generalized_mean needs at least one value"
        raise MetricError(msg)
    if p == 0:
        msg = "generalized_mean is not defined for p = 0"
        raise MetricError(msg)
    if (v < 0).any() or (p < 0 and (v == 0).any()):
        msg = f"generalized_mean with p={p} needs positive values"
        raise MetricError(msg)
    return float(np.mean(v**p) ** (1.0 / p))


def jigsaw_overall(
    auc_overall: float,
    submetric_means: Sequence[float | None],
    w0: float = DEFAULT_W0,
    weights: Sequence[float] = DEFAULT_SUBMETRIC_WEIGHTS,
) -> float:
    """Weighted final score ``w0 * AUC + sum_a w_a * M_p(m_a)``.

    Raises:
        MetricError: If a submetric mean is undefined or the weight count differs

    """
    if any(m is None for m in submetric_means):
        msg = "Undefined submetric values present; exclude those subgroups explicitly"
        raise MetricError(msg)
    if len(weights) != len(submetric_means):
        msg = f"{len(weights)} weights for {len(submetric_means)} submetric means"
        raise MetricError(msg)
    means = [float(m) for m in submetric_means if m is not None]
    return w0 * auc_overall + sum(w * m for w, m in zip(weights, means, strict=True))


@dataclass(frozen=True)
class JigsawReport:
    """Overall AUC, per-subgroup submetrics, their power means and the final score."""

    overall_auc: float
    submetrics: tuple[JigsawSubmetrics, ...]
    means: dict[str, float]
    overall: float
    excluded: tuple[str, ...]
    power: float = DEFAULT_POWER

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a plain dict."""
        return {
            "overall_auc": self.overall_auc,
            "submetrics": [s.to_dict() for s in self.submetrics],
            "means": self.means,
            "overall": self.overall,
            "excluded": list(self.excluded),
            "power": self.power,
        }


def jigsaw_evaluate(
    comments: Sequence[AnnotatedComment],
    subgroups: Sequence[str] = JIGSAW_SUBGROUPS,
    p: float = DEFAULT_POWER,
    *,
    exclude_undefined: bool = True,
) -> JigsawReport:
    """Full Jigsaw bias evaluation of scored comments.

    Subgroups with any undefined submetric are excluded from the means (and
    listed) when exclude_undefined is set; otherwise they are an error.

    Raises:
        UndefinedMetricError: If the overall AUC is undefined
        MetricError: If no subgroup is usable, or one is undefined and not excluded

    """
    overall_auc = roc_auc([c.score for c in comments], [c.toxic for c in comments])
    table = tuple(jigsaw_submetrics(comments, s) for s in subgroups)
    undefined = tuple(m.subgroup for m in table if not m.defined)
    if undefined and not exclude_undefined:
        msg = f"Undefined submetrics for subgroups: {', '.join(undefined)}"
        raise MetricError(msg)
    if undefined:
        logger.warning("Excluding subgroups with undefined submetrics: %s", ", ".join(undefined))
    usable = [m for m in table if m.defined]
    if not usable:
        msg = "No subgroup has defined submetrics"
        raise MetricError(msg)
    means = {
        name: generalized_mean([float(getattr(m, name)) for m in usable], p) for name in SUBMETRICS
    }
    overall = jigsaw_overall(overall_auc, [means[name] for name in SUBMETRICS])
    return JigsawReport(overall_auc, table, means, overall, undefined, p)


TRIPLE_FIELDS = ("id", "context", "stereotype", "anti_stereotype", "meaningless", "dimension")
PAIR_FIELDS = ("id", "stereotypical", "anti_stereotypical", "dimension")


def _record_fields(record: Mapping[str, Any], names: Sequence[str], index: int) -> dict[str, str]:
    missing = [name for name in names if name not in record]
    if missing:
        msg = f"record is missing {', '.join(missing)}"
        raise DatasetError(msg, index)
    return {name: str(record[name]) for name in names}


def stereo_triples_from_records(records: Iterable[Mapping[str, Any]]) -> list[StereoTriple]:
    """Build triples from ``{id, context, stereotype, anti_stereotype, meaningless, dimension}``.

    Raises:
        DatasetError: If a record lacks a field or breaks the triple rules

    """
    return [
        StereoTriple(**_record_fields(r, TRIPLE_FIELDS, i))
        for i, r in enumerate(records, start=1)
    ]


def crows_pairs_from_records(records: Iterable[Mapping[str, Any]]) -> list[CrowsMinimalPair]:
    """Build minimal pairs from ``{id, stereotypical, anti_stereotypical, dimension}``."""
    return [
        CrowsMinimalPair(**_record_fields(r, PAIR_FIELDS, i))
        for i, r in enumerate(records, start=1)
    ]


def read_jsonl(path: Path) -> list[dict[str, Any]]:
    """Read JSON lines into dicts.

    Raises:
        InputFileError: If the file does not exist
        DatasetError: On a malformed line, naming its line number

    """
    if not path.is_file():
        raise InputFileError(path)
    records: list[dict[str, Any]] = []
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DatasetError(str(e), line_number) from e
    return records
