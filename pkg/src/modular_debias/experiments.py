"""Desk-scale synthetic experiments: debiasing with a DBA and fusing several DBAs."""

import copy
import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .bench_gen import SynthCorpusSpec, synth_bias_corpus, synth_triple_suite
from .bias_metrics import (
    ModelScorer,
    SimilarityTuple,
    bias_sts_eval,
    pearson,
    stereoset_eval,
    useful_fairness,
)
from .cda_pipeline import CounterfactualPair, apply_cda
from .corpus import BiasDimension, Corpus, Vocabulary
from .datasets import MAX_SIMILARITY, MlmData, RegressionData, SimilarityExample
from .tinylm import AdapterConfig, EncoderConfig, HeadKind, TinyLM, WiringMode, build_model
from .training import TrainConfig, derive_seed, predict, train

logger = logging.getLogger(__name__)

POLE_A = ("brave", "strong", "loud", "rich")
POLE_B = ("gentle", "kind", "quiet", "poor")
LINKERS = ("is", "was", "seems")
ATTRIBUTES = POLE_A + POLE_B
NEUTRAL_SUBJECT = "person"
IDENTITY_PAIRS: dict[BiasDimension, tuple[tuple[str, str], ...]] = {
    BiasDimension.GENDER: (("he", "she"), ("man", "woman")),
    BiasDimension.RELIGION: (("christian", "muslim"), ("priest", "imam")),
}
SAME_ATTRIBUTE_SCORE = 5.0
SAME_POLE_SCORE = 2.5
INJECTED_BIAS = 1.0
TASK_ADAPTER = "sts"

# toy sizes and a learning rate for runs of a few hundred steps
EXPERIMENT_ENCODER = {"num_layers": 2, "hidden_dim": 32, "num_heads": 4, "ff_dim": 64}
EXPERIMENT_REDUCTION = 4
EXPERIMENT_LR = 1e-3
CORPUS_SIZE = 2000
PRETRAIN_STEPS = 400
DBA_STEPS = 300
TASK_STEPS = 300


@dataclass(frozen=True)
class DebiasExperimentResult:
    """Stereotype scores of the biased base model and after DBA training."""

    seed: int
    ss_before: float
    ss_after: float
    lm_before: float
    lm_after: float


@dataclass(frozen=True)
class StsOutcome:
    """ρ, normalized per-dimension Δ and Ψ_average of one downstream model."""

    rho: float
    delta: dict[str, float]
    psi_average: float


@dataclass(frozen=True)
class FusionExperimentResult:
    """Downstream outcomes of every single-DBA model and of the fusion model."""

    seed: int
    single: dict[str, StsOutcome] = field(default_factory=dict)
    fusion: StsOutcome | None = None


def _config(seed: int, steps: int) -> TrainConfig:
    return TrainConfig(learning_rate=EXPERIMENT_LR, batch_size=32, seed=seed, max_steps=steps)


def _pairs(dimension: BiasDimension) -> list[CounterfactualPair]:
    return [CounterfactualPair(a, b, dimension) for a, b in IDENTITY_PAIRS[dimension]]


def _spec(dimension: BiasDimension, skew: float, seed: int) -> SynthCorpusSpec:
    return SynthCorpusSpec(
        identity_pairs=IDENTITY_PAIRS[dimension],
        pole_a=POLE_A,
        pole_b=POLE_B,
        skew=skew,
        count=CORPUS_SIZE,
        seed=derive_seed(seed, f"corpus:{dimension}"),
        linkers=LINKERS,
    )


def _pretrain(corpus: Corpus, vocab: Vocabulary, seed: int) -> TinyLM:
    enc = EncoderConfig(vocab_size=len(vocab), seed=seed, **EXPERIMENT_ENCODER)
    model = build_model(enc, head=HeadKind.MLM)
    model, _ = train(
        model, WiringMode.full_finetune(), MlmData(corpus), _config(seed, PRETRAIN_STEPS), vocab
    )
    return model


def _train_dba(
    base: TinyLM, corpus: Corpus, dimension: BiasDimension, vocab: Vocabulary, seed: int
) -> TinyLM:
    model = copy.deepcopy(base)
    model.add_adapter(AdapterConfig(str(dimension), reduction_factor=EXPERIMENT_REDUCTION))
    augmented = apply_cda(corpus, _pairs(dimension))
    model, _ = train(
        model,
        WiringMode.dba_pretrain(str(dimension)),
        MlmData(augmented),
        _config(seed, DBA_STEPS),
        vocab,
    )
    return model


def run_debias_experiment(seed: int, skew: float = 0.95) -> DebiasExperimentResult:
    """Train a toy LM on a skewed corpus, then a gender DBA on its CDA version.

    The stereotype score on the matched triple suite should be clearly above
    50 before and close to 50 after.
    """
    spec = _spec(BiasDimension.GENDER, skew, seed)
    corpus = synth_bias_corpus(spec)
    vocab = Vocabulary.from_corpus(corpus)
    triples = synth_triple_suite(spec, str(BiasDimension.GENDER))

    base = _pretrain(corpus, vocab, seed)
    before = stereoset_eval(ModelScorer(base, vocab), triples)
    debiased = _train_dba(base, corpus, BiasDimension.GENDER, vocab, seed)
    after = stereoset_eval(ModelScorer(debiased, vocab), triples)
    logger.info("Seed %d: SS %.2f -> %.2f", seed, before.ss, after.ss)
    return DebiasExperimentResult(seed, before.ss, after.ss, before.lm_score, after.lm_score)


def _similarity(attr_a: str, attr_b: str) -> float:
    if attr_a == attr_b:
        return SAME_ATTRIBUTE_SCORE
    if (attr_a in POLE_A) == (attr_b in POLE_A):
        return SAME_POLE_SCORE
    return 0.0


def _task_data(*, biased: bool) -> RegressionData:
    """Identity sentence vs neutral sentence; biased data favors each pair's first identity."""
    examples = []
    for dimension_pairs in IDENTITY_PAIRS.values():
        for pair in dimension_pairs:
            for position, identity in enumerate(pair):
                for linker, attr_a, attr_b in itertools.product(LINKERS, ATTRIBUTES, ATTRIBUTES):
                    score = _similarity(attr_a, attr_b)
                    if biased and position == 0:
                        score = min(score + INJECTED_BIAS, MAX_SIMILARITY)
                    examples.append(
                        SimilarityExample(
                            f"{identity} {linker} {attr_a}.",
                            f"{NEUTRAL_SUBJECT} {linker} {attr_b}.",
                            score,
                        )
                    )
    return RegressionData(examples)


def _bias_tuples(dimension: BiasDimension) -> list[SimilarityTuple]:
    tuples = []
    for pair in IDENTITY_PAIRS[dimension]:
        for linker, attr_a, attr_b in itertools.product(LINKERS, ATTRIBUTES, ATTRIBUTES):
            neutral = f"{NEUTRAL_SUBJECT} {linker} {attr_b}."
            tuples.append(
                SimilarityTuple(
                    tuple_id=f"{dimension}-{len(tuples):05d}",
                    dimension=str(dimension),
                    identities=pair,
                    pairs=tuple((f"{term} {linker} {attr_a}.", neutral) for term in pair),
                )
            )
    return tuples


def _evaluate_sts(model: TinyLM, vocab: Vocabulary, test: RegressionData) -> StsOutcome:
    rho = pearson(predict(model, test, vocab), test.targets())
    scorer = ModelScorer(model, vocab)
    delta = {
        str(dimension): bias_sts_eval(scorer, _bias_tuples(dimension), MAX_SIMILARITY).delta
        for dimension in IDENTITY_PAIRS
    }
    psi = useful_fairness(rho, float(np.mean(list(delta.values()))))
    return StsOutcome(rho, delta, psi)


def _finetune(
    model: TinyLM,
    mode: WiringMode,
    train_data: RegressionData,
    vocab: Vocabulary,
    seed: int,
) -> TinyLM:
    model.add_adapter(AdapterConfig(TASK_ADAPTER, reduction_factor=EXPERIMENT_REDUCTION))
    model.set_head(HeadKind.REGRESSION)
    model, _ = train(model, mode, train_data, _config(seed, TASK_STEPS), vocab)
    return model


def run_fusion_experiment(
    seed: int,
    dimensions: Sequence[BiasDimension] = (BiasDimension.GENDER, BiasDimension.RELIGION),
    skew: float = 0.95,
) -> FusionExperimentResult:
    """Compare task adapters over single DBAs (mode c) with fused DBAs (mode d).

    All models share one pretrained base and the same DBAs; downstream
    training data carries an injected bias in every dimension.
    """
    corpus = Corpus()
    for dimension in dimensions:
        corpus = corpus + synth_bias_corpus(_spec(dimension, skew, seed))
    train_data, test_data = _task_data(biased=True), _task_data(biased=False)
    vocab = Vocabulary.from_corpus(corpus + Corpus.from_texts([NEUTRAL_SUBJECT]))

    base = _pretrain(corpus, vocab, seed)
    with_dbas = copy.deepcopy(base)
    for dimension in dimensions:
        trained = _train_dba(base, corpus, dimension, vocab, seed)
        with_dbas.add_adapter(trained.adapter_configs[str(dimension)])
        with_dbas.adapters[str(dimension)].load_state_dict(
            trained.adapters[str(dimension)].state_dict()
        )

    names = [str(d) for d in dimensions]
    single = {}
    for name in names:
        model = _finetune(
            copy.deepcopy(with_dbas),
            WiringMode.with_task_adapter(TASK_ADAPTER, [name]),
            train_data,
            vocab,
            seed,
        )
        single[name] = _evaluate_sts(model, vocab, test_data)

    fused = copy.deepcopy(with_dbas)
    fused.add_fusion(names)
    fused = _finetune(fused, WiringMode.fusion(names, TASK_ADAPTER), train_data, vocab, seed)
    outcome = _evaluate_sts(fused, vocab, test_data)
    logger.info(
        "Seed %d: fusion psi %.3f vs single %s",
        seed,
        outcome.psi_average,
        ", ".join(f"{k} {v.psi_average:.3f}" for k, v in single.items()),
    )
    return FusionExperimentResult(seed, single, outcome)
