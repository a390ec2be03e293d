"""Shared fixtures: a toy corpus, its vocabulary and a tiny encoder."""

import pytest

from modular_debias.corpus import Corpus, Vocabulary
from modular_debias.tinylm import EncoderConfig

TOY_SENTENCES = (
    "The man met a woman at the market.",
    "She said he was late.",
    "A muslim family lives next to a christian family.",
    "The doctor asked the nurse for help.",
    "His brother is a teacher.",
    "The girl gave the boy a book.",
    "Her mother works at the church.",
    "They walked home together.",
)


@pytest.fixture
def toy_corpus() -> Corpus:
    """A small corpus mentioning gender and religion terms."""
    return Corpus.from_texts(TOY_SENTENCES)


@pytest.fixture
def toy_vocab(toy_corpus: Corpus) -> Vocabulary:
    """Vocabulary covering the toy corpus and its gender counterfactuals."""
    extra = Corpus.from_texts(["he she him her his hers man woman men women boy girl"])
    return Vocabulary.from_corpus(toy_corpus + extra)


@pytest.fixture
def tiny_encoder(toy_vocab: Vocabulary) -> EncoderConfig:
    """Two-layer, 32-wide encoder sized for the toy vocabulary."""
    return EncoderConfig(
        num_layers=2,
        hidden_dim=32,
        num_heads=4,
        ff_dim=64,
        vocab_size=len(toy_vocab),
        max_seq_len=24,
        seed=7,
    )
