"""Tests for tokenization, corpora and vocabularies."""

from pathlib import Path

import pytest

from modular_debias.corpus import (
    CLS_ID,
    SEP_ID,
    SPECIAL_TOKENS,
    UNK_ID,
    BiasDimension,
    Corpus,
    Origin,
    Sentence,
    Vocabulary,
    detokenize,
    normalize,
    parse_corpus_lines,
    read_corpus,
    tokenize,
)
from modular_debias.exceptions import ConfigError, DatasetError, InputFileError


class TestTokenizer:
    """Test cases for tokenize and detokenize."""

    def test_keeps_hyphenated_and_apostrophe_words(self) -> None:
        """Test that compound words stay single tokens."""
        assert tokenize("African-American people don't wait.") == [
            "African-American",
            "people",
            "don't",
            "wait",
            ".",
        ]

    def test_detokenize_round_trips_normalized_text(self) -> None:
        """Test that detokenize inverts tokenize on normalized text."""
        text = "Well, the man (a doctor) left; she stayed!"
        assert detokenize(tokenize(text)) == text

    def test_normalize_fixes_spacing(self) -> None:
        """Test that odd spacing collapses to the canonical form."""
        assert normalize("the  man ,  she   left .") == "the man, she left."


class TestCorpus:
    """Test cases for Sentence and Corpus."""

    def test_sentence_tokens_round_trip(self) -> None:
        """Test that a sentence's tokens detokenize to its text."""
        sentence = Sentence.from_text("The  woman met a man .")
        assert sentence.text == "The woman met a man."
        assert detokenize(sentence.tokens) == sentence.text

    def test_from_texts_skips_blank_lines(self) -> None:
        """Test that blank strings are dropped."""
        corpus = Corpus.from_texts(["one.", "  ", "", "two."])
        assert corpus.texts == ["one.", "two."]

    def test_lines_round_trip_with_origin_tags(self) -> None:
        """Test that tagged corpora survive to_lines and parse_corpus_lines."""
        corpus = Corpus.from_texts(["He left."], Origin.ORIGINAL) + Corpus.from_texts(
            ["She left."], Origin.COUNTERFACTUAL
        )
        restored = parse_corpus_lines(corpus.to_lines())
        assert restored == corpus
        assert [s.origin for s in restored] == [Origin.ORIGINAL, Origin.COUNTERFACTUAL]

    def test_canonical_bytes_are_stable(self, toy_corpus: Corpus) -> None:
        """Test that equal corpora serialize identically."""
        copy = Corpus.from_texts(toy_corpus.texts)
        assert copy.canonical_bytes() == toy_corpus.canonical_bytes()

    def test_read_corpus(self, tmp_path: Path) -> None:
        """Test reading a one-sentence-per-line file."""
        path = tmp_path / "corpus.txt"
        path.write_text("first line.\n\nsecond line.\n", encoding="utf-8")
        assert read_corpus(path).texts == ["first line.", "second line."]

    def test_read_corpus_missing_file(self, tmp_path: Path) -> None:
        """Test that a missing corpus names its path."""
        missing = tmp_path / "absent.txt"
        with pytest.raises(InputFileError, match="absent.txt"):
            read_corpus(missing)


class TestBiasDimension:
    """Test cases for BiasDimension parsing."""

    def test_parse_is_case_insensitive(self) -> None:
        """Test parsing with odd casing and whitespace."""
        assert BiasDimension.parse(" Religion ") == BiasDimension.RELIGION

    def test_parse_unknown(self) -> None:
        """Test that unknown dimensions are configuration errors."""
        with pytest.raises(ConfigError, match="age"):
            BiasDimension.parse("age")


class TestVocabulary:
    """Test cases for Vocabulary."""

    def test_special_tokens_come_first(self, toy_vocab: Vocabulary) -> None:
        """Test that the special tokens occupy the first ids."""
        assert tuple(toy_vocab.tokens[: len(SPECIAL_TOKENS)]) == SPECIAL_TOKENS
        assert toy_vocab.first_regular_id == len(SPECIAL_TOKENS)

    def test_build_orders_by_frequency_then_alphabet(self) -> None:
        """Test that ties are broken alphabetically, independent of order."""
        vocab = Vocabulary.build([["b", "a", "c", "c"], ["B"]])
        assert vocab.tokens[len(SPECIAL_TOKENS) :] == ["b", "c", "a"]

    def test_build_truncates(self) -> None:
        """Test that max_size caps the vocabulary."""
        max_size = len(SPECIAL_TOKENS) + 2
        vocab = Vocabulary.build([["x", "y", "z", "x", "y", "x"]], max_size=max_size)
        assert len(vocab) == max_size
        assert "z" not in vocab

    def test_unknown_tokens_map_to_unk(self, toy_vocab: Vocabulary) -> None:
        """Test that out-of-vocabulary tokens encode as UNK."""
        assert toy_vocab.encode(["zyzzyva"]) == [UNK_ID]
        assert toy_vocab.token_id("MAN") == toy_vocab.token_id("man")

    def test_encode_sentence_truncates(self, toy_vocab: Vocabulary) -> None:
        """Test that long sentences keep CLS and SEP within max_len."""
        max_len = 5
        ids = toy_vocab.encode_sentence(["the", "man", "met", "a", "woman"], max_len)
        assert len(ids) == max_len
        assert ids[0] == CLS_ID
        assert ids[-1] == SEP_ID

    def test_encode_pair_truncates_longer_side(self, toy_vocab: Vocabulary) -> None:
        """Test that pair truncation shortens the longer sentence first."""
        first = ["the", "man", "met", "a", "woman", "at", "the", "market"]
        second = ["she", "left"]
        ids = toy_vocab.encode_pair(first, second, 9)
        assert ids.count(SEP_ID) == 2
        assert ids[-3:] == [*toy_vocab.encode(second), SEP_ID]

    def test_dict_round_trip(self, toy_vocab: Vocabulary) -> None:
        """Test serialization for checkpoints."""
        assert Vocabulary.from_dict(toy_vocab.to_dict()) == toy_vocab

    def test_rejects_missing_specials(self) -> None:
        """Test that a vocabulary must start with the special tokens."""
        with pytest.raises(DatasetError):
            Vocabulary(["a", "b"])
