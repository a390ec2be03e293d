"""Tests for task datasets and batch collation."""

from pathlib import Path

import pytest
import torch

from modular_debias.corpus import CLS_ID, PAD_ID, SEP_ID, Corpus, Vocabulary, tokenize
from modular_debias.datasets import (
    HEAD_FOR_TASK,
    ClassificationData,
    LabeledText,
    MlmData,
    RegressionData,
    SimilarityExample,
    TaskType,
    pad_batch,
    read_classification_dataset,
)
from modular_debias.exceptions import DatasetError, InputFileError
from modular_debias.tinylm import HeadKind


class TestExamples:
    """Test cases for example validation."""

    @pytest.mark.parametrize("score", [-0.1, 5.01])
    def test_similarity_range(self, score: float) -> None:
        """Test that similarity targets stay within [0, 5]."""
        with pytest.raises(DatasetError):
            SimilarityExample("a", "b", score)

    def test_similarity_bounds_inclusive(self) -> None:
        """Test both ends of the range."""
        assert SimilarityExample("a", "b", 0.0).score == 0.0
        assert SimilarityExample("a", "b", 5.0).score == 5.0

    def test_binary_labels(self) -> None:
        """Test that only 0 and 1 are labels."""
        with pytest.raises(DatasetError, match="0 or 1"):
            LabeledText("text", 2)

    def test_heads_per_task(self) -> None:
        """Test the head each task trains."""
        assert HEAD_FOR_TASK[TaskType.MLM] == HeadKind.MLM
        assert HEAD_FOR_TASK[TaskType.REGRESSION] == HeadKind.REGRESSION
        assert HEAD_FOR_TASK[TaskType.CLASSIFICATION] == HeadKind.CLASSIFIER


class TestEncoding:
    """Test cases for encoding datasets with a vocabulary."""

    def test_mlm_sentences(self, toy_corpus: Corpus, toy_vocab: Vocabulary) -> None:
        """Test that every sentence is framed by the special tokens."""
        data = MlmData(toy_corpus)
        encoded = data.encode(toy_vocab, max_len=24)
        assert len(encoded) == len(data) == len(toy_corpus)
        assert all(ids[0] == CLS_ID and ids[-1] == SEP_ID for ids in encoded)

    def test_regression_pairs(self, toy_vocab: Vocabulary) -> None:
        """Test the pair layout and targets."""
        data = RegressionData([SimilarityExample("the man", "the woman", 4.0)])
        (ids,) = data.encode(toy_vocab, max_len=24)
        first = toy_vocab.encode(tokenize("the man"))
        second = toy_vocab.encode(tokenize("the woman"))
        assert ids == [CLS_ID, *first, SEP_ID, *second, SEP_ID]
        assert data.targets() == [4.0]

    def test_pair_truncation(self, toy_vocab: Vocabulary) -> None:
        """Test that long pairs are cut to max_len."""
        data = RegressionData([SimilarityExample("the man " * 10, "a woman", 1.0)])
        (ids,) = data.encode(toy_vocab, max_len=8)
        assert len(ids) == 8

    def test_classification_targets(self) -> None:
        """Test labels as float targets."""
        data = ClassificationData([LabeledText("fine", 0), LabeledText("rude", 1)])
        assert data.targets() == [0.0, 1.0]

    def test_canonical_bytes_follow_content(self) -> None:
        """Test that fingerprinted bytes change with the data."""
        first = RegressionData([SimilarityExample("a", "b", 1.0)])
        second = RegressionData([SimilarityExample("a", "b", 1.5)])
        assert first.canonical_bytes() != second.canonical_bytes()
        assert first.canonical_bytes() == RegressionData(list(first.examples)).canonical_bytes()


class TestPadBatch:
    """Test cases for batch collation."""

    def test_right_padding(self) -> None:
        """Test the id matrix and key mask."""
        ids, mask = pad_batch([[2, 7, 3], [2, 3]])
        assert ids.tolist() == [[2, 7, 3], [2, 3, PAD_ID]]
        assert mask.tolist() == [[True, True, True], [True, True, False]]
        assert ids.dtype == torch.long

    def test_empty(self) -> None:
        """Test an empty batch."""
        ids, mask = pad_batch([])
        assert ids.shape == (0, 0)
        assert mask.shape == (0, 0)


class TestReadClassificationDataset:
    """Test cases for reading text<TAB>label files."""

    def test_read(self, tmp_path: Path) -> None:
        """Test reading rows and skipping blank lines."""
        path = tmp_path / "toxic.tsv"
        path.write_text("you are kind\t0\n\nyou are awful\t1\n", encoding="utf-8")
        data = read_classification_dataset(path)
        assert [e.label for e in data.examples] == [0, 1]
        assert data.examples[1].text == "you are awful"

    def test_missing(self, tmp_path: Path) -> None:
        """Test that a missing file names its path."""
        with pytest.raises(InputFileError):
            read_classification_dataset(tmp_path / "absent.tsv")

    @pytest.mark.parametrize(
        ("content", "message"),
        [("ok\t0\nno label\n", "line 2"), ("ok\tmaybe\n", "line 1"), ("ok\t3\n", "0 or 1")],
    )
    def test_bad_rows(self, tmp_path: Path, content: str, message: str) -> None:
        """Test that malformed rows name their line."""
        path = tmp_path / "bad.tsv"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(DatasetError, match=message):
            read_classification_dataset(path)
