"""Tests for masking, schedules, manifests and the training loop."""

from pathlib import Path

import numpy as np
import pytest
import torch

from modular_debias.artifacts import fingerprint
from modular_debias.corpus import CLS_ID, MASK_ID, PAD_ID, SEP_ID, Corpus, Vocabulary
from modular_debias.datasets import (
    ClassificationData,
    LabeledText,
    MlmData,
    RegressionData,
    SimilarityExample,
)
from modular_debias.exceptions import (
    ConfigError,
    FingerprintMismatchError,
    ModelConfigError,
    ModularDebiasError,
    TrainingError,
)
from modular_debias.tinylm import (
    AdapterConfig,
    EncoderConfig,
    HeadKind,
    TinyLM,
    WiringMode,
    build_model,
)
from modular_debias.training import (
    IGNORE_INDEX,
    RunManifest,
    TrainConfig,
    adapter_drop_hook,
    derive_seed,
    load_run_manifest,
    lr_at,
    mask_tokens,
    mlm_batches,
    predict,
    train,
    warmup_steps,
    with_overrides,
)

FREEZE_STEPS = 100
MASK_SAMPLE = 100_000
FIRST_REGULAR = 5
SAMPLE_VOCAB = 500
OVERFIT_STEPS = 200
OVERFIT_WINDOW = 20
OVERFIT_LOSS = 0.5


def _snapshot(model: TinyLM) -> dict[str, torch.Tensor]:
    return {name: p.detach().clone() for name, p in model.named_parameters()}


def _changed_groups(model: TinyLM, before: dict[str, torch.Tensor]) -> set[str]:
    after = dict(model.named_parameters())
    return {
        group
        for group, names in model.parameter_groups().items()
        if any(not torch.equal(after[n].detach(), before[n]) for n in names)
    }


@pytest.fixture
def fast_config() -> TrainConfig:
    """Short, high learning-rate configuration for the toy model."""
    return TrainConfig(learning_rate=1e-3, batch_size=4, max_steps=FREEZE_STEPS, seed=3)


@pytest.fixture
def similarity(toy_corpus: Corpus) -> RegressionData:
    """Sentence pairs from the toy corpus with spread-out scores."""
    texts = toy_corpus.texts
    return RegressionData(
        [
            SimilarityExample(texts[i], texts[(i + 1) % len(texts)], float(i % 6))
            for i in range(len(texts))
        ]
    )


class TestTrainConfig:
    """Test cases for TrainConfig validation."""

    @pytest.mark.parametrize(
        "overrides",
        [
            {"mlm_probability": 0.0},
            {"learning_rate": 0.0},
            {"batch_size": 0},
            {"adapter_drop_prob": 1.0},
            {"max_steps": 0},
            {"warmup_ratio": 1.0},
        ],
    )
    def test_rejects_out_of_range(self, overrides: dict[str, float]) -> None:
        """Test that invalid settings are configuration errors."""
        with pytest.raises(ConfigError):
            TrainConfig(**overrides)

    def test_with_overrides_skips_none(self) -> None:
        """Test that None overrides keep the existing value."""
        cfg = with_overrides(TrainConfig(), learning_rate=1e-3, epochs=None)
        assert cfg.learning_rate == 1e-3
        assert cfg.epochs == TrainConfig().epochs


class TestSchedule:
    """Test cases for warmup and cosine decay."""

    TOTAL = 100
    BASE = 1e-3

    def test_warmup_steps(self) -> None:
        """Test the rounded-up warmup length."""
        assert warmup_steps(self.TOTAL, 0.1) == 10
        assert warmup_steps(7, 0.1) == 1

    def test_linear_warmup(self) -> None:
        """Test that the rate ramps linearly to its base value."""
        assert lr_at(0, self.TOTAL, self.BASE) == pytest.approx(self.BASE / 10)
        assert lr_at(4, self.TOTAL, self.BASE) == pytest.approx(self.BASE / 2)
        assert lr_at(9, self.TOTAL, self.BASE) == pytest.approx(self.BASE)

    def test_cosine_decay(self) -> None:
        """Test the cosine decay after warmup."""
        assert lr_at(10, self.TOTAL, self.BASE) == pytest.approx(self.BASE)
        assert lr_at(55, self.TOTAL, self.BASE) == pytest.approx(self.BASE / 2)
        assert lr_at(self.TOTAL, self.TOTAL, self.BASE) == pytest.approx(0.0)

    def test_monotone_after_warmup(self) -> None:
        """Test that the decay never increases the rate."""
        rates = [lr_at(s, self.TOTAL, self.BASE) for s in range(10, self.TOTAL)]
        assert all(a >= b for a, b in zip(rates, rates[1:], strict=False))


class TestMaskTokens:
    """Test cases for the 80/10/10 masking scheme."""

    @pytest.fixture
    def sample(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Mask a large sample of regular token ids."""
        rng = np.random.default_rng(0)
        ids = rng.integers(FIRST_REGULAR, SAMPLE_VOCAB, MASK_SAMPLE)
        inputs, labels = mask_tokens(ids, SAMPLE_VOCAB, FIRST_REGULAR, 0.15, rng)
        return ids, inputs, labels

    def test_selection_rate(self, sample: tuple[np.ndarray, np.ndarray, np.ndarray]) -> None:
        """Test that about 15% of tokens become targets."""
        _, _, labels = sample
        assert abs((labels != IGNORE_INDEX).mean() - 0.15) < 0.01

    def test_replacement_split(self, sample: tuple[np.ndarray, np.ndarray, np.ndarray]) -> None:
        """Test the mask / random / keep proportions among targets."""
        ids, inputs, labels = sample
        selected = labels != IGNORE_INDEX
        masked = (inputs[selected] == MASK_ID).mean()
        replaced = ((inputs[selected] != MASK_ID) & (inputs[selected] != ids[selected])).mean()
        kept = (inputs[selected] == ids[selected]).mean()
        assert abs(masked - 0.8) < 0.02
        assert abs(replaced - 0.1) < 0.02
        assert abs(kept - 0.1) < 0.02

    def test_labels_hold_original_ids(
        self, sample: tuple[np.ndarray, np.ndarray, np.ndarray]
    ) -> None:
        """Test that targets are labeled with the uncorrupted id."""
        ids, _, labels = sample
        selected = labels != IGNORE_INDEX
        assert np.array_equal(labels[selected], ids[selected])

    def test_special_tokens_never_selected(self) -> None:
        """Test that special ids are neither targets nor corrupted."""
        ids = np.array([[CLS_ID, PAD_ID, SEP_ID] * 1000])
        rng = np.random.default_rng(1)
        inputs, labels = mask_tokens(ids, SAMPLE_VOCAB, FIRST_REGULAR, 0.5, rng)
        assert np.array_equal(inputs, ids)
        assert np.all(labels == IGNORE_INDEX)

    def test_random_replacements_are_regular(
        self, sample: tuple[np.ndarray, np.ndarray, np.ndarray]
    ) -> None:
        """Test that random replacements never draw special ids."""
        _, inputs, _ = sample
        assert inputs[inputs != MASK_ID].min() >= FIRST_REGULAR


class TestMlmBatches:
    """Test cases for MLM batching."""

    def test_padding_stays_pad(self, toy_corpus: Corpus, toy_vocab: Vocabulary) -> None:
        """Test that padded positions are neither corrupted nor targets."""
        cfg = TrainConfig(batch_size=3, mlm_probability=0.5)
        for inputs, labels in mlm_batches(toy_corpus, toy_vocab, cfg):
            padding = inputs == PAD_ID
            assert torch.all(labels[padding] == IGNORE_INDEX)

    def test_batches_are_reproducible(self, toy_corpus: Corpus, toy_vocab: Vocabulary) -> None:
        """Test that the same seed and epoch give the same batches."""
        cfg = TrainConfig(batch_size=3, seed=9)
        first = list(mlm_batches(toy_corpus, toy_vocab, cfg, epoch=1))
        second = list(mlm_batches(toy_corpus, toy_vocab, cfg, epoch=1))
        for (a_in, a_lab), (b_in, b_lab) in zip(first, second, strict=True):
            assert torch.equal(a_in, b_in)
            assert torch.equal(a_lab, b_lab)

    def test_covers_the_corpus(self, toy_corpus: Corpus, toy_vocab: Vocabulary) -> None:
        """Test that one epoch yields every sentence once."""
        cfg = TrainConfig(batch_size=3)
        rows = sum(inputs.shape[0] for inputs, _ in mlm_batches(toy_corpus, toy_vocab, cfg))
        assert rows == len(toy_corpus)


class TestSeeds:
    """Test cases for seed derivation and the AdapterDrop schedule."""

    def test_derive_seed(self) -> None:
        """Test that streams are stable and independent."""
        assert derive_seed(1, "torch") == derive_seed(1, "torch")
        assert derive_seed(1, "torch") != derive_seed(1, "mlm:0")
        assert derive_seed(1, "torch") != derive_seed(2, "torch")

    def test_adapter_drop_disabled(self) -> None:
        """Test that a zero drop probability never skips."""
        assert not adapter_drop_hook(TrainConfig(), 50, 2).any()

    def test_adapter_drop_rate(self) -> None:
        """Test the skip rate of the AdapterDrop schedule."""
        flags = adapter_drop_hook(TrainConfig(adapter_drop_prob=0.6), 2000, 12)
        assert flags.shape == (2000, 12)
        assert abs(flags.mean() - 0.6) < 0.02


class TestFreezeContracts:
    """Each wiring mode changes exactly its trainable components."""

    def test_dba_pretraining(
        self,
        tiny_encoder: EncoderConfig,
        toy_corpus: Corpus,
        toy_vocab: Vocabulary,
        fast_config: TrainConfig,
    ) -> None:
        """Test that DBA pretraining only moves its adapter and the MLM head."""
        model = build_model(tiny_encoder, [AdapterConfig("gender")])
        before = _snapshot(model)
        mode = WiringMode.dba_pretrain("gender")
        train(model, mode, MlmData(toy_corpus), fast_config, toy_vocab)
        assert _changed_groups(model, before) == {"adapters.gender", "head"}

    def test_full_finetuning(
        self,
        tiny_encoder: EncoderConfig,
        toy_corpus: Corpus,
        toy_vocab: Vocabulary,
        fast_config: TrainConfig,
    ) -> None:
        """Test that full fine-tuning moves every component."""
        model = build_model(tiny_encoder, [AdapterConfig("gender")])
        before = _snapshot(model)
        mode = WiringMode.full_finetune(["gender"])
        train(model, mode, MlmData(toy_corpus), fast_config, toy_vocab)
        assert _changed_groups(model, before) == {"encoder", "adapters.gender", "head"}

    def test_task_adapter(
        self,
        tiny_encoder: EncoderConfig,
        similarity: RegressionData,
        toy_vocab: Vocabulary,
        fast_config: TrainConfig,
    ) -> None:
        """Test that stacked debiasing adapters stay frozen under a task adapter."""
        model = build_model(
            tiny_encoder,
            [AdapterConfig("gender")],
            head=HeadKind.REGRESSION,
            task_adapter=AdapterConfig("task"),
        )
        before = _snapshot(model)
        mode = WiringMode.with_task_adapter("task", ["gender"])
        cfg = with_overrides(fast_config, adapter_drop_prob=0.6)
        train(model, mode, similarity, cfg, toy_vocab)
        assert _changed_groups(model, before) == {"adapters.task", "head"}

    def test_fusion(
        self,
        tiny_encoder: EncoderConfig,
        similarity: RegressionData,
        toy_vocab: Vocabulary,
        fast_config: TrainConfig,
    ) -> None:
        """Test that fusion training leaves the encoder and fused adapters untouched."""
        model = build_model(
            tiny_encoder,
            [AdapterConfig("gender"), AdapterConfig("race")],
            fusion=True,
            head=HeadKind.REGRESSION,
            task_adapter=AdapterConfig("task"),
        )
        before = _snapshot(model)
        mode = WiringMode.fusion(["gender", "race"], "task")
        train(model, mode, similarity, fast_config, toy_vocab)
        assert _changed_groups(model, before) == {"fusion", "adapters.task", "head"}


class TestTrain:
    """Test cases for the training loop and its manifest."""

    @pytest.fixture
    def short_config(self) -> TrainConfig:
        """A few optimizer steps."""
        return TrainConfig(learning_rate=1e-3, batch_size=4, epochs=2, seed=5)

    def test_is_deterministic(
        self,
        tiny_encoder: EncoderConfig,
        toy_corpus: Corpus,
        toy_vocab: Vocabulary,
        short_config: TrainConfig,
    ) -> None:
        """Test that equal seeds give bit-identical weights."""
        states = []
        for _ in range(2):
            model = build_model(tiny_encoder, [AdapterConfig("gender")])
            mode = WiringMode.dba_pretrain("gender")
            train(model, mode, MlmData(toy_corpus), short_config, toy_vocab)
            states.append(model.state_dict())
        for name, value in states[0].items():
            assert torch.equal(value, states[1][name]), name

    def test_manifest_contents(
        self,
        tiny_encoder: EncoderConfig,
        toy_corpus: Corpus,
        toy_vocab: Vocabulary,
        short_config: TrainConfig,
    ) -> None:
        """Test the recorded configuration, wiring, losses and fingerprint."""
        model = build_model(tiny_encoder, [AdapterConfig("gender")])
        data = MlmData(toy_corpus)
        _, manifest = train(model, WiringMode.dba_pretrain("gender"), data, short_config, toy_vocab)
        assert manifest.seed == short_config.seed
        assert manifest.config["learning_rate"] == short_config.learning_rate
        assert manifest.wiring == WiringMode.dba_pretrain("gender").to_dict()
        assert len(manifest.epoch_losses) == short_config.epochs
        assert manifest.final_losses["last_step"] is not None
        assert set(manifest.fingerprints) == {"train"}
        assert not model.training

    def test_head_must_match_data(
        self, tiny_encoder: EncoderConfig, toy_corpus: Corpus, toy_vocab: Vocabulary
    ) -> None:
        """Test that MLM data cannot train a regression head."""
        model = build_model(tiny_encoder, head=HeadKind.REGRESSION)
        with pytest.raises(ModelConfigError):
            train(model, WiringMode.full_finetune(), MlmData(toy_corpus), TrainConfig(), toy_vocab)

    def test_non_finite_loss(
        self, tiny_encoder: EncoderConfig, toy_corpus: Corpus, toy_vocab: Vocabulary
    ) -> None:
        """Test that a NaN loss stops training with the step and rate."""
        model = build_model(tiny_encoder, [AdapterConfig("gender")])
        with torch.no_grad():
            model.head.decoder.bias.fill_(float("nan"))
        with pytest.raises(TrainingError) as excinfo:
            train(
                model,
                WiringMode.dba_pretrain("gender"),
                MlmData(toy_corpus),
                TrainConfig(batch_size=4),
                toy_vocab,
            )
        assert excinfo.value.step == 0

    def test_predict_classifier(
        self, tiny_encoder: EncoderConfig, toy_corpus: Corpus, toy_vocab: Vocabulary
    ) -> None:
        """Test that classifier predictions are probabilities in input order."""
        model = build_model(tiny_encoder, head=HeadKind.CLASSIFIER)
        data = ClassificationData([LabeledText(t, i % 2) for i, t in enumerate(toy_corpus.texts)])
        scores = predict(model, data, toy_vocab, batch_size=3)
        assert scores.shape == (len(toy_corpus),)
        assert np.all((scores > 0) & (scores < 1))

    def test_predict_rejects_mlm(
        self, tiny_encoder: EncoderConfig, toy_corpus: Corpus, toy_vocab: Vocabulary
    ) -> None:
        """Test that predict needs task data."""
        with pytest.raises(ModelConfigError):
            predict(build_model(tiny_encoder), MlmData(toy_corpus), toy_vocab)


class TestRunManifest:
    """Test cases for writing and verifying run manifests."""

    @pytest.fixture
    def manifest(self, toy_corpus: Corpus) -> RunManifest:
        """A manifest fingerprinting the toy corpus."""
        return RunManifest(
            config=TrainConfig().to_dict(),
            wiring=WiringMode.dba_pretrain("gender").to_dict(),
            fingerprints={"train": fingerprint(MlmData(toy_corpus).canonical_bytes())},
            seed=0,
            wall_clock_seconds=1.5,
            final_losses={"epoch_mean": 2.0, "last_step": 1.9},
        )

    def test_written_once(self, manifest: RunManifest, tmp_path: Path) -> None:
        """Test that a manifest object refuses a second write."""
        path = tmp_path / "manifest.json"
        manifest.write(path)
        with pytest.raises(ModularDebiasError, match="already written"):
            manifest.write(tmp_path / "again.json")

    def test_round_trip_and_fingerprint_check(
        self, manifest: RunManifest, toy_corpus: Corpus, tmp_path: Path
    ) -> None:
        """Test that reading back verifies unchanged datasets."""
        path = tmp_path / "manifest.json"
        manifest.write(path)
        loaded = load_run_manifest(path, {"train": MlmData(toy_corpus)})
        assert loaded == manifest

    def test_detects_changed_dataset(
        self, manifest: RunManifest, toy_corpus: Corpus, tmp_path: Path
    ) -> None:
        """Test that a modified dataset fails verification."""
        path = tmp_path / "manifest.json"
        manifest.write(path)
        changed = MlmData(toy_corpus + Corpus.from_texts(["An extra sentence."]))
        with pytest.raises(FingerprintMismatchError, match="train"):
            load_run_manifest(path, {"train": changed})


@pytest.mark.slow
class TestOverfit:
    """The loop must be able to memorize a tiny corpus."""

    def test_dba_memorizes_toy_corpus(
        self, tiny_encoder: EncoderConfig, toy_corpus: Corpus, toy_vocab: Vocabulary
    ) -> None:
        """Test that 200 DBA steps on eight sentences bring the MLM loss below 0.5."""
        assert len(toy_corpus) == 8
        model = build_model(tiny_encoder, [AdapterConfig("gender", reduction_factor=1)])
        cfg = TrainConfig(
            learning_rate=1e-2, batch_size=len(toy_corpus), max_steps=OVERFIT_STEPS, seed=0
        )
        mode = WiringMode.dba_pretrain("gender")
        _, manifest = train(model, mode, MlmData(toy_corpus), cfg, toy_vocab)
        assert len(manifest.epoch_losses) == OVERFIT_STEPS
        assert np.mean(manifest.epoch_losses[-OVERFIT_WINDOW:]) < OVERFIT_LOSS
