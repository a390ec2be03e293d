"""Tests for the tiny encoder, adapters, fusion and heads."""

import pytest
import torch
from torch import Tensor
from torch.func import functional_call

from modular_debias.exceptions import InputShapeError, ModelConfigError
from modular_debias.tinylm import (
    Adapter,
    AdapterConfig,
    EncoderConfig,
    Fusion,
    HeadKind,
    MlmHead,
    PooledHead,
    TinyLM,
    WiringKind,
    WiringMode,
    adapter_forward,
    build_model,
    fusion_forward,
    trainable_mask,
)

BATCH = 2
SEQ = 5
HIDDEN = 32
GRAD_TOLERANCE = 1e-4


def _hidden(seed: int = 0, hidden: int = HIDDEN) -> Tensor:
    generator = torch.Generator().manual_seed(seed)
    return torch.randn(BATCH, SEQ, hidden, generator=generator, dtype=torch.float64)


def _ids(config: EncoderConfig, seed: int = 0) -> Tensor:
    generator = torch.Generator().manual_seed(seed)
    return torch.randint(5, config.vocab_size, (BATCH, SEQ), generator=generator)


def _gradcheck(fn, *inputs: Tensor) -> bool:  # noqa: ANN001
    return torch.autograd.gradcheck(fn, inputs, eps=1e-6, atol=GRAD_TOLERANCE, rtol=GRAD_TOLERANCE)


class TestConfigs:
    """Test cases for EncoderConfig and AdapterConfig validation."""

    def test_heads_must_divide_hidden(self) -> None:
        """Test that hidden_dim must split evenly across heads."""
        with pytest.raises(ModelConfigError, match="divisible"):
            EncoderConfig(hidden_dim=30, num_heads=4)

    def test_non_positive_dimension(self) -> None:
        """Test that dimensions must be positive."""
        with pytest.raises(ModelConfigError, match="num_layers"):
            EncoderConfig(num_layers=0)

    def test_adapter_name_pattern(self) -> None:
        """Test that adapter names are path-safe."""
        with pytest.raises(ModelConfigError):
            AdapterConfig("has space")

    def test_empty_bottleneck(self) -> None:
        """Test that an over-large reduction factor is rejected."""
        with pytest.raises(ModelConfigError, match="empty bottleneck"):
            AdapterConfig("gender", reduction_factor=64).bottleneck_dim(HIDDEN)

    def test_only_silu(self) -> None:
        """Test that other activations are rejected."""
        with pytest.raises(ModelConfigError, match="silu"):
            AdapterConfig("gender", activation="relu")


class TestGradients:
    """Finite-difference gradient checks in float64 at d=32."""

    @pytest.fixture
    def model(self, tiny_encoder: EncoderConfig) -> TinyLM:
        """Fused two-adapter model with a task adapter, in float64."""
        model = build_model(
            tiny_encoder,
            [AdapterConfig("gender", 4), AdapterConfig("race", 4)],
            fusion=True,
            head=HeadKind.REGRESSION,
            task_adapter=AdapterConfig("task", 4),
        )
        return model.double()

    def test_encoder_block(self, model: TinyLM) -> None:
        """Test the attention and feed-forward block."""
        block = model.encoder.layers[0]
        mask = torch.ones(BATCH, SEQ, SEQ, dtype=torch.bool)
        h = _hidden().requires_grad_()
        assert _gradcheck(lambda x: block(x, mask), h)

    def test_adapter(self) -> None:
        """Test the adapter with non-trivial up-projection weights."""
        adapter = Adapter(HIDDEN, 8).double()
        torch.nn.init.normal_(adapter.up.weight, std=0.1)
        h = _hidden().requires_grad_()
        assert _gradcheck(lambda x: adapter_forward(x, adapter), h)

    def test_fusion(self) -> None:
        """Test fusion with respect to the activation and every adapter output."""
        fusion = Fusion(HIDDEN).double()
        fusion.reset_parameters(torch.Generator().manual_seed(3))
        torch.nn.init.normal_(fusion.query.weight, std=0.3)
        torch.nn.init.normal_(fusion.key.weight, std=0.3)
        h = _hidden(0).requires_grad_()
        a = _hidden(1).requires_grad_()
        b = _hidden(2).requires_grad_()
        assert _gradcheck(lambda x, y, z: fusion_forward(x, [y, z], fusion), h, a, b)

    @pytest.mark.parametrize("kind", list(HeadKind))
    def test_heads(self, kind: HeadKind, tiny_encoder: EncoderConfig) -> None:
        """Test each head on hidden activations."""
        head = MlmHead(tiny_encoder) if kind == HeadKind.MLM else PooledHead(tiny_encoder)
        head = head.double()
        h = _hidden().requires_grad_()
        if kind == HeadKind.CLASSIFIER:
            assert _gradcheck(lambda x: torch.sigmoid(head(x)), h)
        else:
            assert _gradcheck(head, h)

    @pytest.mark.parametrize(
        "name",
        ["adapters.gender.0.down.weight", "adapters.task.1.up.bias", "fusion.1.value.bias"],
    )
    def test_end_to_end_parameter(self, model: TinyLM, name: str) -> None:
        """Test gradients of the full fused model with respect to one parameter."""
        ids = _ids(model.config)
        weight = dict(model.named_parameters())[name].detach().clone().requires_grad_()
        assert _gradcheck(lambda w: functional_call(model, {name: w}, (ids,)), weight)


class TestAdapter:
    """Test cases for adapter behavior."""

    def test_fresh_adapter_is_near_identity(self) -> None:
        """Test that a freshly initialized adapter barely moves activations."""
        adapter = Adapter(HIDDEN, 8).double()
        adapter.reset_parameters(torch.Generator().manual_seed(0))
        h = _hidden()
        assert torch.allclose(adapter(h), h, atol=1e-3)

    def test_rejects_wrong_width(self) -> None:
        """Test that mismatched hidden sizes are shape errors."""
        with pytest.raises(InputShapeError):
            Adapter(HIDDEN, 8)(torch.zeros(1, 2, HIDDEN + 1))


class TestFusion:
    """Test cases for the fusion layer."""

    @pytest.fixture
    def fusion(self) -> Fusion:
        """Fusion layer with sizeable query and key weights."""
        fusion = Fusion(HIDDEN).double()
        fusion.reset_parameters(torch.Generator().manual_seed(1))
        torch.nn.init.normal_(fusion.query.weight, std=0.5)
        torch.nn.init.normal_(fusion.key.weight, std=0.5)
        return fusion

    def test_weights_sum_to_one(self, fusion: Fusion) -> None:
        """Test that per-token fusion weights form a distribution."""
        _, weights = fusion(_hidden(0), [_hidden(1), _hidden(2), _hidden(3)])
        assert weights.shape == (BATCH, SEQ, 3)
        assert torch.all(weights >= 0)
        assert torch.allclose(weights.sum(-1), torch.ones(BATCH, SEQ, dtype=torch.float64))

    def test_single_adapter_is_value_projection(self, fusion: Fusion) -> None:
        """Test that fusing one adapter reduces to its value projection."""
        only = _hidden(1)
        fused, weights = fusion(_hidden(0), [only])
        assert torch.allclose(weights, torch.ones_like(weights))
        assert torch.allclose(fused, fusion.value(only))

    def test_requires_outputs(self, fusion: Fusion) -> None:
        """Test that fusing nothing is an error."""
        with pytest.raises(ModelConfigError):
            fusion(_hidden(0), [])

    def test_shape_mismatch(self, fusion: Fusion) -> None:
        """Test that adapter outputs must match the activation shape."""
        with pytest.raises(InputShapeError):
            fusion(_hidden(0), [torch.zeros(BATCH, SEQ + 1, HIDDEN, dtype=torch.float64)])


class TestTinyLM:
    """Test cases for model construction, wiring and forward passes."""

    def test_build_is_deterministic(self, tiny_encoder: EncoderConfig) -> None:
        """Test that the same seed gives identical weights."""
        first = build_model(tiny_encoder, [AdapterConfig("gender")], fusion=True)
        second = build_model(tiny_encoder, [AdapterConfig("gender")], fusion=True)
        for (name, a), (_, b) in zip(
            first.state_dict().items(), second.state_dict().items(), strict=True
        ):
            assert torch.equal(a, b), name

    def test_adapter_init_is_independent_of_order(self, tiny_encoder: EncoderConfig) -> None:
        """Test that each adapter's weights depend on its name only."""
        forward = build_model(tiny_encoder, [AdapterConfig("gender"), AdapterConfig("race")])
        backward = build_model(tiny_encoder, [AdapterConfig("race"), AdapterConfig("gender")])
        key = "adapters.race.0.down.weight"
        assert torch.equal(forward.state_dict()[key], backward.state_dict()[key])

    def test_output_shapes(self, tiny_encoder: EncoderConfig) -> None:
        """Test head output shapes."""
        ids = _ids(tiny_encoder)
        assert build_model(tiny_encoder)(ids).shape == (BATCH, SEQ, tiny_encoder.vocab_size)
        assert build_model(tiny_encoder, head=HeadKind.REGRESSION)(ids).shape == (BATCH,)

    def test_fully_masked_row_ignores_other_positions(self, tiny_encoder: EncoderConfig) -> None:
        """Test that a position attending to nothing only sees its own token."""
        model = build_model(tiny_encoder).eval()
        first = _ids(tiny_encoder, seed=1)
        second = _ids(tiny_encoder, seed=2)
        second[:, 0] = first[:, 0]
        mask = torch.ones(BATCH, SEQ, SEQ, dtype=torch.bool)
        mask[:, 0, :] = False
        with torch.no_grad():
            out_first, out_second = model(first, mask), model(second, mask)
        assert torch.allclose(out_first[:, 0], out_second[:, 0], atol=1e-6)
        assert not torch.allclose(out_first[:, 1], out_second[:, 1], atol=1e-6)

    def test_batch_size_invariance(self, tiny_encoder: EncoderConfig) -> None:
        """Test that a row scores the same alone and inside a batch of four."""
        model = build_model(tiny_encoder, [AdapterConfig("gender")]).double().eval()
        generator = torch.Generator().manual_seed(3)
        ids = torch.randint(5, tiny_encoder.vocab_size, (4, SEQ), generator=generator)
        with torch.no_grad():
            batched = model(ids)
            for row in range(4):
                single = model(ids[row : row + 1])
                assert torch.allclose(single[0], batched[row], atol=1e-6), row

    def test_fresh_adapter_keeps_model_output(self, tiny_encoder: EncoderConfig) -> None:
        """Test that adding an untrained adapter leaves the logits within 1e-3."""
        without = build_model(tiny_encoder).eval()
        with_adapter = build_model(tiny_encoder, [AdapterConfig("gender")]).eval()
        ids = _ids(tiny_encoder, seed=4)
        with torch.no_grad():
            difference = (with_adapter(ids) - without(ids)).abs().max()
        assert difference <= 1e-3

    def test_classifier_returns_probabilities(self, tiny_encoder: EncoderConfig) -> None:
        """Test that the classifier applies the sigmoid unless logits are requested."""
        model = build_model(tiny_encoder, head=HeadKind.CLASSIFIER).eval()
        ids = _ids(tiny_encoder)
        logits = model(ids, return_logits=True)
        assert torch.allclose(model(ids), torch.sigmoid(logits))

    def test_rejects_long_sequences(self, tiny_encoder: EncoderConfig) -> None:
        """Test that inputs beyond max_seq_len are shape errors."""
        ids = torch.full((1, tiny_encoder.max_seq_len + 1), 5)
        with pytest.raises(InputShapeError, match="max_seq_len"):
            build_model(tiny_encoder)(ids)

    def test_rejects_out_of_vocabulary_ids(self, tiny_encoder: EncoderConfig) -> None:
        """Test that token ids must be in range."""
        with pytest.raises(InputShapeError):
            build_model(tiny_encoder)(torch.tensor([[tiny_encoder.vocab_size]]))

    def test_headless_model(self, tiny_encoder: EncoderConfig) -> None:
        """Test that running without a head is a configuration error."""
        with pytest.raises(ModelConfigError, match="head"):
            build_model(tiny_encoder, head=None)(_ids(tiny_encoder))

    def test_skip_task_adapter_only_in_training(self, tiny_encoder: EncoderConfig) -> None:
        """Test that skip flags apply in training mode and are ignored in eval mode."""
        model = build_model(
            tiny_encoder, head=HeadKind.REGRESSION, task_adapter=AdapterConfig("task", 4)
        )
        for layer in model.adapters["task"]:
            torch.nn.init.normal_(layer.up.weight, std=0.5)
        ids = _ids(tiny_encoder)
        skip = [True] * tiny_encoder.num_layers
        model.eval()
        assert torch.equal(model(ids, skip_task_adapter=skip), model(ids))
        model.train()
        assert not torch.allclose(model(ids, skip_task_adapter=skip), model(ids))

    def test_description_round_trip(self, tiny_encoder: EncoderConfig) -> None:
        """Test that describe and from_description rebuild the architecture."""
        model = build_model(
            tiny_encoder,
            [AdapterConfig("gender"), AdapterConfig("religion")],
            fusion=True,
            head=HeadKind.CLASSIFIER,
            task_adapter=AdapterConfig("task"),
        )
        rebuilt = TinyLM.from_description(model.describe())
        assert rebuilt.describe() == model.describe()
        assert set(rebuilt.state_dict()) == set(model.state_dict())

    def test_parameter_groups(self, tiny_encoder: EncoderConfig) -> None:
        """Test grouping by component."""
        model = build_model(tiny_encoder, [AdapterConfig("gender")], fusion=True)
        assert set(model.parameter_groups()) == {"encoder", "adapters.gender", "fusion", "head"}


class TestWiring:
    """Test cases for wiring validation and trainable parameter sets."""

    @pytest.fixture
    def model(self, tiny_encoder: EncoderConfig) -> TinyLM:
        """MLM model with two debiasing adapters and a task adapter."""
        return build_model(
            tiny_encoder,
            [AdapterConfig("gender"), AdapterConfig("race")],
            task_adapter=AdapterConfig("task"),
        )

    def test_dba_trains_one_adapter_and_head(self, model: TinyLM) -> None:
        """Test the trainable set of DBA pretraining."""
        names = trainable_mask(model, WiringMode.dba_pretrain("gender"))
        assert names
        assert all(n.startswith(("adapters.gender.", "head.")) for n in names)
        assert any(n.startswith("head.") for n in names)

    def test_full_finetune_trains_everything(self, model: TinyLM) -> None:
        """Test that full fine-tuning trains all parameters."""
        names = trainable_mask(model, WiringMode.full_finetune(["gender"]))
        assert names == {n for n, _ in model.named_parameters()}

    def test_trainable_mask_restores_wiring(self, model: TinyLM) -> None:
        """Test that validating a mode leaves the active wiring alone."""
        before = model.wiring
        trainable_mask(model, WiringMode.dba_pretrain("race"))
        assert model.wiring == before

    def test_dba_needs_mlm_head(self, model: TinyLM) -> None:
        """Test that DBA pretraining requires the MLM head."""
        model.set_head(HeadKind.REGRESSION)
        with pytest.raises(ModelConfigError, match="MLM"):
            model.set_wiring(WiringMode.dba_pretrain("gender"))

    def test_task_adapter_mode_needs_task_head(self, model: TinyLM) -> None:
        """Test that task-adapter mode rejects the MLM head."""
        with pytest.raises(ModelConfigError, match="regression or classifier"):
            model.set_wiring(WiringMode.with_task_adapter("task", ["gender"]))
        model.set_head(HeadKind.CLASSIFIER)
        model.set_wiring(WiringMode.with_task_adapter("task", ["gender"]))
        assert model.wiring.kind == WiringKind.TASK_ADAPTER

    def test_fusion_mode_needs_fusion_layer(self, model: TinyLM) -> None:
        """Test that fusion wiring requires a matching fusion layer."""
        with pytest.raises(ModelConfigError, match="fusion"):
            model.set_wiring(WiringMode.fusion(["gender", "race"], "task"))
        model.add_fusion(["gender", "race"])
        model.set_wiring(WiringMode.fusion(["gender", "race"], "task"))
        names = model.trainable_names()
        assert any(n.startswith("fusion.") for n in names)
        assert not any(n.startswith(("adapters.gender.", "encoder.")) for n in names)

    def test_unknown_adapter(self, model: TinyLM) -> None:
        """Test that wiring an unknown adapter fails."""
        with pytest.raises(ModelConfigError, match="Unknown adapters"):
            model.set_wiring(WiringMode.dba_pretrain("profession"))

    def test_task_adapter_cannot_double_as_debiasing(self, model: TinyLM) -> None:
        """Test that the task adapter and a debiasing adapter must differ."""
        with pytest.raises(ModelConfigError, match="both"):
            model.set_wiring(WiringMode.full_finetune(["task"], "task"))

    def test_duplicate_adapter(self, model: TinyLM) -> None:
        """Test that adapter names are unique."""
        with pytest.raises(ModelConfigError, match="already exists"):
            model.add_adapter(AdapterConfig("gender"))
