"""Unit tests for the attention-based joint decision head."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sinetlab.src.decision import (
    AttentionHeadParams,
    ClassifierParams,
    GateParams,
    attention_logits,
    attention_weight,
    classify,
    compress,
    default_gate_width,
    joint_decision,
    joint_logits,
    plain_decision,
    plain_logits,
)
from sinetlab.src.tensor import (
    DimensionError,
    MaddCounter,
    Tape,
    Tensor,
    concat_channels,
    global_avg_pool,
    softmax_cross_entropy,
)

BLOCK_CHANNELS = [4, 6, 8]


def _block_outputs(rng, batch=2, sizes=(8, 4, 2)):
    return [
        Tensor(rng.standard_normal((batch, c, s, s)))
        for c, s in zip(BLOCK_CHANNELS, sizes, strict=True)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def head(rng):
    return AttentionHeadParams.init(BLOCK_CHANNELS, 5, rng, width=16)


class TestGateWidths:
    """Tests for the default gate sizing."""

    def test_quarter_of_channels_with_floor(self):
        """Test d = max(8, c // 4)."""
        assert default_gate_width(192) == 48
        assert default_gate_width(24) == 8

    def test_head_init_uses_defaults(self, head):
        """Test one gate per block with the default hidden width."""
        assert [g.w1.shape for g in head.gates] == [(4, 8), (6, 8), (8, 8)]
        assert head.classifier.hidden.weight.shape == (18, 16)
        assert head.classifier.classes == 5

    def test_gate_width_count_mismatch(self, rng):
        """Test a gate width per block is required."""
        with pytest.raises(ValueError, match="gate width"):
            AttentionHeadParams.init(BLOCK_CHANNELS, 5, rng, gate_widths=[8, 8])


class TestCompress:
    """Tests for global-average-pool compression."""

    def test_shapes(self, rng):
        """Test every block output becomes N x C_k."""
        zs = compress(_block_outputs(rng))
        assert [z.shape for z in zs] == [(2, 4), (2, 6), (2, 8)]

    def test_batch_mismatch(self):
        """Test block outputs must share the batch size."""
        with pytest.raises(DimensionError):
            compress([Tensor(np.ones((2, 3, 2, 2))), Tensor(np.ones((3, 3, 2, 2)))])


class TestAttentionWeight:
    """Tests for the gate score."""

    def test_zero_first_layer_gives_half(self, rng):
        """Test W1 = 0 drives every score to sigmoid(0) = 0.5."""
        gate = GateParams(w1=Tensor(np.zeros((6, 8))), w2=Tensor(rng.standard_normal((8, 1))))
        alpha = attention_weight(Tensor(rng.standard_normal((3, 6))), gate)
        assert_allclose(alpha.data, np.full((3, 1), 0.5))

    def test_two_linear_maps_then_sigmoid(self):
        """Test alpha = sigmoid((z W1) W2) with no activation between the two maps."""
        gate = GateParams(w1=Tensor(-np.eye(2)), w2=Tensor([[1.0], [1.0]]))
        alpha = attention_weight(Tensor([[1.0, 2.0]]), gate)
        assert_allclose(alpha.data, [[1.0 / (1.0 + np.exp(3.0))]])

    def test_matches_numpy_gate(self, rng):
        """Test random gates against a direct numpy evaluation, negative hidden values included."""
        gate = GateParams.init(6, 8, rng)
        z = rng.standard_normal((5, 6))
        hidden = z @ gate.w1.data
        assert np.any(hidden < 0)
        expected = 1.0 / (1.0 + np.exp(-(hidden @ gate.w2.data)))
        assert_allclose(attention_weight(Tensor(z), gate).data, expected, rtol=1e-12)

    def test_scores_in_open_unit_interval(self, rng):
        """Test scores are N x 1 and strictly between 0 and 1."""
        gate = GateParams.init(6, 8, rng)
        alpha = attention_weight(Tensor(rng.standard_normal((4, 6))), gate).data
        assert alpha.shape == (4, 1)
        assert np.all((alpha > 0) & (alpha < 1))

    def test_width_mismatch(self, rng):
        """Test a summary of the wrong width is rejected."""
        with pytest.raises(DimensionError):
            attention_weight(Tensor(np.ones((1, 5))), GateParams.init(6, 8, rng))


class TestJointDecision:
    """Tests for the joint classifier over all blocks."""

    def test_no_weights_equals_concat_then_classify(self, rng, head):
        """Test alphas=None is the classifier on the plain concatenation."""
        zs = compress(_block_outputs(rng))
        out = joint_logits(zs, None, head.classifier)
        expected = classify(concat_channels(zs), head.classifier)
        assert_allclose(out.data, expected.data)

    def test_unit_weights_equal_no_weights(self, rng, head):
        """Test alpha = 1 leaves every summary unchanged."""
        zs = compress(_block_outputs(rng))
        ones = [Tensor(np.ones((2, 1)))] * len(zs)
        assert_allclose(
            joint_logits(zs, ones, head.classifier).data,
            joint_logits(zs, None, head.classifier).data,
        )

    def test_probabilities_sum_to_one(self, rng, head):
        """Test every row of the joint decision is a distribution."""
        zs = compress(_block_outputs(rng))
        alphas = [attention_weight(z, g) for z, g in zip(zs, head.gates, strict=True)]
        probs = joint_decision(zs, alphas, head).data
        assert probs.shape == (2, 5)
        assert_allclose(probs.sum(axis=1), np.ones(2))
        assert np.all(probs >= 0)

    def test_weight_count_mismatch(self, rng, head):
        """Test one weight per block summary is required."""
        zs = compress(_block_outputs(rng))
        with pytest.raises(DimensionError):
            joint_logits(zs, [Tensor(np.ones((2, 1)))], head.classifier)

    def test_gradient_reaches_every_block(self, rng, head):
        """Test the loss depends on every block output, not just the last."""
        tape = Tape()
        outputs = [tape.leaf(np.abs(o.data) + 0.1) for o in _block_outputs(rng)]
        tape.watch(*head.tensors())
        loss = softmax_cross_entropy(attention_logits(outputs, head), np.array([0, 3]))
        tape.backward(loss)
        for out in outputs:
            assert np.any(out.grad != 0)

    def test_block_count_mismatch(self, rng, head):
        """Test the head needs one output per gate."""
        with pytest.raises(DimensionError):
            attention_logits(_block_outputs(rng)[:2], head)

    def test_counts_head_madds(self, rng, head):
        """Test gates, scaling and both FC layers all add to the counter."""
        counter = MaddCounter()
        attention_logits(_block_outputs(rng, batch=1), head, counter)
        gates = sum(c * 8 + 8 for c in BLOCK_CHANNELS)
        assert counter.madds == gates + sum(BLOCK_CHANNELS) + 18 * 16 + 16 * 5


class TestPlainDecision:
    """Tests for the last-block-only head."""

    def test_uses_only_the_last_block(self, rng):
        """Test the plain head is the classifier on the pooled last block output."""
        last = _block_outputs(rng)[-1]
        classifier = ClassifierParams.init(8, 5, rng, width=16)
        expected = classify(global_avg_pool(last), classifier)
        assert_allclose(plain_logits(last, classifier).data, expected.data)

    def test_probabilities_sum_to_one(self, rng):
        """Test the plain decision is a distribution."""
        classifier = ClassifierParams.init(8, 5, rng, width=16)
        probs = plain_decision(_block_outputs(rng)[-1], classifier).data
        assert_allclose(probs.sum(axis=1), np.ones(2))
