"""Attention-based joint decision head.

Every SI Block output is compressed by global average pooling, scored by a small gate
``alpha = sigmoid((z @ W1) @ W2)``, rescaled by its score and concatenated. A shared
classifier (FC to the head width with ReLU6, then FC to the classes) turns the concatenation
into logits. The plain head only sees the last block.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from sinetlab.src.tensor import (
    DimensionError,
    MaddCounter,
    Tensor,
    concat_channels,
    fully_connected,
    global_avg_pool,
    he_uniform,
    relu6,
    scale_channels,
    sigmoid,
    softmax,
)

logger = logging.getLogger(__name__)

HEAD_WIDTH = 1280
MIN_GATE_WIDTH = 8


def default_gate_width(channels: int) -> int:
    """Hidden width of an attention gate for a block with ``channels`` outputs."""

    return max(MIN_GATE_WIDTH, channels // 4)


@dataclass
class LinearParams:
    weight: Tensor
    bias: Tensor | None = None

    @classmethod
    def init(
        cls, d_in: int, d_out: int, rng: np.random.Generator, *, bias: bool = True
    ) -> LinearParams:
        weight = Tensor(he_uniform((d_in, d_out), d_in, rng))
        return cls(weight=weight, bias=Tensor(np.zeros(d_out)) if bias else None)

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def __call__(self, x: Tensor, counter: MaddCounter | None = None) -> Tensor:
        return fully_connected(x, self.weight, self.bias, counter)


@dataclass
class GateParams:
    """Bias-free two-layer gate: ``W1`` is ``c x d``, ``W2`` is ``d x 1``."""

    w1: Tensor
    w2: Tensor

    @classmethod
    def init(cls, channels: int, hidden: int, rng: np.random.Generator) -> GateParams:
        return cls(
            w1=Tensor(he_uniform((channels, hidden), channels, rng)),
            w2=Tensor(he_uniform((hidden, 1), hidden, rng)),
        )

    @property
    def channels(self) -> int:
        return self.w1.shape[0]

    def tensors(self) -> list[Tensor]:
        return [self.w1, self.w2]


@dataclass
class ClassifierParams:
    hidden: LinearParams
    output: LinearParams

    @classmethod
    def init(
        cls, d_in: int, classes: int, rng: np.random.Generator, *, width: int = HEAD_WIDTH
    ) -> ClassifierParams:
        return cls(
            hidden=LinearParams.init(d_in, width, rng),
            output=LinearParams.init(width, classes, rng),
        )

    @property
    def classes(self) -> int:
        return self.output.d_out

    def tensors(self) -> list[Tensor]:
        return [*self.hidden.tensors(), *self.output.tensors()]


@dataclass
class AttentionHeadParams:
    gates: list[GateParams]
    classifier: ClassifierParams

    @classmethod
    def init(
        cls,
        block_channels: Sequence[int],
        classes: int,
        rng: np.random.Generator,
        *,
        gate_widths: Sequence[int] | None = None,
        width: int = HEAD_WIDTH,
    ) -> AttentionHeadParams:
        if gate_widths is None:
            gate_widths = [default_gate_width(c) for c in block_channels]
        if len(gate_widths) != len(block_channels):
            raise ValueError("Need one gate width per block")
        pairs = zip(block_channels, gate_widths, strict=True)
        gates = [GateParams.init(c, d, rng) for c, d in pairs]
        classifier = ClassifierParams.init(sum(block_channels), classes, rng, width=width)
        return cls(gates=gates, classifier=classifier)

    def tensors(self) -> list[Tensor]:
        return [*(t for gate in self.gates for t in gate.tensors()), *self.classifier.tensors()]


def compress(block_outputs: Sequence[Tensor]) -> list[Tensor]:
    """Global-average-pool each ``N x C_k x H_k x W_k`` block output to ``N x C_k``."""

    if not block_outputs:
        raise ValueError("compress needs at least one block output")
    batch = block_outputs[0].shape[0]
    for out in block_outputs:
        if out.ndim != 4 or out.shape[0] != batch:
            raise DimensionError(f"Block outputs must share batch size {batch}, got {out.shape}")
    return [global_avg_pool(out) for out in block_outputs]


def attention_weight(z: Tensor, gate: GateParams, counter: MaddCounter | None = None) -> Tensor:
    """Score a compressed block summary; returns ``N x 1`` values in (0, 1)."""

    if z.ndim != 2 or z.shape[1] != gate.channels:
        raise DimensionError(f"Gate expects N x {gate.channels} input, got {z.shape}")
    hidden = fully_connected(z, gate.w1, None, counter)
    return sigmoid(fully_connected(hidden, gate.w2, None, counter))


def classify(
    features: Tensor, classifier: ClassifierParams, counter: MaddCounter | None = None
) -> Tensor:
    return classifier.output(relu6(classifier.hidden(features, counter)), counter)


def joint_logits(
    zs: Sequence[Tensor],
    alphas: Sequence[Tensor] | None,
    classifier: ClassifierParams,
    counter: MaddCounter | None = None,
) -> Tensor:
    """Logits of the joint decision; ``alphas=None`` bypasses the gates (alpha = 1)."""

    if alphas is None:
        scaled = list(zs)
    else:
        if len(alphas) != len(zs):
            raise DimensionError(f"{len(zs)} block summaries but {len(alphas)} weights")
        scaled = [scale_channels(z, a, counter) for z, a in zip(zs, alphas, strict=True)]
    return classify(concat_channels(scaled), classifier, counter)


def joint_decision(
    zs: Sequence[Tensor],
    alphas: Sequence[Tensor] | None,
    head: AttentionHeadParams,
    counter: MaddCounter | None = None,
) -> Tensor:
    return softmax(joint_logits(zs, alphas, head.classifier, counter))


def attention_logits(
    block_outputs: Sequence[Tensor],
    head: AttentionHeadParams,
    counter: MaddCounter | None = None,
) -> Tensor:
    """Full attention path: compress, gate and jointly classify every block output."""

    if len(block_outputs) != len(head.gates):
        raise DimensionError(f"{len(block_outputs)} blocks but {len(head.gates)} gates")
    zs = compress(block_outputs)
    alphas = [attention_weight(z, gate, counter) for z, gate in zip(zs, head.gates, strict=True)]
    return joint_logits(zs, alphas, head.classifier, counter)


def plain_logits(
    last_block_output: Tensor, classifier: ClassifierParams, counter: MaddCounter | None = None
) -> Tensor:
    (z,) = compress([last_block_output])
    return classify(z, classifier, counter)


def plain_decision(
    last_block_output: Tensor, classifier: ClassifierParams, counter: MaddCounter | None = None
) -> Tensor:
    """Softmax over the classifier applied to the pooled last block only."""

    return softmax(plain_logits(last_block_output, classifier, counter))
