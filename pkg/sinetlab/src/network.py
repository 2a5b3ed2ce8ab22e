"""Executable SINet built from a :class:`~sinetlab.src.arch.ModelSpec`."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from sinetlab.src.arch import ModelSpec
from sinetlab.src.blocks import BlockParams, ConvBN, SIUnitConfig, conv_bn, si_block
from sinetlab.src.decision import (
    AttentionHeadParams,
    ClassifierParams,
    attention_logits,
    plain_logits,
)
from sinetlab.src.tensor import (
    BatchNormState,
    DimensionError,
    MaddCounter,
    Mode,
    Tensor,
    softmax,
)

logger = logging.getLogger(__name__)

INPUT_CHANNELS = 3


@dataclass
class SINet:
    """Stem, SI Blocks and decision head with their parameters and BN statistics."""

    spec: ModelSpec
    stem: ConvBN
    unit_configs: list[list[SIUnitConfig]]
    blocks: list[BlockParams]
    head: AttentionHeadParams | ClassifierParams

    @classmethod
    def from_spec(cls, spec: ModelSpec, seed: int = 0) -> SINet:
        """Instantiate ``spec`` with parameters drawn from ``seed``."""

        rng = np.random.default_rng(seed)
        stem = ConvBN.init(
            INPUT_CHANNELS, spec.stem.channels, spec.stem.kernel, rng, stride=spec.stem.stride
        )
        unit_configs = spec.unit_configs()
        blocks = [BlockParams.init(configs, rng) for configs in unit_configs]
        head: AttentionHeadParams | ClassifierParams
        if spec.attention:
            head = AttentionHeadParams.init(
                spec.block_channels,
                spec.classes,
                rng,
                gate_widths=spec.head.gate_widths,
                width=spec.head.width,
            )
        else:
            head = ClassifierParams.init(
                spec.blocks[-1].channels, spec.classes, rng, width=spec.head.width
            )
        model = cls(spec=spec, stem=stem, unit_configs=unit_configs, blocks=blocks, head=head)
        logger.info(
            "Built SINet(w=%s, g=%d, exchange=%s, attention=%s) with %d parameters",
            spec.width,
            spec.groups,
            spec.exchange,
            spec.attention,
            model.parameter_count(),
        )
        return model

    def parameters(self) -> list[Tensor]:
        tensors = list(self.stem.tensors())
        for block in self.blocks:
            tensors.extend(block.tensors())
        tensors.extend(self.head.tensors())
        return tensors

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def batchnorm_states(self) -> list[BatchNormState]:
        states = [self.stem.state]
        for block in self.blocks:
            for unit in block.units:
                states.extend(unit.batchnorm_states())
        return states

    def block_outputs(
        self, x: Tensor, mode: Mode = "train", counter: MaddCounter | None = None
    ) -> list[Tensor]:
        expected = (INPUT_CHANNELS, self.spec.input, self.spec.input)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise DimensionError(f"SINet expects N x {expected} input, got {x.shape}")
        out = conv_bn(x, self.stem, mode=mode, counter=counter)
        outputs = []
        for configs, block in zip(self.unit_configs, self.blocks, strict=True):
            out = si_block(out, configs, block.units, mode=mode, counter=counter)
            outputs.append(out)
        return outputs

    def logits(self, x: Tensor, mode: Mode = "train", counter: MaddCounter | None = None) -> Tensor:
        outputs = self.block_outputs(x, mode=mode, counter=counter)
        if isinstance(self.head, AttentionHeadParams):
            return attention_logits(outputs, self.head, counter)
        return plain_logits(outputs[-1], self.head, counter)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities in eval mode."""

        return softmax(self.logits(Tensor(x), mode="eval")).data

    def count_madds(self) -> int:
        """Multiply-adds actually executed for one input image."""

        counter = MaddCounter()
        sample = np.zeros((1, INPUT_CHANNELS, self.spec.input, self.spec.input))
        self.logits(Tensor(sample), mode="eval", counter=counter)
        return counter.madds
