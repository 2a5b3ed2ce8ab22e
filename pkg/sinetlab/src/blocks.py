"""SI Unit building blocks: composite function H, exchange shortcut, dense funnel.

An SI Unit splits its input into ``g`` channel groups, runs an inverted-bottleneck branch
(the composite function H) on every group, adds each branch output to the *next* group's
input (the exchange shortcut), concatenates the groups and, when enabled, squeezes the
concatenation of its input and that result back to its output width (the dense funnel).
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from sinetlab.src.tensor import (
    BatchNormState,
    ConvParams,
    DimensionError,
    GroupError,
    MaddCounter,
    Mode,
    Tensor,
    add,
    batchnorm2d,
    concat_channels,
    conv2d,
    relu6,
    split_channels,
)

logger = logging.getLogger(__name__)

Branch = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class BottleneckConfig:
    """Inverted bottleneck transforming ``in_channels`` to ``out_channels``.

    The hidden width is ``expansion * in_channels``; the depthwise conv carries the stride.
    """

    in_channels: int
    out_channels: int
    kernel_size: int = 3
    stride: int = 1
    expansion: int = 1

    def __post_init__(self) -> None:
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(f"Channel counts must be positive: {self}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"Kernel size must be odd, got {self.kernel_size}")
        if self.stride not in (1, 2):
            raise ValueError(f"Stride must be 1 or 2, got {self.stride}")
        if self.expansion < 1:
            raise ValueError(f"Expansion factor must be a positive integer, got {self.expansion}")

    @property
    def hidden(self) -> int:
        return self.expansion * self.in_channels


@dataclass(frozen=True)
class SIUnitConfig:
    """Declarative description of one SI Unit."""

    in_channels: int
    out_channels: int
    kernel_size: int = 3
    stride: int = 1
    expansion: int = 1
    groups: int = 2
    exchange: bool = True
    funnel: bool = True

    def __post_init__(self) -> None:
        if self.groups < 1:
            raise GroupError(f"Group count must be positive, got {self.groups}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise GroupError(
                f"Unit channels {self.in_channels}->{self.out_channels} "
                f"not divisible by {self.groups} groups"
            )
        if self.exchange and self.groups < 2:
            raise ValueError("The exchange shortcut needs at least two groups")
        if self.exchange and not self.preserves_shape:
            raise ValueError(
                "The exchange shortcut is only defined for stride-1, width-preserving units"
            )
        if self.funnel and not self.preserves_shape:
            raise ValueError("The dense funnel is only applied among stride-1 units")
        # validates kernel/stride/expansion
        _ = self.branch

    @property
    def preserves_shape(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels

    @property
    def branch(self) -> BottleneckConfig:
        return BottleneckConfig(
            in_channels=self.in_channels // self.groups,
            out_channels=self.out_channels // self.groups,
            kernel_size=self.kernel_size,
            stride=self.stride,
            expansion=self.expansion,
        )

    @property
    def funnel_out_channels(self) -> int:
        return self.out_channels


def si_block_configs(
    in_channels: int,
    out_channels: int,
    *,
    kernel_size: int,
    expansion: int,
    repeats: int,
    stride: int = 2,
    groups: int = 2,
    exchange: bool = True,
) -> list[SIUnitConfig]:
    """Lay out the units of one SI Block.

    The first (transition) unit changes width and/or resolution; it carries no shortcut
    and no funnel, and runs ungrouped when its input width is not divisible by ``groups``.
    The remaining units keep their shape and use the exchange shortcut; a unit applies the
    dense funnel only when its input came from another stride-1 unit.
    """

    if repeats < 1:
        raise ValueError(f"A block needs at least one unit, got {repeats}")
    transition_groups = groups
    if in_channels % groups or out_channels % groups:
        logger.info(
            "Transition unit %d->%d runs ungrouped (not divisible by %d groups)",
            in_channels,
            out_channels,
            groups,
        )
        transition_groups = 1

    units = [
        SIUnitConfig(
            in_channels=in_channels,
            out_channels=out_channels,
            kernel_size=kernel_size,
            stride=stride,
            expansion=expansion,
            groups=transition_groups,
            exchange=False,
            funnel=False,
        )
    ]
    for index in range(1, repeats):
        units.append(
            SIUnitConfig(
                in_channels=out_channels,
                out_channels=out_channels,
                kernel_size=kernel_size,
                stride=1,
                expansion=expansion,
                groups=groups,
                exchange=exchange and groups > 1,
                funnel=index >= 2,
            )
        )
    return units


# Parameters


@dataclass
class ConvBN:
    """A convolution followed by batch normalisation."""

    conv: ConvParams
    gamma: Tensor
    beta: Tensor
    state: BatchNormState

    @classmethod
    def init(
        cls,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        *,
        stride: int = 1,
        groups: int = 1,
    ) -> ConvBN:
        conv = ConvParams.init(
            in_channels, out_channels, kernel_size, rng, stride=stride, groups=groups
        )
        return cls(
            conv=conv,
            gamma=Tensor(np.ones(out_channels)),
            beta=Tensor(np.zeros(out_channels)),
            state=BatchNormState.fresh(out_channels),
        )

    def tensors(self) -> list[Tensor]:
        return [*self.conv.tensors(), self.gamma, self.beta]


def conv_bn(
    x: Tensor,
    layer: ConvBN,
    *,
    activation: bool = True,
    mode: Mode = "train",
    counter: MaddCounter | None = None,
) -> Tensor:
    out = conv2d(x, layer.conv, counter)
    out = batchnorm2d(out, layer.gamma, layer.beta, layer.state, mode)
    return relu6(out) if activation else out


@dataclass
class BottleneckParams:
    expand: ConvBN
    depthwise: ConvBN
    project: ConvBN

    @classmethod
    def init(cls, cfg: BottleneckConfig, rng: np.random.Generator) -> BottleneckParams:
        return cls(
            expand=ConvBN.init(cfg.in_channels, cfg.hidden, 1, rng),
            depthwise=ConvBN.init(
                cfg.hidden,
                cfg.hidden,
                cfg.kernel_size,
                rng,
                stride=cfg.stride,
                groups=cfg.hidden,
            ),
            project=ConvBN.init(cfg.hidden, cfg.out_channels, 1, rng),
        )

    def tensors(self) -> list[Tensor]:
        return [*self.expand.tensors(), *self.depthwise.tensors(), *self.project.tensors()]


@dataclass
class SIUnitParams:
    branches: list[BottleneckParams]
    funnel: ConvBN | None = None

    @classmethod
    def init(cls, cfg: SIUnitConfig, rng: np.random.Generator) -> SIUnitParams:
        branches = [BottleneckParams.init(cfg.branch, rng) for _ in range(cfg.groups)]
        funnel = None
        if cfg.funnel:
            merged = cfg.in_channels + cfg.out_channels
            funnel = ConvBN.init(merged, cfg.funnel_out_channels, 1, rng)
        return cls(branches=branches, funnel=funnel)

    def tensors(self) -> list[Tensor]:
        tensors = [t for branch in self.branches for t in branch.tensors()]
        if self.funnel is not None:
            tensors.extend(self.funnel.tensors())
        return tensors

    def batchnorm_states(self) -> list[BatchNormState]:
        layers = [layer for b in self.branches for layer in (b.expand, b.depthwise, b.project)]
        if self.funnel is not None:
            layers.append(self.funnel)
        return [layer.state for layer in layers]


# Operations


def composite_h(
    x: Tensor,
    cfg: BottleneckConfig,
    params: BottleneckParams,
    mode: Mode = "train",
    counter: MaddCounter | None = None,
) -> Tensor:
    """Composite function H: 1x1 expand, k x k depthwise, linear 1x1 project.

    The first two convolutions are followed by BN and ReLU6, the projection by BN only.
    """

    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise DimensionError(f"composite_h expects {cfg.in_channels} channels, got {x.shape}")
    hidden = conv_bn(x, params.expand, mode=mode, counter=counter)
    hidden = conv_bn(hidden, params.depthwise, mode=mode, counter=counter)
    return conv_bn(hidden, params.project, activation=False, mode=mode, counter=counter)


def exchange_shortcut(x: Tensor, branches: Sequence[Branch], exchange: bool = True) -> Tensor:
    """Crosswise residual over ``g = len(branches)`` channel groups.

    With ``exchange`` on, group ``i`` of the output is ``H_i(X_i) + X_{(i+1) mod g}``; for
    ``g = 2`` this swaps the shortcuts of the two halves. With it off every group keeps its
    own shortcut, ``H_i(X_i) + X_i``.
    """

    groups = len(branches)
    if groups < 1:
        raise GroupError("exchange_shortcut needs at least one branch")
    parts = split_channels(x, groups)
    outputs = []
    for index, (branch, part) in enumerate(zip(branches, parts, strict=True)):
        shortcut = parts[(index + 1) % groups] if exchange else part
        result = branch(part)
        if result.shape != shortcut.shape:
            raise DimensionError(
                f"Branch {index} output {result.shape} cannot take shortcut {shortcut.shape}; "
                "the exchange shortcut needs shape-preserving branches"
            )
        outputs.append(add(result, shortcut))
    return concat_channels(outputs)


def dense_funnel(
    prev_features: Tensor,
    current: Tensor,
    squeeze: ConvBN,
    mode: Mode = "train",
    counter: MaddCounter | None = None,
) -> Tensor:
    """Concatenate the preceding summary with the current output, squeeze with a 1x1 conv."""

    if prev_features.ndim != 4 or current.ndim != 4:
        raise DimensionError("dense_funnel expects NCHW tensors")
    prev_shape, cur_shape = prev_features.shape, current.shape
    if (prev_shape[0], *prev_shape[2:]) != (cur_shape[0], *cur_shape[2:]):
        raise DimensionError(f"Funnel inputs differ in N/H/W: {prev_shape} vs {cur_shape}")
    merged = concat_channels([prev_features, current])
    return conv_bn(merged, squeeze, mode=mode, counter=counter)


def si_unit(
    x: Tensor,
    cfg: SIUnitConfig,
    params: SIUnitParams,
    mode: Mode = "train",
    counter: MaddCounter | None = None,
) -> Tensor:
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise DimensionError(f"SI Unit expects {cfg.in_channels} channels, got {x.shape}")
    if len(params.branches) != cfg.groups:
        raise GroupError(f"Unit has {cfg.groups} groups but {len(params.branches)} branches")
    branches = [
        partial(composite_h, cfg=cfg.branch, params=branch, mode=mode, counter=counter)
        for branch in params.branches
    ]
    if cfg.preserves_shape:
        out = exchange_shortcut(x, branches, exchange=cfg.exchange)
    else:
        parts = split_channels(x, cfg.groups)
        out = concat_channels([branch(part) for branch, part in zip(branches, parts, strict=True)])
    if cfg.funnel:
        if params.funnel is None:
            raise ValueError("Unit is configured with a funnel but has no funnel parameters")
        out = dense_funnel(x, out, params.funnel, mode=mode, counter=counter)
    return out


def si_block(
    x: Tensor,
    units: Sequence[SIUnitConfig],
    params: Sequence[SIUnitParams],
    mode: Mode = "train",
    counter: MaddCounter | None = None,
) -> Tensor:
    """Run a stack of SI Units; the first one carries the block's stride."""

    if not units:
        raise ValueError("An SI Block needs at least one unit")
    if len(units) != len(params):
        raise ValueError(f"{len(units)} unit configs but {len(params)} parameter sets")
    out = x
    for cfg, unit_params in zip(units, params, strict=True):
        out = si_unit(out, cfg, unit_params, mode=mode, counter=counter)
    logger.debug("SI Block output shape %s", out.shape)
    return out


@dataclass
class BlockParams:
    units: list[SIUnitParams] = field(default_factory=list)

    @classmethod
    def init(cls, configs: Sequence[SIUnitConfig], rng: np.random.Generator) -> BlockParams:
        return cls(units=[SIUnitParams.init(cfg, rng) for cfg in configs])

    def tensors(self) -> list[Tensor]:
        return [t for unit in self.units for t in unit.tensors()]
