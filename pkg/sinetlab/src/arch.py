"""SINet architecture table, width-multiplier resolution and ablation variants.

A :class:`ModelSpec` is the single, serialisable description of a network. The analyzer
walks it statically and :mod:`sinetlab.src.network` instantiates it; both obtain the
per-unit layout from :meth:`ModelSpec.unit_configs`.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

from sinetlab.src.blocks import SIUnitConfig, si_block_configs
from sinetlab.src.decision import HEAD_WIDTH, default_gate_width
from sinetlab.src.tensor import conv_output_size

logger = logging.getLogger(__name__)

STEM_FILTERS = 21
DOWNSAMPLING_FACTOR = 32


class SpecError(ValueError):
    """Raised for an invalid or inconsistent architecture description."""


@dataclass(frozen=True)
class BlockRow:
    """One row of the architecture table: ``n`` units of width ``channels``."""

    channels: int
    k: int
    s: int
    n: int
    t: int

    def __post_init__(self) -> None:
        if self.channels < 1 or self.n < 1 or self.t < 1:
            raise SpecError(f"Block row needs positive channels, repeats and expansion: {self}")
        if self.k < 1 or self.k % 2 == 0:
            raise SpecError(f"Block kernel size must be odd, got {self.k}")
        if self.s not in (1, 2):
            raise SpecError(f"Block stride must be 1 or 2, got {self.s}")


# Base channels at w = 1.0; every block's first unit downsamples.
SINET_TABLE: tuple[BlockRow, ...] = (
    BlockRow(channels=24, k=3, s=2, n=4, t=3),
    BlockRow(channels=40, k=5, s=2, n=4, t=3),
    BlockRow(channels=80, k=5, s=2, n=4, t=6),
    BlockRow(channels=96, k=3, s=2, n=4, t=6),
    BlockRow(channels=192, k=5, s=2, n=4, t=6),
)


@dataclass(frozen=True)
class StemSpec:
    channels: int = STEM_FILTERS
    kernel: int = 3
    stride: int = 2


@dataclass(frozen=True)
class HeadSpec:
    """Decision head: hidden FC width and, with attention, one gate width per block."""

    width: int = HEAD_WIDTH
    gate_widths: tuple[int, ...] = ()


@dataclass(frozen=True)
class LayerShape:
    name: str
    kind: str
    channels: int
    height: int
    width: int


@dataclass(frozen=True)
class ModelSpec:
    """Fully resolved network description."""

    width: float
    classes: int
    input: int
    groups: int = 2
    exchange: bool = True
    attention: bool = True
    blocks: tuple[BlockRow, ...] = SINET_TABLE
    stem: StemSpec = field(default_factory=StemSpec)
    head: HeadSpec = field(default_factory=HeadSpec)

    def __post_init__(self) -> None:
        if self.classes < 1:
            raise SpecError(f"Class count must be positive, got {self.classes}")
        if self.input < DOWNSAMPLING_FACTOR or self.input % DOWNSAMPLING_FACTOR:
            raise SpecError(f"Input size must be a positive multiple of 32, got {self.input}")
        if not self.blocks:
            raise SpecError("A model needs at least one block")
        if self.groups < 1:
            raise SpecError(f"Group count must be positive, got {self.groups}")
        if self.exchange and self.groups < 2:
            raise SpecError("Exchange shortcut requires groups >= 2")
        for row in self.blocks:
            if row.channels % self.groups:
                raise SpecError(
                    f"Block width {row.channels} is not divisible by {self.groups} groups"
                )
        if self.attention and len(self.head.gate_widths) != len(self.blocks):
            raise SpecError(
                f"Attention head needs {len(self.blocks)} gate widths, "
                f"got {len(self.head.gate_widths)}"
            )

    @property
    def block_channels(self) -> list[int]:
        return [row.channels for row in self.blocks]

    @property
    def concat_width(self) -> int:
        return sum(self.block_channels)

    def unit_configs(self) -> list[list[SIUnitConfig]]:
        """Per-block SI Unit configurations, in execution order."""

        configs = []
        in_channels = self.stem.channels
        for row in self.blocks:
            configs.append(
                si_block_configs(
                    in_channels,
                    row.channels,
                    kernel_size=row.k,
                    expansion=row.t,
                    repeats=row.n,
                    stride=row.s,
                    groups=self.groups,
                    exchange=self.exchange,
                )
            )
            in_channels = row.channels
        return configs

    def spatial_sizes(self) -> list[int]:
        """Stem output size followed by every block's output size."""

        stem = self.stem
        size = conv_output_size(self.input, stem.kernel, stem.stride, stem.kernel // 2)
        sizes = [size]
        for row in self.blocks:
            size = conv_output_size(size, row.k, row.s, row.k // 2)
            sizes.append(size)
        return sizes

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["head"]["gate_widths"] = list(self.head.gate_widths)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelSpec:
        required = ["width", "classes", "input", "blocks"]
        missing = [key for key in required if key not in data]
        if missing:
            raise SpecError(f"Model spec is missing fields: {', '.join(missing)}")
        try:
            blocks = tuple(BlockRow(**row) for row in data["blocks"])
            stem = StemSpec(**data.get("stem", {}))
            head_data = dict(data.get("head", {}))
            head_data["gate_widths"] = tuple(head_data.get("gate_widths", ()))
            head = HeadSpec(**head_data)
        except TypeError as e:
            raise SpecError(f"Malformed model spec: {e}") from e
        for flag in ("exchange", "attention"):
            if not isinstance(data.get(flag, True), bool):
                raise SpecError(f"Model spec field {flag!r} must be true or false")
        return cls(
            width=float(data["width"]),
            classes=int(data["classes"]),
            input=int(data["input"]),
            groups=int(data.get("groups", 2)),
            exchange=data.get("exchange", True),
            attention=data.get("attention", True),
            blocks=blocks,
            stem=stem,
            head=head,
        )

    @classmethod
    def from_json(cls, text: str) -> ModelSpec:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise SpecError(f"Model spec is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise SpecError("Model spec JSON must be an object")
        return cls.from_dict(data)


def resolve_channels(base: int, w: float, groups: int = 2) -> int:
    """Scale a base width by ``w``, rounding half away from zero, then up to a multiple of g.

    Examples:
        >>> resolve_channels(24, 1.8)
        44
    """

    if w <= 0:
        raise SpecError(f"Width multiplier must be positive, got {w}")
    if groups < 1:
        raise SpecError(f"Group count must be positive, got {groups}")
    scaled = math.floor(round(base * w, 9) + 0.5)
    scaled = max(scaled, 2)
    return math.ceil(scaled / groups) * groups


def _block_strides(input_hw: int, stem_stride: int, rows: int, min_spatial: int) -> list[int]:
    size = input_hw // stem_stride
    strides = []
    for _ in range(rows):
        if size // 2 >= min_spatial:
            strides.append(2)
            size //= 2
        else:
            strides.append(1)
    return strides


def build_sinet(
    w: float = 1.0,
    classes: int = 1000,
    input_hw: int = 224,
    *,
    groups: int = 2,
    exchange: bool = True,
    attention: bool = True,
    min_spatial: int | None = None,
    repeats: int | None = None,
) -> ModelSpec:
    """Resolve the SINet table for width multiplier ``w``.

    Args:
        w: Width multiplier applied to every block's base channels.
        classes: Number of output classes.
        input_hw: Square input resolution; must be divisible by 32.
        groups: Channel groups per SI Unit.
        exchange: Whether stride-1 units use the exchange shortcut.
        attention: Joint attention decision head (True) or plain head on the last block.
        min_spatial: Resolution below which blocks stop downsampling; ``input_hw // 32``
            by default.
        repeats: Units per block; the table's 4 by default.

    Returns:
        ModelSpec: The resolved architecture.

    Raises:
        SpecError: If the input size is not divisible by 32 or a toggle is invalid.
    """

    if input_hw < DOWNSAMPLING_FACTOR or input_hw % DOWNSAMPLING_FACTOR:
        raise SpecError(f"Input size must be a positive multiple of 32, got {input_hw}")
    stem = StemSpec()
    floor = min_spatial if min_spatial is not None else input_hw // DOWNSAMPLING_FACTOR
    if floor < 1:
        raise SpecError(f"Minimum spatial size must be positive, got {floor}")
    strides = _block_strides(input_hw, stem.stride, len(SINET_TABLE), floor)
    rows = tuple(
        BlockRow(
            channels=resolve_channels(row.channels, w, max(groups, 2)),
            k=row.k,
            s=stride,
            n=repeats if repeats is not None else row.n,
            t=row.t,
        )
        for row, stride in zip(SINET_TABLE, strides, strict=True)
    )
    gate_widths = tuple(default_gate_width(row.channels) for row in rows)
    spec = ModelSpec(
        width=w,
        classes=classes,
        input=input_hw,
        groups=groups,
        exchange=exchange,
        attention=attention,
        blocks=rows,
        stem=stem,
        head=HeadSpec(width=HEAD_WIDTH, gate_widths=gate_widths if attention else ()),
    )
    logger.debug("Resolved SINet(%s) at %d: %s", w, input_hw, spec.block_channels)
    return spec


def build_desk_sinet(
    classes: int = 3, w: float = 0.25, input_hw: int = 64, **toggles: Any
) -> ModelSpec:
    """Desk-scale preset: 64x64 input with the last blocks held at 4x4."""

    return build_sinet(w, classes, input_hw, min_spatial=4, **toggles)


def build_variant(
    base: ModelSpec,
    *,
    groups: int | None = None,
    exchange: bool | None = None,
    attention: bool | None = None,
) -> ModelSpec:
    """Copy ``base`` with the given ablation toggles changed."""

    groups = base.groups if groups is None else groups
    exchange = base.exchange if exchange is None else exchange
    attention = base.attention if attention is None else attention
    if exchange and groups < 2:
        raise SpecError("Invalid toggles: the exchange shortcut needs groups >= 2")
    if attention:
        gate_widths = base.head.gate_widths or tuple(
            default_gate_width(c) for c in base.block_channels
        )
    else:
        gate_widths = ()
    return replace(
        base,
        groups=groups,
        exchange=exchange,
        attention=attention,
        head=replace(base.head, gate_widths=gate_widths),
    )


ABLATION_TOGGLES: dict[str, dict[str, Any]] = {
    "A": {"groups": 1, "exchange": False, "attention": False},
    "B": {"groups": 2, "exchange": False, "attention": False},
    "C": {"groups": 2, "exchange": True, "attention": False},
    "C+attention": {"groups": 2, "exchange": True, "attention": True},
}


def ablation_variants(base: ModelSpec) -> dict[str, ModelSpec]:
    """SI Unit study (A, B, C with the plain head) plus C with the joint decision head."""

    return {name: build_variant(base, **toggles) for name, toggles in ABLATION_TOGGLES.items()}


def shape_trace(spec: ModelSpec) -> list[LayerShape]:
    """Per-layer output shapes of ``spec`` for a single input."""

    sizes = spec.spatial_sizes()
    trace = [LayerShape("input", "input", 3, spec.input, spec.input)]
    trace.append(LayerShape("stem", "conv", spec.stem.channels, sizes[0], sizes[0]))
    size = sizes[0]
    for b, (row, units) in enumerate(zip(spec.blocks, spec.unit_configs(), strict=True), 1):
        for u, unit in enumerate(units, 1):
            size = conv_output_size(size, unit.kernel_size, unit.stride, unit.kernel_size // 2)
            trace.append(
                LayerShape(f"block{b}.unit{u}", "si_unit", unit.out_channels, size, size)
            )
        trace.append(LayerShape(f"block{b}", "si_block", row.channels, size, size))
    if spec.attention:
        for b, row in enumerate(spec.blocks, 1):
            trace.append(LayerShape(f"head.pool{b}", "pool", row.channels, 1, 1))
        trace.append(LayerShape("head.concat", "concat", spec.concat_width, 1, 1))
    else:
        trace.append(LayerShape("head.pool", "pool", spec.blocks[-1].channels, 1, 1))
    trace.append(LayerShape("head.fc_hidden", "fc", spec.head.width, 1, 1))
    trace.append(LayerShape("head.fc_out", "fc", spec.classes, 1, 1))
    return trace
