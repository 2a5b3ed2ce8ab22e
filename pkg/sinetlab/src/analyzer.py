"""Static parameter and multiply-add accounting over a ModelSpec.

"FLOPs" in cost tables are multiply-adds; this module reports them as ``madds``. The
counting conventions are recorded in every report and match what the executable
operators count through :class:`~sinetlab.src.tensor.MaddCounter`.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Any

import pandas as pd

from sinetlab.src.arch import ModelSpec, build_sinet
from sinetlab.src.tensor import GroupError, conv_output_size

logger = logging.getLogger(__name__)

COUNTING_CONVENTIONS: dict[str, Any] = {
    "unit": "multiply-adds",
    "conv_bias": False,
    "fc_bias": True,
    "gate_bias": False,
    "bn_params_per_channel": 2,
    "bn_madds": 0,
    "attention_scale_madds": "channels per block",
    "free_ops": ["add", "concat", "split", "global_avg_pool", "softmax", "relu6", "sigmoid"],
}


@dataclass(frozen=True)
class Cost:
    params: int = 0
    madds: int = 0

    def __add__(self, other: Cost) -> Cost:
        return Cost(self.params + other.params, self.madds + other.madds)

    def __sub__(self, other: Cost) -> Cost:
        return Cost(self.params - other.params, self.madds - other.madds)


def conv_cost(
    c: int,
    h: int,
    w: int,
    k: int,
    m: int,
    g: int = 1,
    s: int = 1,
    pad: int | None = None,
    bias: bool = False,
) -> Cost:
    """Cost of a (grouped) convolution on a ``c x h x w`` input.

    Args:
        c: Input channels.
        h: Input height.
        w: Input width.
        k: Square kernel size.
        m: Output channels.
        g: Groups; must divide ``c`` and ``m``.
        s: Stride.
        pad: Padding, ``(k - 1) // 2`` by default.
        bias: Whether the layer carries a bias.

    Returns:
        Cost: ``k*k*(c/g)*m`` parameters (plus ``m`` with bias) and
        ``h_out*w_out*k*k*(c/g)*m`` multiply-adds.

    Raises:
        GroupError: If ``g`` does not divide both channel counts.
    """

    if g < 1 or c % g or m % g:
        raise GroupError(f"Channels {c}->{m} not divisible by {g} groups")
    pad = (k - 1) // 2 if pad is None else pad
    h_out = conv_output_size(h, k, s, pad)
    w_out = conv_output_size(w, k, s, pad)
    weights = k * k * (c // g) * m
    return Cost(params=weights + (m if bias else 0), madds=h_out * w_out * weights)


def fc_cost(d_in: int, d_out: int, bias: bool = True) -> Cost:
    return Cost(params=d_in * d_out + (d_out if bias else 0), madds=d_in * d_out)


def bn_cost(c: int) -> Cost:
    return Cost(params=2 * c, madds=0)


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    block: str
    params: int
    madds: int


@dataclass
class CostReport:
    """Per-layer costs of a model plus the conventions used to count them."""

    layers: list[LayerCost] = field(default_factory=list)
    conventions: dict[str, Any] = field(default_factory=lambda: dict(COUNTING_CONVENTIONS))

    def add(self, name: str, kind: str, block: str, cost: Cost) -> None:
        self.layers.append(LayerCost(name, kind, block, cost.params, cost.madds))

    @property
    def totals(self) -> Cost:
        return sum((Cost(layer.params, layer.madds) for layer in self.layers), Cost())

    @property
    def blocks(self) -> dict[str, Cost]:
        subtotals: dict[str, Cost] = {}
        for layer in self.layers:
            subtotals[layer.block] = subtotals.get(layer.block, Cost()) + Cost(
                layer.params, layer.madds
            )
        return subtotals

    def to_dict(self) -> dict[str, Any]:
        totals = self.totals
        return {
            "conventions": self.conventions,
            "layers": [vars(layer) for layer in self.layers],
            "blocks": {
                name: {"params": cost.params, "madds": cost.madds}
                for name, cost in self.blocks.items()
            },
            "totals": {"params": totals.params, "madds": totals.madds},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [vars(layer) for layer in self.layers],
            columns=["name", "kind", "block", "params", "madds"],
        )

    def to_table(self) -> str:
        """Aligned plain-text rendering: layers, block subtotals, totals."""

        blocks = pd.DataFrame(
            [
                {"block": name, "params": cost.params, "madds": cost.madds}
                for name, cost in self.blocks.items()
            ]
        )
        totals = self.totals
        return "\n".join(
            [
                self.to_frame().to_string(index=False),
                "",
                blocks.to_string(index=False),
                "",
                f"total params: {totals.params:,} ({totals.params / 1e6:.2f}M)",
                f"total madds:  {totals.madds:,} ({totals.madds / 1e6:.1f}M)",
            ]
        )


def _analyze_head(report: CostReport, spec: ModelSpec) -> None:
    if spec.attention:
        for index, (channels, hidden) in enumerate(
            zip(spec.block_channels, spec.head.gate_widths, strict=True), 1
        ):
            report.add(f"head.gate{index}.w1", "fc", "head", fc_cost(channels, hidden, bias=False))
            report.add(f"head.gate{index}.w2", "fc", "head", fc_cost(hidden, 1, bias=False))
            report.add(f"head.scale{index}", "scale", "head", Cost(0, channels))
        features = spec.concat_width
    else:
        features = spec.blocks[-1].channels
    report.add("head.fc_hidden", "fc", "head", fc_cost(features, spec.head.width))
    report.add("head.fc_out", "fc", "head", fc_cost(spec.head.width, spec.classes))


def analyze(spec: ModelSpec) -> CostReport:
    """Walk ``spec`` layer by layer and cost every parameterised operation.

    Reports of specs that differ only in the exchange toggle are identical: the exchange
    shortcut is pure additions.
    """

    report = CostReport()
    stem = spec.stem
    report.add(
        "stem.conv",
        "conv",
        "stem",
        conv_cost(3, spec.input, spec.input, stem.kernel, stem.channels, s=stem.stride),
    )
    report.add("stem.bn", "bn", "stem", bn_cost(stem.channels))
    size = conv_output_size(spec.input, stem.kernel, stem.stride, (stem.kernel - 1) // 2)

    for b, units in enumerate(spec.unit_configs(), 1):
        block = f"block{b}"
        for u, unit in enumerate(units, 1):
            branch = unit.branch
            k = branch.kernel_size
            out_size = conv_output_size(size, k, branch.stride, (k - 1) // 2)
            expand = conv_cost(branch.in_channels, size, size, 1, branch.hidden)
            depthwise = conv_cost(
                branch.hidden, size, size, k, branch.hidden, g=branch.hidden, s=branch.stride
            )
            project = conv_cost(branch.hidden, out_size, out_size, 1, branch.out_channels)
            for j in range(1, unit.groups + 1):
                prefix = f"{block}.unit{u}.branch{j}"
                report.add(f"{prefix}.expand", "conv", block, expand)
                report.add(f"{prefix}.expand_bn", "bn", block, bn_cost(branch.hidden))
                report.add(f"{prefix}.depthwise", "conv", block, depthwise)
                report.add(f"{prefix}.depthwise_bn", "bn", block, bn_cost(branch.hidden))
                report.add(f"{prefix}.project", "conv", block, project)
                report.add(f"{prefix}.project_bn", "bn", block, bn_cost(branch.out_channels))
            if unit.funnel:
                width = unit.funnel_out_channels
                merged = unit.in_channels + unit.out_channels
                squeeze = conv_cost(merged, out_size, out_size, 1, width)
                report.add(f"{block}.unit{u}.funnel", "conv", block, squeeze)
                report.add(f"{block}.unit{u}.funnel_bn", "bn", block, bn_cost(width))
            size = out_size

    _analyze_head(report, spec)
    totals = report.totals
    logger.debug(
        "Analyzed %d layers: %d params, %d madds", len(report.layers), totals.params, totals.madds
    )
    return report


@dataclass
class CostDelta:
    """Differences ``b - a`` between two reports."""

    params: int
    madds: int
    blocks: dict[str, Cost]
    layers: dict[str, Cost]
    only_in_a: list[str]
    only_in_b: list[str]
    base_madds: int

    @property
    def is_zero(self) -> bool:
        return (
            self.params == 0
            and self.madds == 0
            and not self.layers
            and not self.only_in_a
            and not self.only_in_b
        )

    @property
    def relative_madds(self) -> float:
        return self.madds / self.base_madds if self.base_madds else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": self.params,
            "madds": self.madds,
            "relative_madds": self.relative_madds,
            "blocks": {k: {"params": v.params, "madds": v.madds} for k, v in self.blocks.items()},
            "layers": {k: {"params": v.params, "madds": v.madds} for k, v in self.layers.items()},
            "only_in_a": self.only_in_a,
            "only_in_b": self.only_in_b,
        }


def diff(a: CostReport, b: CostReport) -> CostDelta:
    layers_a = {layer.name: Cost(layer.params, layer.madds) for layer in a.layers}
    layers_b = {layer.name: Cost(layer.params, layer.madds) for layer in b.layers}
    changed = {
        name: layers_b[name] - cost
        for name, cost in layers_a.items()
        if name in layers_b and layers_b[name] != cost
    }
    blocks_a, blocks_b = a.blocks, b.blocks
    blocks = {
        name: blocks_b.get(name, Cost()) - blocks_a.get(name, Cost())
        for name in dict.fromkeys([*blocks_a, *blocks_b])
    }
    total = b.totals - a.totals
    return CostDelta(
        params=total.params,
        madds=total.madds,
        blocks={name: cost for name, cost in blocks.items() if cost != Cost()},
        layers=changed,
        only_in_a=[name for name in layers_a if name not in layers_b],
        only_in_b=[name for name in layers_b if name not in layers_a],
        base_madds=a.totals.madds,
    )


def analyze_widths(
    widths: Iterable[float] = (1.0, 1.2, 1.6, 1.8), classes: int = 1000, input_hw: int = 224
) -> pd.DataFrame:
    """Cost of SINet at several width multipliers, one row per width."""

    rows = []
    for w in widths:
        totals = analyze(build_sinet(w, classes, input_hw)).totals
        rows.append(
            {
                "width": w,
                "params": totals.params,
                "madds": totals.madds,
                "params_m": round(totals.params / 1e6, 2),
                "madds_m": round(totals.madds / 1e6, 1),
            }
        )
    return pd.DataFrame(rows, columns=["width", "params", "madds", "params_m", "madds_m"])
