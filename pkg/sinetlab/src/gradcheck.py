"""Finite-difference verification of every operator and block gradient.

Each case builds a small random problem, reduces its output to a scalar with a random
weighting ``sum(out * R)``, and compares the tape's gradients against central differences.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass
from functools import partial

import numpy as np

from sinetlab.src.blocks import (
    BottleneckParams,
    ConvBN,
    SIUnitConfig,
    SIUnitParams,
    composite_h,
    dense_funnel,
    exchange_shortcut,
    si_unit,
)
from sinetlab.src.decision import (
    AttentionHeadParams,
    ClassifierParams,
    GateParams,
    attention_weight,
    joint_decision,
    plain_decision,
)
from sinetlab.src.tensor import (
    BatchNormState,
    ConvParams,
    Tape,
    Tensor,
    add,
    batchnorm2d,
    concat_channels,
    conv2d,
    fully_connected,
    global_avg_pool,
    mul,
    relu6,
    scale_channels,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    split_channels,
    weighted_sum,
)

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
# Steps shrink by this factor where the two estimates disagree (a kink lies within reach).
STEP_REFINEMENT = 10.0
KINK_THRESHOLD = 1e-6

LossFn = Callable[[], Tensor]


@dataclass(frozen=True)
class GradcheckResult:
    name: str
    max_rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= self.tol)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max(max|a|, max|n|, 1e-8)``."""

    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-8)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _central(loss_fn: LossFn, flat: np.ndarray, index: int, step: float) -> float:
    original = flat[index]
    flat[index] = original + step
    plus = loss_fn().item()
    flat[index] = original - step
    minus = loss_fn().item()
    flat[index] = original
    return (plus - minus) / (2.0 * step)


def numeric_gradient(loss_fn: LossFn, tensor: Tensor, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of ``loss_fn`` with respect to ``tensor`` (perturbed in place).

    Near a non-differentiable point of ReLU6 the step is refined until two consecutive
    estimates agree.
    """

    flat = tensor.data.reshape(-1)
    grad = np.zeros_like(flat)
    for index in range(flat.size):
        estimate = _central(loss_fn, flat, index, step)
        current = step
        for _ in range(2):
            finer = _central(loss_fn, flat, index, current / STEP_REFINEMENT)
            if abs(finer - estimate) <= KINK_THRESHOLD * (1.0 + abs(estimate)):
                break
            estimate, current = finer, current / STEP_REFINEMENT
        grad[index] = estimate
    return grad.reshape(tensor.shape)


def check(
    name: str,
    loss_fn: LossFn,
    tensors: list[Tensor],
    tol: float = DEFAULT_TOLERANCE,
    step: float = DEFAULT_STEP,
) -> GradcheckResult:
    """Compare tape gradients of ``loss_fn`` against finite differences for ``tensors``."""

    tape = Tape()
    tape.watch(*tensors)
    tape.backward(loss_fn())
    analytic = np.concatenate([t.grad.reshape(-1) for t in tensors])
    numeric = np.concatenate([numeric_gradient(loss_fn, t, step).reshape(-1) for t in tensors])
    result = GradcheckResult(name, relative_error(analytic, numeric), tol)
    if result.passed:
        logger.debug("gradcheck %s: %.3e", name, result.max_rel_error)
    else:
        logger.warning(
            "gradcheck %s failed: relative error %.3e > %.1e", name, result.max_rel_error, tol
        )
    return result


# Cases: each yields (name, loss_fn, tensors)

Case = tuple[str, LossFn, list[Tensor]]


def _probe(rng: np.random.Generator, fn: Callable[[], Tensor]) -> LossFn:
    weights: dict[str, np.ndarray] = {}

    def loss() -> Tensor:
        out = fn()
        if "r" not in weights:
            weights["r"] = rng.standard_normal(out.shape)
        return weighted_sum(out, weights["r"])

    return loss


def _randn(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.standard_normal(shape))


def _reverse_groups(x: Tensor, groups: int) -> Tensor:
    return concat_channels(split_channels(x, groups)[::-1])


def _away_from_kinks(rng: np.random.Generator, *shape: int) -> Tensor:
    values = rng.uniform(-2.0, 8.0, size=shape)
    for kink in (0.0, 6.0):
        near = np.abs(values - kink) < 0.05
        values[near] += 0.1
    return Tensor(values)


def operator_cases(rng: np.random.Generator) -> Iterator[Case]:
    x = _randn(rng, 2, 3, 5, 5)
    conv = ConvParams.init(3, 4, 3, rng)
    yield "conv2d", _probe(rng, partial(conv2d, x, conv)), [x, *conv.tensors()]

    x = _randn(rng, 1, 4, 6, 6)
    conv = ConvParams.init(4, 6, 3, rng, stride=2, groups=2, bias=True)
    conv.bias.data[:] = rng.standard_normal(6)
    yield "conv2d_grouped_stride2", _probe(rng, partial(conv2d, x, conv)), [x, *conv.tensors()]

    x = _randn(rng, 1, 3, 5, 5)
    conv = ConvParams.init(3, 3, 5, rng, groups=3)
    yield "conv2d_depthwise", _probe(rng, partial(conv2d, x, conv)), [x, *conv.tensors()]

    x = _away_from_kinks(rng, 3, 4)
    yield "relu6", _probe(rng, partial(relu6, x)), [x]

    x = _randn(rng, 3, 4)
    yield "sigmoid", _probe(rng, partial(sigmoid, x)), [x]

    x, y = _randn(rng, 2, 3), _randn(rng, 2, 3)
    yield "add", _probe(rng, partial(add, x, y)), [x, y]

    x, y = _randn(rng, 2, 3), _randn(rng, 2, 1)
    yield "mul_broadcast", _probe(rng, partial(mul, x, y)), [x, y]

    x = _randn(rng, 3, 2, 3, 3)
    gamma, beta = _randn(rng, 2), _randn(rng, 2)
    state = BatchNormState.fresh(2)
    yield (
        "batchnorm2d_train",
        _probe(rng, partial(batchnorm2d, x, gamma, beta, state, "train")),
        [x, gamma, beta],
    )

    x = _randn(rng, 2, 2, 3, 3)
    gamma, beta = _randn(rng, 2), _randn(rng, 2)
    frozen = BatchNormState(rng.standard_normal(2), rng.uniform(0.5, 2.0, 2))
    yield (
        "batchnorm2d_eval",
        _probe(rng, partial(batchnorm2d, x, gamma, beta, frozen, "eval")),
        [x, gamma, beta],
    )

    x = _randn(rng, 2, 3, 4, 4)
    yield "global_avg_pool", _probe(rng, partial(global_avg_pool, x)), [x]

    x, w, b = _randn(rng, 3, 4), _randn(rng, 4, 5), _randn(rng, 5)
    yield "fully_connected", _probe(rng, partial(fully_connected, x, w, b)), [x, w, b]

    x = _randn(rng, 2, 4)
    yield "softmax", _probe(rng, partial(softmax, x)), [x]

    logits = _randn(rng, 4, 3)
    labels = rng.integers(0, 3, size=4)
    yield "softmax_cross_entropy", partial(softmax_cross_entropy, logits, labels), [logits]

    x, alpha = _randn(rng, 3, 4), _randn(rng, 3, 1)
    yield "scale_channels", _probe(rng, partial(scale_channels, x, alpha)), [x, alpha]

    x, y = _randn(rng, 2, 2, 3, 3), _randn(rng, 2, 4, 3, 3)
    yield "concat_channels", _probe(rng, partial(concat_channels, [x, y])), [x, y]

    x = _randn(rng, 2, 6, 3, 3)
    yield "split_channels", _probe(rng, partial(_reverse_groups, x, 3)), [x]


def block_cases(rng: np.random.Generator) -> Iterator[Case]:
    unit = SIUnitConfig(in_channels=4, out_channels=4, kernel_size=3, expansion=2)
    x = _randn(rng, 2, 4, 5, 5)
    branch = BottleneckParams.init(unit.branch, rng)
    part = _randn(rng, 2, 2, 5, 5)
    yield (
        "composite_h",
        _probe(rng, partial(composite_h, part, unit.branch, branch)),
        [part, *branch.tensors()],
    )

    first, second = BottleneckParams.init(unit.branch, rng), BottleneckParams.init(unit.branch, rng)
    branches = [
        partial(composite_h, cfg=unit.branch, params=first),
        partial(composite_h, cfg=unit.branch, params=second),
    ]
    yield (
        "exchange_shortcut",
        _probe(rng, partial(exchange_shortcut, x, branches, exchange=True)),
        [x, *first.tensors(), *second.tensors()],
    )

    prev, current = _randn(rng, 2, 4, 3, 3), _randn(rng, 2, 4, 3, 3)
    squeeze = ConvBN.init(8, 4, 1, rng)
    yield (
        "dense_funnel",
        _probe(rng, partial(dense_funnel, prev, current, squeeze)),
        [prev, current, *squeeze.tensors()],
    )

    params = SIUnitParams.init(unit, rng)
    yield "si_unit", _probe(rng, partial(si_unit, x, unit, params)), [x, *params.tensors()]

    transition = SIUnitConfig(
        in_channels=4, out_channels=6, stride=2, expansion=2, exchange=False, funnel=False
    )
    t_params = SIUnitParams.init(transition, rng)
    yield (
        "si_unit_transition",
        _probe(rng, partial(si_unit, x, transition, t_params)),
        [x, *t_params.tensors()],
    )

    z = _randn(rng, 3, 6)
    gate = GateParams.init(6, 8, rng)
    yield "attention_weight", _probe(rng, partial(attention_weight, z, gate)), [z, *gate.tensors()]

    zs = [_randn(rng, 2, 4), _randn(rng, 2, 6)]
    alphas = [Tensor(rng.uniform(0.1, 0.9, (2, 1))), Tensor(rng.uniform(0.1, 0.9, (2, 1)))]
    head = AttentionHeadParams.init([4, 6], 3, rng, width=16)
    yield (
        "joint_decision",
        _probe(rng, partial(joint_decision, zs, alphas, head)),
        [*zs, *alphas, *head.tensors()],
    )

    last = _randn(rng, 2, 6, 3, 3)
    classifier = ClassifierParams.init(6, 3, rng, width=16)
    yield (
        "plain_decision",
        _probe(rng, partial(plain_decision, last, classifier)),
        [last, *classifier.tensors()],
    )


def run_suite(seed: int = 0, tol: float = DEFAULT_TOLERANCE) -> list[GradcheckResult]:
    """Check every operator and block case with problems drawn from ``seed``."""

    rng = np.random.default_rng(seed)
    results = []
    for name, loss_fn, tensors in [*operator_cases(rng), *block_cases(rng)]:
        results.append(check(name, loss_fn, tensors, tol))
    failed = sum(not r.passed for r in results)
    logger.info("gradcheck seed=%d: %d/%d passed", seed, len(results) - failed, len(results))
    return results
