"""Dense NCHW tensors, a reverse-mode autodiff tape and the primitive operators.

Every operator is a plain function taking ``Tensor`` inputs. When at least one input is
bound to a ``Tape`` the application is recorded on that tape together with a closure
computing the input gradients; otherwise the operator simply evaluates. Nothing here
touches module-level mutable state, so distinct tapes may run on distinct threads.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

Mode = Literal["train", "eval"]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class TensorError(ValueError):
    """Base class for invalid tensor operations."""


class DimensionError(TensorError):
    """Raised when operand shapes do not conform."""


class GroupError(TensorError):
    """Raised when a channel count is not divisible by the requested group count."""


class TapeError(RuntimeError):
    """Raised for misuse of the autodiff tape."""


@dataclass
class MaddCounter:
    """Accumulates the multiply-adds executed by the operators it is passed to."""

    madds: int = 0
    by_kind: dict[str, int] = field(default_factory=dict)

    def add(self, kind: str, count: int) -> None:
        self.madds += count
        self.by_kind[kind] = self.by_kind.get(kind, 0) + count


class Tensor:
    """A dense float64 array, optionally bound to a tape node."""

    __slots__ = ("data", "grad", "tape", "node", "name")

    def __init__(self, data, name: str = "") -> None:
        array = np.asarray(data, dtype=np.float64)
        if any(extent < 1 for extent in array.shape):
            raise DimensionError(f"All tensor extents must be >= 1, got shape {array.shape}")
        self.data = array
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None
        self.node: int | None = None
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray) -> Tensor:
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.grad = None
        tensor.tape = None
        tensor.node = None
        tensor.name = ""
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor._wrap(self.data)

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        return mul(self, other)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        tracked = "tracked" if self.tape is not None else "constant"
        return f"Tensor{label}(shape={self.shape}, {tracked})"


@dataclass
class TapeEntry:
    """One recorded primitive application."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of primitive applications, replayed in reverse by ``backward``."""

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []
        self.leaves: list[Tensor] = []
        self._next_node = 0
        self._consumed = False

    def _allocate(self, tensor: Tensor) -> None:
        tensor.tape = self
        tensor.node = self._next_node
        self._next_node += 1

    def watch(self, *tensors: Tensor) -> None:
        """Register tensors as leaves whose gradients ``backward`` should produce."""

        if self._consumed:
            raise TapeError("Cannot watch tensors on a tape that already ran backward")
        for tensor in tensors:
            if tensor.tape is self:
                continue
            tensor.grad = None
            self._allocate(tensor)
            self.leaves.append(tensor)

    def leaf(self, data, name: str = "") -> Tensor:
        tensor = Tensor(data, name=name)
        self.watch(tensor)
        return tensor

    def record(
        self, op: str, inputs: Sequence[Tensor], data: np.ndarray, backward: BackwardFn
    ) -> Tensor:
        if self._consumed:
            raise TapeError("Cannot record onto a tape that already ran backward; reset it")
        output = Tensor._wrap(data)
        self._allocate(output)
        self.entries.append(TapeEntry(op, tuple(inputs), output, backward))
        return output

    def backward(self, loss: Tensor) -> list[Tensor]:
        """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every watched leaf.

        Args:
            loss: Scalar tensor recorded on this tape.

        Returns:
            list[Tensor]: The watched leaves, each with ``grad`` populated.

        Raises:
            TapeError: If the loss is not a scalar, is not on this tape, or backward
                already ran without a ``reset``.
        """

        if self._consumed:
            raise TapeError("backward() already ran on this tape; call reset() first")
        if loss.tape is not self:
            raise TapeError("Loss tensor is detached from this tape")
        if loss.data.size != 1:
            raise TapeError(f"backward() needs a scalar loss, got shape {loss.shape}")

        grads: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            upstream = grads.pop(entry.output.node, None)
            if upstream is None:
                continue
            for tensor, grad in zip(entry.inputs, entry.backward(upstream), strict=True):
                if grad is None or tensor.tape is not self:
                    continue
                if tensor.node in grads:
                    grads[tensor.node] = grads[tensor.node] + grad
                else:
                    grads[tensor.node] = grad

        for leaf in self.leaves:
            grad = grads.get(leaf.node)
            leaf.grad = grad if grad is not None else np.zeros_like(leaf.data)
            leaf.tape = None
            leaf.node = None
        self._consumed = True
        logger.debug("Backward visited %d tape entries", len(self.entries))
        return self.leaves

    def reset(self) -> None:
        for leaf in self.leaves:
            if leaf.tape is self:
                leaf.tape = None
                leaf.node = None
        self.entries.clear()
        self.leaves.clear()
        self._next_node = 0
        self._consumed = False


def _tape_of(inputs: Sequence[Tensor | None]) -> Tape | None:
    tape = None
    for tensor in inputs:
        if tensor is None or tensor.tape is None:
            continue
        if tape is None:
            tape = tensor.tape
        elif tensor.tape is not tape:
            raise TapeError("Operator inputs are recorded on different tapes")
    return tape


def _emit(op: str, inputs: Sequence[Tensor], data: np.ndarray, backward: BackwardFn) -> Tensor:
    tape = _tape_of(inputs)
    if tape is None:
        return Tensor._wrap(data)
    return tape.record(op, inputs, data, backward)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean uniform weights scaled by fan-in (He initialisation)."""

    bound = float(np.sqrt(6.0 / max(fan_in, 1)))
    return rng.uniform(-bound, bound, size=shape)


# Convolution


@dataclass
class ConvParams:
    """Weights and hyper-parameters of a (grouped) 2-D convolution.

    ``weight`` has shape ``(M, C/g, k, k)``; ``padding`` defaults to the "same" padding
    ``(k - 1) / 2`` which is exact because kernels are restricted to odd sizes.
    """

    weight: Tensor
    bias: Tensor | None = None
    stride: int = 1
    padding: int | None = None
    groups: int = 1

    def __post_init__(self) -> None:
        if self.weight.ndim != 4:
            raise DimensionError(f"Conv weight must be rank 4, got shape {self.weight.shape}")
        out_channels, _, kh, kw = self.weight.shape
        if kh != kw or kh % 2 == 0:
            raise DimensionError(f"Conv kernels must be square and odd, got {kh}x{kw}")
        if self.stride < 1:
            raise ValueError(f"Stride must be positive, got {self.stride}")
        if self.groups < 1:
            raise GroupError(f"Group count must be positive, got {self.groups}")
        if out_channels % self.groups:
            raise GroupError(
                f"Output channels {out_channels} not divisible by groups {self.groups}"
            )
        if self.padding is None:
            self.padding = (kh - 1) // 2
        if self.padding < 0:
            raise ValueError(f"Padding must be non-negative, got {self.padding}")
        if self.bias is not None and self.bias.shape != (out_channels,):
            raise DimensionError(
                f"Conv bias must have shape ({out_channels},), got {self.bias.shape}"
            )

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1] * self.groups

    def tensors(self) -> list[Tensor]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]

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
        bias: bool = False,
    ) -> ConvParams:
        if in_channels % groups:
            raise GroupError(f"Input channels {in_channels} not divisible by groups {groups}")
        per_group = in_channels // groups
        fan_in = per_group * kernel_size * kernel_size
        weight = he_uniform((out_channels, per_group, kernel_size, kernel_size), fan_in, rng)
        return cls(
            weight=Tensor(weight),
            bias=Tensor(np.zeros(out_channels)) if bias else None,
            stride=stride,
            groups=groups,
        )


def conv_output_size(size: int, kernel_size: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel_size) // stride + 1


def _check_conv_input(x: Tensor, p: ConvParams) -> tuple[int, int]:
    if x.ndim != 4:
        raise DimensionError(f"conv2d expects an NCHW tensor, got shape {x.shape}")
    channels = x.shape[1]
    if channels % p.groups:
        raise GroupError(f"Input channels {channels} not divisible by groups {p.groups}")
    if channels // p.groups != p.weight.shape[1]:
        raise DimensionError(
            f"Input has {channels} channels but weight expects "
            f"{p.weight.shape[1]} x {p.groups} groups"
        )
    k = p.kernel_size
    ho = conv_output_size(x.shape[2], k, p.stride, p.padding)
    wo = conv_output_size(x.shape[3], k, p.stride, p.padding)
    if ho < 1 or wo < 1:
        raise DimensionError(f"Kernel {k} with padding {p.padding} does not fit input {x.shape}")
    return ho, wo


def conv2d(x: Tensor, p: ConvParams, counter: MaddCounter | None = None) -> Tensor:
    """Grouped 2-D convolution through an im2col gather and one batched matmul per group.

    Group ``j`` of the output channels is computed only from group ``j`` of the input
    channels. Differentiable with respect to the input, weight and bias.
    """

    ho, wo = _check_conv_input(x, p)
    n, c, h, w = x.shape
    m, cg, k, _ = p.weight.shape
    g, s, pad = p.groups, p.stride, p.padding

    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))
    windows = windows[:, :, : (ho - 1) * s + 1 : s, : (wo - 1) * s + 1 : s]
    cols = (
        windows.reshape(n, g, cg, ho, wo, k, k)
        .transpose(1, 0, 3, 4, 2, 5, 6)
        .reshape(g, n * ho * wo, cg * k * k)
    )
    wmat = p.weight.data.reshape(g, m // g, cg * k * k).transpose(0, 2, 1)
    out = np.matmul(cols, wmat).reshape(g, n, ho, wo, m // g).transpose(1, 0, 4, 2, 3)
    out = out.reshape(n, m, ho, wo)
    if p.bias is not None:
        out = out + p.bias.data.reshape(1, m, 1, 1)
    if counter is not None:
        counter.add("conv", n * ho * wo * cg * k * k * m)

    def backward(grad: np.ndarray):
        grad_g = grad.reshape(n, g, m // g, ho, wo).transpose(1, 0, 3, 4, 2)
        grad_g = grad_g.reshape(g, n * ho * wo, m // g)
        d_weight = np.matmul(cols.transpose(0, 2, 1), grad_g)
        d_weight = d_weight.transpose(0, 2, 1).reshape(m, cg, k, k)
        d_cols = np.matmul(grad_g, wmat.transpose(0, 2, 1))
        d_cols = d_cols.reshape(g, n, ho, wo, cg, k, k).transpose(1, 0, 4, 2, 3, 5, 6)
        d_cols = d_cols.reshape(n, c, ho, wo, k, k)
        d_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                d_padded[:, :, i : i + (ho - 1) * s + 1 : s, j : j + (wo - 1) * s + 1 : s] += (
                    d_cols[..., i, j]
                )
        d_x = d_padded[:, :, pad : pad + h, pad : pad + w]
        d_bias = grad.sum(axis=(0, 2, 3)) if p.bias is not None else None
        return d_x, d_weight, d_bias

    return _emit("conv2d", (x, p.weight, p.bias), out, backward)


def conv2d_naive(
    x: np.ndarray,
    weight: np.ndarray,
    *,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
    counter: MaddCounter | None = None,
) -> np.ndarray:
    """Direct nested-loop convolution counting every multiply it performs.

    Slow by construction; it exists as the executable oracle for ``conv2d`` and for the
    analyzer's multiply-add formula.
    """

    n, c, h, w = x.shape
    m, cg, k, _ = weight.shape
    if c % groups or m % groups:
        raise GroupError(f"Channels {c}/{m} not divisible by groups {groups}")
    if c // groups != cg:
        raise DimensionError(f"Input has {c} channels, weight expects {cg} x {groups}")
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    out = np.zeros((n, m, ho, wo))
    per_group_out = m // groups
    multiplies = 0
    for b in range(n):
        for o in range(m):
            base = (o // per_group_out) * cg
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ci in range(cg):
                        for i in range(k):
                            for j in range(k):
                                acc += (
                                    padded[b, base + ci, oy * stride + i, ox * stride + j]
                                    * weight[o, ci, i, j]
                                )
                                multiplies += 1
                    out[b, o, oy, ox] = acc
    if counter is not None:
        counter.add("conv", multiplies)
    return out


# Elementwise and normalisation


def relu6(x: Tensor) -> Tensor:
    """Elementwise ``min(max(x, 0), 6)``; the subgradient is 0 at both kinks."""

    out = np.clip(x.data, 0.0, 6.0)

    def backward(grad: np.ndarray):
        return (grad * ((x.data > 0.0) & (x.data < 6.0)),)

    return _emit("relu6", (x,), out, backward)


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(grad: np.ndarray):
        return (grad * out * (1.0 - out),)

    return _emit("sigmoid", (x,), out, backward)


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise DimensionError(f"add needs equal shapes, got {x.shape} and {y.shape}")

    def backward(grad: np.ndarray):
        return grad, grad

    return _emit("add", (x, y), x.data + y.data, backward)


def mul(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting."""

    try:
        out = x.data * y.data
    except ValueError as e:
        raise DimensionError(f"Cannot broadcast {x.shape} with {y.shape}") from e

    def backward(grad: np.ndarray):
        return _unbroadcast(grad * y.data, x.shape), _unbroadcast(grad * x.data, y.shape)

    return _emit("mul", (x, y), out, backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(grad: np.ndarray):
        return (np.broadcast_to(grad, x.shape).copy(),)

    return _emit("sum", (x,), np.asarray(x.data.sum()), backward)


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """``sum(x * weights)`` for a constant weight array; used as a probe loss."""

    return sum_all(mul(x, Tensor(weights)))


@dataclass
class BatchNormState:
    """Running statistics of one batch-normalisation layer."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @classmethod
    def fresh(cls, channels: int, eps: float = BN_EPS) -> BatchNormState:
        return cls(np.zeros(channels), np.ones(channels), eps=eps)


def batchnorm2d(
    x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, mode: Mode = "train"
) -> Tensor:
    """Per-channel batch normalisation over N, H and W.

    In ``train`` mode the batch statistics normalise the input and the running statistics
    are updated in place; in ``eval`` mode the running statistics are used.
    """

    if x.ndim != 4:
        raise DimensionError(f"batchnorm2d expects an NCHW tensor, got shape {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(
            f"gamma/beta must have shape ({channels},), got {gamma.shape} and {beta.shape}"
        )
    axes = (0, 2, 3)
    g = gamma.data.reshape(1, channels, 1, 1)

    if mode == "train":
        count = x.data.size // channels
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var + state.eps)
        x_hat = (x.data - mean.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
        unbiased = var * count / (count - 1) if count > 1 else var
        state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * mean
        state.running_var = (1 - state.momentum) * state.running_var + state.momentum * unbiased

        def backward(grad: np.ndarray):
            d_x_hat = grad * g
            d_x = (
                inv_std.reshape(1, -1, 1, 1)
                / count
                * (
                    count * d_x_hat
                    - d_x_hat.sum(axis=axes, keepdims=True)
                    - x_hat * (d_x_hat * x_hat).sum(axis=axes, keepdims=True)
                )
            )
            return d_x, (grad * x_hat).sum(axis=axes), grad.sum(axis=axes)

    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        x_hat = (x.data - state.running_mean.reshape(1, -1, 1, 1)) * inv_std.reshape(
            1, -1, 1, 1
        )

        def backward(grad: np.ndarray):
            d_x = grad * g * inv_std.reshape(1, -1, 1, 1)
            return d_x, (grad * x_hat).sum(axis=axes), grad.sum(axis=axes)

    else:
        raise ValueError(f"Unknown batchnorm mode {mode!r}")

    out = g * x_hat + beta.data.reshape(1, channels, 1, 1)
    return _emit("batchnorm2d", (x, gamma, beta), out, backward)


# Pooling, dense layers and classification


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel mean over spatial positions: ``N x C x H x W -> N x C``."""

    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool expects an NCHW tensor, got shape {x.shape}")
    n, c, h, w = x.shape

    def backward(grad: np.ndarray):
        return (np.broadcast_to(grad.reshape(n, c, 1, 1) / (h * w), x.shape).copy(),)

    return _emit("global_avg_pool", (x,), x.data.mean(axis=(2, 3)), backward)


def fully_connected(
    x: Tensor, weight: Tensor, bias: Tensor | None = None, counter: MaddCounter | None = None
) -> Tensor:
    """Affine map ``x @ weight + bias`` for ``x`` of shape ``N x D`` and weight ``D x E``."""

    if x.ndim != 2 or weight.ndim != 2:
        raise DimensionError(f"fully_connected expects 2-D operands, got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"Inner dimensions differ: {x.shape} @ {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise DimensionError(f"Bias shape {bias.shape} does not match {weight.shape[1]} outputs")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data
    if counter is not None:
        counter.add("fc", x.shape[0] * weight.shape[0] * weight.shape[1])

    def backward(grad: np.ndarray):
        d_bias = grad.sum(axis=0) if bias is not None else None
        return grad @ weight.data.T, x.data.T @ grad, d_bias

    return _emit("fully_connected", (x, weight, bias), out, backward)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax of an ``N x K`` tensor."""

    if x.ndim != 2:
        raise DimensionError(f"softmax expects an N x K tensor, got shape {x.shape}")
    shifted = np.exp(x.data - x.data.max(axis=1, keepdims=True))
    out = shifted / shifted.sum(axis=1, keepdims=True)

    def backward(grad: np.ndarray):
        return (out * (grad - (grad * out).sum(axis=1, keepdims=True)),)

    return _emit("softmax", (x,), out, backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of ``N x K`` logits against integer labels."""

    if logits.ndim != 2:
        raise DimensionError(f"Logits must be N x K, got shape {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"Expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"Labels must lie in [0, {k}), got range {labels.min()}..{labels.max()}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(n), labels].mean()

    def backward(grad: np.ndarray):
        d_logits = np.exp(log_probs)
        d_logits[np.arange(n), labels] -= 1.0
        return (d_logits * (grad / n),)

    return _emit("softmax_cross_entropy", (logits,), np.asarray(loss), backward)


def scale_channels(x: Tensor, alpha: Tensor, counter: MaddCounter | None = None) -> Tensor:
    """Multiply each row of an ``N x C`` tensor by the matching ``N x 1`` scalar."""

    if x.ndim != 2 or alpha.shape != (x.shape[0], 1):
        raise DimensionError(f"Cannot scale {x.shape} by {alpha.shape}")
    if counter is not None:
        counter.add("scale", x.data.size)

    def backward(grad: np.ndarray):
        return grad * alpha.data, (grad * x.data).sum(axis=1, keepdims=True)

    return _emit("scale_channels", (x, alpha), x.data * alpha.data, backward)


# Channel plumbing


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along axis 1 (channels for NCHW, features for N x D)."""

    if not xs:
        raise DimensionError("concat_channels needs at least one tensor")
    reference = xs[0].shape
    for x in xs[1:]:
        if x.ndim != len(reference) or x.shape[0] != reference[0] or x.shape[2:] != reference[2:]:
            raise DimensionError(f"Cannot concatenate {reference} with {x.shape}")
    widths = [x.shape[1] for x in xs]
    bounds = np.cumsum(widths)[:-1]
    out = np.concatenate([x.data for x in xs], axis=1)

    def backward(grad: np.ndarray):
        return tuple(np.split(grad, bounds, axis=1))

    return _emit("concat", tuple(xs), out, backward)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[1]:
        raise DimensionError(f"Channel slice {start}:{stop} outside {x.shape[1]} channels")

    def backward(grad: np.ndarray):
        full = np.zeros_like(x.data)
        full[:, start:stop] = grad
        return (full,)

    return _emit("slice", (x,), x.data[:, start:stop].copy(), backward)


def split_channels(x: Tensor, groups: int) -> list[Tensor]:
    """Split along axis 1 into ``groups`` equal, contiguous parts."""

    if groups < 1 or x.shape[1] % groups:
        raise GroupError(f"Cannot split {x.shape[1]} channels into {groups} groups")
    width = x.shape[1] // groups
    return [slice_channels(x, i * width, (i + 1) * width) for i in range(groups)]
