"""SGD-with-momentum training, learning-rate schedules, synthetic data and ablations."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Literal

import numpy as np
import pandas as pd

from sinetlab.src.analyzer import analyze
from sinetlab.src.arch import ModelSpec, ablation_variants
from sinetlab.src.network import INPUT_CHANNELS, SINet
from sinetlab.src.tensor import DimensionError, Mode, Tape, Tensor, softmax_cross_entropy

logger = logging.getLogger(__name__)

Schedule = Literal["exponential", "step"]


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser and schedule settings.

    ``exponential`` multiplies the learning rate by ``decay_rate`` every epoch; ``step``
    divides it by ``step_factor`` every ``step_every`` epochs.
    """

    lr0: float = 0.02
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 30
    schedule: Schedule = "exponential"
    decay_rate: float = 0.98
    step_factor: float = 10.0
    step_every: int = 80
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr0 <= 0:
            raise ValueError(f"Initial learning rate must be positive, got {self.lr0}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"Momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"Batch size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"Epoch count must be non-negative, got {self.epochs}")
        if self.schedule not in ("exponential", "step"):
            raise ValueError(f"Unknown schedule {self.schedule!r}; use 'exponential' or 'step'")
        if self.decay_rate <= 0 or self.step_factor <= 0 or self.step_every < 1:
            raise ValueError("Schedule parameters must be positive")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


TRAIN_PRESETS: dict[str, TrainConfig] = {
    "imagenet": TrainConfig(lr0=0.045, momentum=0.9, batch_size=256, epochs=150),
    "cifar": TrainConfig(
        lr0=0.01, momentum=0.9, batch_size=128, epochs=150, schedule="step", step_every=80
    ),
    "desk": TrainConfig(),
}


@dataclass(frozen=True)
class DatasetDescriptor:
    """Recipe for a reproducible synthetic dataset of Gaussian blobs in channel space."""

    kind: str = "blobs"
    classes: int = 3
    samples_per_class: int = 40
    channels: int = INPUT_CHANNELS
    size: int = 64
    separation: float = 2.0
    noise: float = 0.5
    pixel_noise: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind != "blobs":
            raise ValueError(f"Unknown dataset kind {self.kind!r}; only 'blobs' is supported")
        if self.classes < 2 or self.samples_per_class < 1:
            raise ValueError("A dataset needs at least two classes and one sample per class")
        if self.channels < 1 or self.size < 1:
            raise ValueError(f"Invalid sample shape {self.channels}x{self.size}x{self.size}")
        if self.noise < 0 or self.pixel_noise < 0:
            raise ValueError("Noise levels must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class Dataset:
    samples: np.ndarray
    labels: np.ndarray
    descriptor: DatasetDescriptor

    def __post_init__(self) -> None:
        if self.samples.ndim != 4 or self.labels.shape != (self.samples.shape[0],):
            raise DimensionError(
                f"Samples must be N x C x H x W with N labels, got {self.samples.shape} "
                f"and {self.labels.shape}"
            )

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def classes(self) -> int:
        return self.descriptor.classes


def make_dataset(descriptor: DatasetDescriptor) -> Dataset:
    """Draw blobs: each class has a centre in channel space, broadcast over the image.

    Every sample adds a per-channel offset with std ``noise`` and per-pixel noise with std
    ``pixel_noise``. The first ``channels`` centres lie on the coordinate axes.
    """

    rng = np.random.default_rng(descriptor.seed)
    c, size = descriptor.channels, descriptor.size
    centres = np.zeros((descriptor.classes, c))
    for k in range(descriptor.classes):
        if k < c:
            centres[k, k] = 1.0
        else:
            direction = rng.standard_normal(c)
            centres[k] = direction / np.linalg.norm(direction)
    centres *= descriptor.separation

    labels = np.repeat(np.arange(descriptor.classes), descriptor.samples_per_class)
    labels = labels[rng.permutation(labels.size)]
    offsets = centres[labels] + descriptor.noise * rng.standard_normal((labels.size, c))
    samples = offsets[:, :, None, None] + descriptor.pixel_noise * rng.standard_normal(
        (labels.size, c, size, size)
    )
    logger.info(
        "Generated %d blob samples (%d classes, %dx%dx%d)",
        labels.size,
        descriptor.classes,
        c,
        size,
        size,
    )
    return Dataset(samples=samples, labels=labels, descriptor=descriptor)


def linear_oracle_accuracy(data: Dataset) -> float:
    """Training accuracy of a least-squares one-hot linear classifier on channel means."""

    features = data.samples.mean(axis=(2, 3))
    design = np.hstack([features, np.ones((len(data), 1))])
    targets = np.eye(data.classes)[data.labels]
    weights, *_ = np.linalg.lstsq(design, targets, rcond=None)
    predictions = (design @ weights).argmax(axis=1)
    return float((predictions == data.labels).mean())


def sgd_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    velocity: list[np.ndarray],
    lr: float,
    momentum: float,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Classical momentum update, in place: ``v = momentum * v + g``; ``p -= lr * v``."""

    if not len(params) == len(grads) == len(velocity):
        raise ValueError(
            f"Got {len(params)} parameters, {len(grads)} gradients, {len(velocity)} velocities"
        )
    for p, g, v in zip(params, grads, velocity, strict=True):
        if not p.shape == g.shape == v.shape:
            raise DimensionError(f"Shape mismatch in sgd_step: {p.shape}, {g.shape}, {v.shape}")
        v *= momentum
        v += g
        p -= lr * v
    return params, velocity


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Learning rate used during (0-based) ``epoch``."""

    if epoch < 0:
        raise ValueError(f"Epoch must be non-negative, got {epoch}")
    if cfg.schedule == "exponential":
        return cfg.lr0 * cfg.decay_rate**epoch
    return cfg.lr0 / cfg.step_factor ** (epoch // cfg.step_every)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    accuracy: float


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy if self.records else float("nan")

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss if self.records else float("nan")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [asdict(record) for record in self.records],
            columns=["epoch", "lr", "loss", "accuracy"],
        )

    def to_dict(self) -> dict[str, Any]:
        return {"epochs": [asdict(record) for record in self.records]}


@dataclass(frozen=True)
class Evaluation:
    loss: float
    accuracy: float


def _check_compatible(model: SINet, data: Dataset) -> None:
    spec = model.spec
    expected = (INPUT_CHANNELS, spec.input, spec.input)
    if data.samples.shape[1:] != expected:
        raise DimensionError(f"Model expects samples of shape {expected}, got {data.samples.shape}")
    if data.classes != spec.classes or data.labels.max() >= spec.classes:
        raise ValueError(f"Model has {spec.classes} classes but the dataset has {data.classes}")


def evaluate(
    model: SINet, data: Dataset, batch_size: int = 64, mode: Mode = "eval"
) -> Evaluation:
    """Mean loss and accuracy of ``model`` on ``data`` without updating parameters."""

    _check_compatible(model, data)
    total_loss, correct = 0.0, 0
    for start in range(0, len(data), batch_size):
        x = data.samples[start : start + batch_size]
        y = data.labels[start : start + batch_size]
        logits = model.logits(Tensor(x), mode=mode)
        total_loss += softmax_cross_entropy(logits, y).item() * len(y)
        correct += int((logits.data.argmax(axis=1) == y).sum())
    return Evaluation(loss=total_loss / len(data), accuracy=correct / len(data))


def fit(model: SINet, data: Dataset, cfg: TrainConfig) -> History:
    """Train ``model`` in place; accuracy is measured on the training batches of each epoch."""

    _check_compatible(model, data)
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    velocity = [np.zeros_like(p.data) for p in params]
    history = History()
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(len(data))
        total_loss, correct = 0.0, 0
        for start in range(0, len(data), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            labels = data.labels[batch]
            tape = Tape()
            tape.watch(*params)
            logits = model.logits(Tensor(data.samples[batch]), mode="train")
            loss = softmax_cross_entropy(logits, labels)
            tape.backward(loss)
            sgd_step([p.data for p in params], [p.grad for p in params], velocity, lr, cfg.momentum)
            total_loss += loss.item() * len(batch)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
        record = EpochRecord(
            epoch=epoch, lr=lr, loss=total_loss / len(data), accuracy=correct / len(data)
        )
        history.records.append(record)
        logger.info(
            "epoch %d lr=%.5f loss=%.4f accuracy=%.3f", epoch, lr, record.loss, record.accuracy
        )
    return history


def train(
    spec: ModelSpec, data: Dataset, cfg: TrainConfig, model: SINet | None = None
) -> History:
    """Build ``spec`` (seeded by ``cfg.seed``) unless a model is given, and fit it."""

    if data.classes != spec.classes:
        raise ValueError(f"Spec has {spec.classes} classes but the dataset has {data.classes}")
    if model is None:
        model = SINet.from_spec(spec, seed=cfg.seed)
    return fit(model, data, cfg)


ABLATION_COLUMNS = ["variant", "G", "EX", "attention", "params", "madds", "accuracy"]


def run_ablation(base: ModelSpec, data: Dataset, cfg: TrainConfig) -> pd.DataFrame:
    """Train every ablation variant of ``base`` and tabulate its cost and final accuracy."""

    rows = []
    for name, spec in ablation_variants(base).items():
        totals = analyze(spec).totals
        history = train(spec, data, cfg)
        rows.append(
            {
                "variant": name,
                "G": spec.groups,
                "EX": "Yes" if spec.exchange else "No",
                "attention": "Yes" if spec.attention else "No",
                "params": totals.params,
                "madds": totals.madds,
                "accuracy": history.final_accuracy,
            }
        )
        logger.info("Ablation %s: accuracy %.3f", name, history.final_accuracy)
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)
