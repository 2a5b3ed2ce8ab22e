"""Configuration loading for model specs, training runs and synthetic datasets."""

import logging
import os
from dataclasses import fields, replace
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv

from sinetlab.src.arch import ModelSpec, SpecError
from sinetlab.src.train import TRAIN_PRESETS, DatasetDescriptor, TrainConfig

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "SINET_SEED"
DATASET_PRESETS: dict[str, DatasetDescriptor] = {"blobs": DatasetDescriptor()}


class ConfigError(ValueError):
    """Raised for malformed configuration or descriptor files."""


def _normalize_path(path_value: str | os.PathLike[str]) -> Path:
    """Return an absolute path for the provided string.

    Args:
        path_value: Relative or absolute path value provided on the command line.

    Returns:
        Path: Absolute version of ``path_value``.
    """

    path = Path(path_value).expanduser()
    if path.is_absolute():
        return path.resolve()
    return (Path.cwd() / path).resolve()


def _load_mapping(path_value: str | os.PathLike[str]) -> tuple[Path, dict[str, Any]]:
    """Read a YAML (or JSON, a YAML subset) file that must contain a mapping.

    Raises:
        FileNotFoundError: If the file does not exist.
        ConfigError: If the file cannot be parsed or is not a mapping.
    """

    resolved_path = _normalize_path(path_value)
    if not resolved_path.exists():
        raise FileNotFoundError(f"Configuration file not found: {resolved_path}")

    with resolved_path.open("r", encoding="utf-8") as handle:
        try:
            raw_data = yaml.safe_load(handle) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Failed to parse {resolved_path}: {e}") from e

    if not isinstance(raw_data, dict):
        raise ConfigError(
            f"{resolved_path} must contain a mapping, got {type(raw_data).__name__}"
        )
    return resolved_path, raw_data


def _apply_overrides(base: Any, overrides: dict[str, Any], source: Path) -> Any:
    allowed = {f.name for f in fields(base)}
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise ConfigError(f"Unknown keys in {source}: {', '.join(unknown)}")
    try:
        return replace(base, **overrides)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid values in {source}: {e}") from e


def load_train_config(value: str | os.PathLike[str] = "desk") -> TrainConfig:
    """Load a training configuration from a preset name or a YAML/JSON file.

    A file may name a ``preset`` to start from; its remaining keys override that preset.

    Args:
        value: ``imagenet``, ``cifar``, ``desk`` or a path to a config file.

    Returns:
        TrainConfig: The validated configuration.
    """

    if str(value) in TRAIN_PRESETS:
        logger.info("Using training preset %s", value)
        return TRAIN_PRESETS[str(value)]

    path, data = _load_mapping(value)
    preset = str(data.pop("preset", "desk"))
    if preset not in TRAIN_PRESETS:
        raise ConfigError(
            f"Unknown training preset {preset!r} in {path}; choose from {sorted(TRAIN_PRESETS)}"
        )
    config = _apply_overrides(TRAIN_PRESETS[preset], data, path)
    logger.info("Loaded training config from %s (preset %s)", path, preset)
    return config


def load_dataset_descriptor(value: str | os.PathLike[str] = "blobs") -> DatasetDescriptor:
    """Load a dataset descriptor from a preset name or a YAML/JSON file."""

    if str(value) in DATASET_PRESETS:
        return DATASET_PRESETS[str(value)]
    path, data = _load_mapping(value)
    descriptor = _apply_overrides(DatasetDescriptor(), data, path)
    logger.info("Loaded dataset descriptor from %s", path)
    return descriptor


def load_model_spec(path_value: str | os.PathLike[str]) -> ModelSpec:
    """Load a ModelSpec from its JSON (or YAML) representation."""

    path, data = _load_mapping(path_value)
    try:
        spec = ModelSpec.from_dict(data)
    except SpecError as e:
        raise SpecError(f"Invalid model spec {path}: {e}") from e
    logger.info("Loaded model spec from %s", path)
    return spec


def resolve_seed(default: int) -> int:
    """Return ``SINET_SEED`` from the environment (or ``.env``) if set, else ``default``.

    Raises:
        ConfigError: If ``SINET_SEED`` is not an integer.
    """

    load_dotenv()
    raw = os.getenv(SEED_ENV_VAR)
    if raw is None or not raw.strip():
        return default
    try:
        seed = int(raw)
    except ValueError as e:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from e
    logger.info("Seed overridden by %s=%d", SEED_ENV_VAR, seed)
    return seed
