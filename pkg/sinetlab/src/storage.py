"""Run artefact I/O: training history, ablation tables, cost reports and model specs."""

import json
import logging
from pathlib import Path
from typing import Any

import pandas as pd

from sinetlab.src.analyzer import CostReport
from sinetlab.src.arch import ModelSpec
from sinetlab.src.train import History

logger = logging.getLogger(__name__)


def _ensure_dir(out_dir: str | Path) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: Any) -> Path:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def save_frame(df: pd.DataFrame, out_dir: str | Path, stem: str) -> list[Path]:
    """Write ``df`` as ``<stem>.csv`` and ``<stem>.parquet`` under ``out_dir``.

    Args:
        df: Table to persist.
        out_dir: Target directory, created when missing.
        stem: File name without extension.

    Returns:
        list[Path]: The CSV and Parquet paths.
    """

    base = _ensure_dir(out_dir)
    csv_path = base / f"{stem}.csv"
    parquet_path = base / f"{stem}.parquet"
    try:
        df.to_csv(csv_path, index=False)
        df.to_parquet(parquet_path, engine="pyarrow", compression="snappy", index=False)
    except Exception as e:
        logger.error("Failed to write %s tables to %s: %s", stem, base, e)
        raise
    logger.info("Wrote %d rows to %s and %s", len(df), csv_path, parquet_path)
    return [csv_path, parquet_path]


def save_history(history: History, out_dir: str | Path) -> list[Path]:
    """Persist a training history as CSV (epoch, lr, loss, accuracy), Parquet and JSON."""

    paths = save_frame(history.to_frame(), out_dir, "history")
    paths.append(_write_json(Path(out_dir) / "history.json", history.to_dict()))
    return paths


def save_ablation(table: pd.DataFrame, out_dir: str | Path) -> list[Path]:
    paths = save_frame(table, out_dir, "ablation")
    paths.append(_write_json(Path(out_dir) / "ablation.json", table.to_dict(orient="records")))
    return paths


def save_model_spec(spec: ModelSpec, out_dir: str | Path) -> Path:
    return _write_json(_ensure_dir(out_dir) / "model_spec.json", spec.to_dict())


def save_cost_report(report: CostReport, out_dir: str | Path) -> list[Path]:
    """Write the per-layer table as CSV and Parquet plus the full report as JSON."""

    paths = save_frame(report.to_frame(), out_dir, "cost_report")
    paths.append(_write_json(Path(out_dir) / "cost_report.json", report.to_dict()))
    return paths
