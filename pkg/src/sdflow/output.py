"""
Result files. Every file carries the SHA-256 of the configuration that produced it.
"""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from sdflow.diagnostics import DiagnosticsRecord

logger = logging.getLogger(__name__)

HASH_KEY = "config_sha256"
PathLike = Union[str, Path]


def _plain(value: Any) -> Any:
    """JSON-ready copy: numpy types become Python ones and infinities the string "inf"."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def write_json(path: PathLike, payload: Dict[str, Any], config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {HASH_KEY: config_hash, **_plain(payload)}
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]], config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        f.write(f"# {HASH_KEY}: {config_hash}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    logger.info(f"Wrote {path}")
    return path


def write_trajectory_csv(path: PathLike, record: DiagnosticsRecord, config_hash: str, stride: int = 1) -> Path:
    """Run series with columns t, energy, grad_R_l2sq, area_0.., D, h_max, h_min, dt."""
    return write_csv(path, record.columns(), record.rows(stride), config_hash)


def write_snapshots(directory: PathLike, snapshots: List[Tuple[float, np.ndarray]], config_hash: str) -> List[Path]:
    """One ``{t, h}`` JSON document per snapshot."""
    directory = Path(directory)
    return [write_json(directory / f"snapshot_{i:05d}.json", {"t": t, "h": h}, config_hash)
            for i, (t, h) in enumerate(snapshots)]


def _cell(value: str) -> Any:
    try:
        return float(value)
    except ValueError:
        return value


def read_csv(path: PathLike) -> Tuple[str, List[Dict[str, Any]]]:
    """Config hash and rows of a CSV written by ``write_csv``; numeric cells come back as floats."""
    with Path(path).open(encoding="utf-8") as f:
        first = f.readline().strip()
        config_hash = first.split(":", 1)[1].strip() if first.startswith(f"# {HASH_KEY}") else ""
        rows = [{k: _cell(v) for k, v in row.items()} for row in csv.DictReader(f)]
    return config_hash, rows
