"""
Stability phase map over (a, ell).

Each grid cell is classified twice: numerically, by the sign of the
smallest second variation d2_n over n = 1..n_max, and analytically, by
comparing a with a_stable(ell). Cells are independent and run in a
process pool; the caller collects and writes the rows.
"""
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from sdflow.anisotropy import get_anisotropy
from sdflow.config import SimConfig
from sdflow.elasticity import LameMaterial
from sdflow.stability import a_stable, mode_scan

logger = logging.getLogger(__name__)

STABLE = "stable"
UNSTABLE = "unstable"
COLUMNS = ["a", "ell", "a_stable", "d2_min", "mode_min", "numeric", "analytic"]


def parse_range(text: str) -> np.ndarray:
    """``"lo:hi:n"`` -> n evenly spaced values from lo to hi."""
    try:
        lo, hi, n = text.split(":")
        values = np.linspace(float(lo), float(hi), int(n))
    except ValueError as e:
        raise ValueError(f"expected lo:hi:n, got {text!r}") from e
    if values.size < 1 or np.any(values <= 0):
        raise ValueError(f"range {text!r} must hold at least one positive value")
    return values


def default_workers(config: Optional[SimConfig] = None) -> int:
    """Worker count: sweep.workers, else SDFLOW_WORKERS, else the CPU count."""
    if config is not None and config.sweep.workers is not None:
        return config.sweep.workers
    return int(os.environ.get("SDFLOW_WORKERS", os.cpu_count() or 1))


@dataclass(frozen=True)
class SweepCell:
    a: float
    ell: float
    a_stable: float
    d2_min: float
    mode_min: int

    @property
    def numeric(self) -> str:
        return STABLE if self.d2_min > 0 else UNSTABLE

    @property
    def analytic(self) -> str:
        return STABLE if self.a < self.a_stable else UNSTABLE

    def row(self) -> List[Any]:
        threshold = "inf" if math.isinf(self.a_stable) else self.a_stable
        return [self.a, self.ell, threshold, self.d2_min, self.mode_min, self.numeric, self.analytic]


def classify_cell(task: Dict[str, Any]) -> SweepCell:
    """Evaluate one (a, ell) cell; takes a plain dict so it can cross process boundaries."""
    material = LameMaterial(task["mu"], task["lam"])
    model = get_anisotropy(task["anisotropy"])
    threshold = a_stable(task["ell"], material, task["e0"], model)
    n = task["N"]
    d2 = mode_scan(task["a"], task["ell"], task["n_max"], eps=task["eps_rel"] * task["a"],
                   material=material, e0=task["e0"], model=model, n=n,
                   nx=task["nx_factor"] * n, ny=task["ny"], extrapolate=task["extrapolate"])
    i = int(np.argmin(d2))
    return SweepCell(task["a"], task["ell"], threshold, float(d2[i]), i + 1)


def sweep_tasks(config: SimConfig, a_values: Sequence[float], ell_values: Sequence[float]) -> List[Dict[str, Any]]:
    n = config.geometry.N
    common = {
        "mu": config.material.mu,
        "lam": config.material.lam,
        "e0": config.material.e0,
        "anisotropy": config.anisotropy.to_model_dict(),
        "N": n,
        "nx_factor": config.elasticity.nx // n,
        "ny": config.elasticity.ny,
        "n_max": config.stability.n_max,
        "eps_rel": config.stability.eps_rel,
        "extrapolate": config.stability.extrapolate,
    }
    return [{**common, "a": float(a), "ell": float(ell)} for ell in ell_values for a in a_values]


def run_sweep(config: SimConfig, a_values: Sequence[float], ell_values: Sequence[float],
              workers: Optional[int] = None) -> List[SweepCell]:
    """
    Classify every (a, ell) pair.

    Returns:
        Cells ordered by ell, then a
    """
    tasks = sweep_tasks(config, a_values, ell_values)
    workers = workers or default_workers(config)
    logger.info(f"Sweeping {len(tasks)} cells with {workers} workers")
    if workers == 1:
        return [classify_cell(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(classify_cell, tasks))


def boundary_mismatch(cells: Sequence[SweepCell]) -> int:
    """Number of cells whose numeric and analytic classifications disagree."""
    return sum(cell.numeric != cell.analytic for cell in cells)
