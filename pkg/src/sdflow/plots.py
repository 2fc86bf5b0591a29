"""Static SVG figures, rendered with the Agg backend and stamped with the config hash."""
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from sdflow.diagnostics import DiagnosticsRecord  # noqa: E402
from sdflow.stability import grinfeld_K  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _save(fig, path: PathLike, config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # Fixed salt and no date keep the SVG byte-identical across runs
    with matplotlib.rc_context({"svg.hashsalt": config_hash}):
        fig.savefig(path, format="svg", metadata={"Description": f"config_sha256: {config_hash}", "Date": None})
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def plot_waterfall(snapshots: List[Tuple[float, np.ndarray]], period: float, path: PathLike,
                   config_hash: str, max_curves: int = 20) -> Path:
    """h(x, t) profiles, offset upwards with time."""
    fig, ax = plt.subplots(figsize=(7, 5))
    picks = np.unique(np.linspace(0, len(snapshots) - 1, min(max_curves, len(snapshots))).astype(int))
    heights = np.array([snapshots[i][1] for i in picks])
    spread = float(np.max(heights) - np.min(heights)) or 1.0
    offset = spread / max(len(picks), 1)
    for row, i in enumerate(picks):
        t, h = snapshots[i]
        x = period * np.arange(h.size + 1) / h.size
        ax.plot(x, np.append(h, h[0]) + row * offset, lw=0.8, color=plt.cm.viridis(row / max(len(picks) - 1, 1)))
        ax.text(x[-1], h[0] + row * offset, f" t={t:.3g}", fontsize=6, va="center")
    ax.set_xlabel("x")
    ax.set_ylabel("h (offset by time)")
    ax.set_title("Height profiles")
    return _save(fig, path, config_hash)


def plot_energy(record: DiagnosticsRecord, path: PathLike, config_hash: str) -> Path:
    """Free energy and dissipation integral against time."""
    data = record.as_arrays()
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    top.plot(data["t"], data["energy"], lw=1.0)
    top.set_ylabel("J(F_t)")
    bottom.semilogy(data["t"], np.maximum(data["grad_R_l2sq"], 1e-300), lw=1.0)
    bottom.set_ylabel("int (d_s R)^2")
    bottom.set_xlabel("t")
    return _save(fig, path, config_hash)


def plot_grinfeld_K(nu_p: float, path: PathLike, config_hash: str, level: Optional[float] = None,
                    s_max: float = 10.0, samples: int = 200) -> Path:
    """K(s) with the stability level ell*/ell when it is finite."""
    s = np.linspace(0.0, s_max, samples)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(s, grinfeld_K(s, nu_p), lw=1.2, label="K(s)")
    if level is not None and math.isfinite(level):
        ax.axhline(level, color="k", ls="--", lw=0.8, label="ell*/ell")
    ax.set_xlabel("s")
    ax.set_ylabel("K")
    ax.legend()
    return _save(fig, path, config_hash)


def plot_second_variation(a_values: Sequence[float], d2_values: Sequence[float], path: PathLike,
                          config_hash: str, a_stable: Optional[float] = None) -> Path:
    """d2_1 against the film thickness, with the analytic threshold marked."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(a_values, d2_values, "o-", lw=1.0, ms=3)
    ax.axhline(0.0, color="k", lw=0.6)
    if a_stable is not None and math.isfinite(a_stable):
        ax.axvline(a_stable, color="r", ls="--", lw=0.8, label="a_stable")
        ax.legend()
    ax.set_xlabel("a")
    ax.set_ylabel("d2_1")
    return _save(fig, path, config_hash)
