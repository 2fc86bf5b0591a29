"""
Reference curves and normal graphs over them.

A boundary is written as ``x + h(x) nu_G(x)`` over a reference curve
``Gamma_G`` sampled uniformly in its parameter (arclength for closed
curves, ``x1`` for periodic graphs). Every field lives on the reference
grid, and parameter derivatives are spectral.
"""
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from sdflow import spectral
from sdflow.errors import DegenerateGeometryError, InadmissibleHeightError

logger = logging.getLogger(__name__)

CLOSED = "closed"
GRAPH = "graph"


def rotate(v: np.ndarray) -> np.ndarray:
    """Counterclockwise rotation by pi/2 of an (..., 2) array."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True, eq=False)
class ReferenceCurve:
    """
    Reference geometry Gamma_G.

    Attributes:
        mode (str): ``"closed"`` or ``"graph"``
        period (float): Total length L (closed) or period ell (graph)
        points (np.ndarray): (N, 2) sample positions
        normals (np.ndarray): (N, 2) outward unit normals nu_G
        curvature (np.ndarray): k_G at the samples
        eta_bar (float): Tubular radius; admissible heights satisfy max|h| < eta_bar/2
        area (float): Area enclosed by the reference (0 for graphs)
    """

    mode: str
    period: float
    points: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray
    eta_bar: float
    area: float = 0.0

    def __post_init__(self):
        n = len(np.atleast_1d(self.curvature))
        if n < 16 or n % 2:
            raise ValueError(f"reference grid needs an even number of samples >= 16, got {n}")
        if self.mode not in (CLOSED, GRAPH):
            raise ValueError(f"unknown reference mode {self.mode!r}")
        if not np.all(np.isfinite(self.curvature)):
            raise ValueError("reference curvature must be finite")
        if self.mode == CLOSED:
            kmax = float(np.max(np.abs(self.curvature)))
            if not self.eta_bar > 0:
                raise ValueError("eta_bar must be positive")
            if kmax > 0 and self.eta_bar > 1.0 / kmax * (1 + 1e-12):
                raise ValueError(f"eta_bar={self.eta_bar} exceeds 1/max|k_G|={1.0 / kmax}")
        for name in ("points", "normals", "curvature"):
            frozen = np.array(getattr(self, name), dtype=float)
            frozen.setflags(write=False)
            object.__setattr__(self, name, frozen)

    @property
    def n(self) -> int:
        return len(self.curvature)

    @property
    def spacing(self) -> float:
        return self.period / self.n

    @property
    def grid(self) -> np.ndarray:
        """Parameter values of the samples."""
        return np.arange(self.n) * self.spacing

    @property
    def tangents(self) -> np.ndarray:
        return rotate(self.normals)

    @property
    def orientation(self) -> float:
        """+1 when the parameter runs along tau_G = R nu_G, -1 when against it (graphs)."""
        return 1.0 if self.mode == CLOSED else -1.0

    @cached_property
    def curvature_derivative(self) -> np.ndarray:
        """d k_G / d sigma along tau_G."""
        if self.mode == GRAPH:
            return np.zeros(self.n)
        return self.orientation * spectral.derivative(self.curvature, self.period)

    @classmethod
    def circle(cls, radius: float = 1.0, n: int = 128, eta_bar: Optional[float] = None) -> "ReferenceCurve":
        """Circle of the given radius, sampled counterclockwise from angle 0."""
        theta = 2.0 * np.pi * np.arange(n) / n
        normals = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        curvature = np.full(n, 1.0 / radius)
        if eta_bar is None:
            eta_bar = 0.9 * radius
        return cls(CLOSED, 2.0 * np.pi * radius, radius * normals, normals, curvature,
                   float(eta_bar), float(np.pi * radius ** 2))

    @classmethod
    def periodic_graph(cls, ell: float, n: int = 128) -> "ReferenceCurve":
        """Flat baseline x2 = 0 over one period [0, ell)."""
        x = ell * np.arange(n) / n
        points = np.stack([x, np.zeros(n)], axis=-1)
        normals = np.tile([0.0, 1.0], (n, 1))
        return cls(GRAPH, float(ell), points, normals, np.zeros(n), float("inf"), 0.0)

    @classmethod
    def from_points(cls, s, normals, curvature, eta_bar: Optional[float] = None,
                    positions=None) -> "ReferenceCurve":
        """
        Closed reference from arclength samples.

        Args:
            s (array_like): Uniformly spaced arclength positions
            normals (array_like): (N, 2) outward normals
            curvature (array_like): k_G at the samples
            eta_bar (Optional[float]): Tubular radius, default 0.9/max|k_G|
            positions (Optional[array_like]): (N, 2) points; rebuilt from the tangents when omitted

        Returns:
            ReferenceCurve in closed mode
        """
        s = np.asarray(s, dtype=float)
        normals = np.asarray(normals, dtype=float)
        normals = normals / np.linalg.norm(normals, axis=-1, keepdims=True)
        curvature = np.asarray(curvature, dtype=float)
        n = s.size
        steps = np.diff(s)
        ds = float(np.mean(steps))
        if np.max(np.abs(steps - ds)) > 1e-9 * max(ds, 1.0):
            raise ValueError("reference samples must be uniformly spaced in arclength")
        period = ds * n
        tangents = rotate(normals)
        if positions is None:
            positions = np.stack([spectral.antiderivative(tangents[:, 0], period),
                                  spectral.antiderivative(tangents[:, 1], period)], axis=-1)
        positions = np.asarray(positions, dtype=float)
        cross = positions[:, 0] * tangents[:, 1] - positions[:, 1] * tangents[:, 0]
        area = 0.5 * spectral.integrate(cross, period)
        if eta_bar is None:
            eta_bar = 0.9 / float(np.max(np.abs(curvature)))
        return cls(CLOSED, period, positions, normals, curvature, float(eta_bar), float(area))


def load_reference_curve(source: Union[str, Path, Dict[str, Any]]) -> ReferenceCurve:
    """
    Build a reference curve from its JSON description.

    Accepted documents::

        {"mode": "graph", "N": 128, "ell": 6.283}
        {"mode": "closed", "N": 128, "radius": 1.0, "eta_bar": 0.9}
        {"mode": "closed", "N": 4, "points": [{"s": 0.0, "nu": [1, 0], "k": 1.0}, ...]}

    Args:
        source: Path to a JSON file or an already decoded dict

    Returns:
        ReferenceCurve
    """
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        data = dict(source)
    mode = data.get("mode")
    if mode == GRAPH:
        return ReferenceCurve.periodic_graph(float(data["ell"]), int(data["N"]))
    if mode != CLOSED:
        raise ValueError(f"unknown reference mode {mode!r}")
    if "points" not in data:
        return ReferenceCurve.circle(float(data.get("radius", 1.0)), int(data["N"]), data.get("eta_bar"))
    points = data["points"]
    if "N" in data and int(data["N"]) != len(points):
        raise ValueError(f"N={data['N']} but {len(points)} points given")
    positions = None
    if all("x" in p for p in points):
        positions = [p["x"] for p in points]
    return ReferenceCurve.from_points(
        [p["s"] for p in points],
        [p["nu"] for p in points],
        [p["k"] for p in points],
        eta_bar=data.get("eta_bar"),
        positions=positions,
    )


@dataclass(frozen=True, eq=False)
class HeightField:
    """
    Heights h_i of the normal graph at the reference samples.

    Attributes:
        curve (ReferenceCurve): Reference the heights are measured over
        values (np.ndarray): h at the grid nodes (length units)
    """

    curve: ReferenceCurve
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.curve.n,):
            raise ValueError(f"expected {self.curve.n} heights, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, curve: ReferenceCurve, value: float) -> "HeightField":
        return cls(curve, np.full(curve.n, float(value)))

    def check_admissible(self) -> None:
        """
        Raise ``InadmissibleHeightError`` unless the heights describe an admissible set:
        max|h| < eta_bar/2 over a closed reference, h > 0 for a film over a graph.
        """
        h = self.values
        if not np.all(np.isfinite(h)):
            raise InadmissibleHeightError("non-finite heights")
        if self.curve.mode == CLOSED:
            hmax = float(np.max(np.abs(h)))
            if hmax >= self.curve.eta_bar / 2:
                raise InadmissibleHeightError(
                    f"max|h|={hmax:.6g} reached eta_bar/2={self.curve.eta_bar / 2:.6g}")
        elif float(np.min(h)) <= 0.0:
            raise InadmissibleHeightError(f"film touches the substrate: min h={float(np.min(h)):.6g}")


def _heights(h) -> np.ndarray:
    return np.asarray(getattr(h, "values", h), dtype=float)


def _stretch(curve: ReferenceCurve, h: np.ndarray) -> np.ndarray:
    stretch = 1.0 + h * curve.curvature
    if np.any(stretch <= 0.0):
        i = int(np.argmin(stretch))
        raise DegenerateGeometryError(f"1 + h k_G = {stretch[i]:.3g} <= 0 at node {i}")
    return stretch


def jacobian(curve: ReferenceCurve, h) -> np.ndarray:
    """
    Tangential Jacobian J = sqrt((1 + h k_G)^2 + (d_sigma h)^2) of x -> x + h nu_G.

    Args:
        curve (ReferenceCurve): Reference geometry
        h (HeightField | array_like): Heights on the reference grid

    Returns:
        J at the grid nodes
    """
    h = _heights(h)
    stretch = _stretch(curve, h)
    dh = spectral.derivative(h, curve.period)
    return np.sqrt(stretch ** 2 + dh ** 2)


def frame(curve: ReferenceCurve, h) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit tangent and outward normal of the graph, pulled back to the reference grid.

    Returns:
        (tau_F, nu_F) as (N, 2) arrays with tau_F = R nu_F
    """
    h = _heights(h)
    stretch = _stretch(curve, h)
    dh = curve.orientation * spectral.derivative(h, curve.period)
    jac = np.sqrt(stretch ** 2 + dh ** 2)[:, None]
    tau_g, nu_g = curve.tangents, curve.normals
    nu = (stretch[:, None] * nu_g - dh[:, None] * tau_g) / jac
    nu /= np.linalg.norm(nu, axis=-1, keepdims=True)
    return rotate(nu), nu


def curvature(curve: ReferenceCurve, h) -> np.ndarray:
    """
    Curvature k_F of the graph boundary at the points x + h(x) nu_G(x).

    Positive for convex sets with the outward normal; for a film over a
    graph it linearizes to -h''.
    """
    h = _heights(h)
    k = curve.curvature
    stretch = _stretch(curve, h)
    dh = curve.orientation * spectral.derivative(h, curve.period)
    d2h = spectral.derivative(h, curve.period, order=2)
    jac = np.sqrt(stretch ** 2 + dh ** 2)
    numerator = (-d2h * stretch + 2.0 * dh ** 2 * k + stretch ** 2 * k
                 + h * dh * curve.curvature_derivative)
    return numerator / jac ** 3


def tangential_derivative(f, curve: ReferenceCurve, h, order: int = 1) -> np.ndarray:
    """
    Apply d_sigma = (1/J) d_param ``order`` times (order in 1..3).

    The sign follows tau_F, so for graphs odd orders carry the reversed
    parameter orientation.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    jac = jacobian(curve, h)
    out = np.asarray(f, dtype=float)
    for _ in range(order):
        out = curve.orientation * spectral.derivative(out, curve.period) / jac
    return out


def perimeter(curve: ReferenceCurve, h) -> float:
    """Length of the graph boundary, P(F)."""
    return spectral.integrate(jacobian(curve, h), curve.period)


def enclosed_areas(curve: ReferenceCurve, h) -> np.ndarray:
    """
    Conserved areas, one per boundary component.

    Closed mode adds the exact tubular layer integral of (1 + s k_G) to the
    reference area; graph mode integrates the film thickness.
    """
    h = _heights(h)
    if curve.mode == GRAPH:
        return np.array([spectral.integrate(h, curve.period)])
    layer = h + 0.5 * curve.curvature * h ** 2
    return np.array([curve.area + spectral.integrate(layer, curve.period)])


def anchored_distance(curve: ReferenceCurve, h, baseline: float = 0.0) -> float:
    """
    D(F): integral over the symmetric difference of the distance to the reference.

    Args:
        curve (ReferenceCurve): Reference geometry
        h (HeightField | array_like): Heights
        baseline (float): Height of the anchoring set (graph mode: the flat film h = a)

    Returns:
        D >= 0, zero iff h equals the baseline
    """
    d = _heights(h) - baseline
    integrand = 0.5 * d ** 2 + curve.curvature * d ** 3 / 3.0
    return spectral.integrate(integrand, curve.period)
