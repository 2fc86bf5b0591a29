"""
Surface energy densities phi and the coefficient g(nu) = D^2 phi(nu) tau . tau.

Models are positively 1-homogeneous functions of the normal. Vectors are
passed as arrays of shape (..., 2); results broadcast over the leading axes.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence

import numpy as np

from sdflow.errors import EllipticityError
from sdflow.geometry import rotate

logger = logging.getLogger(__name__)

DEFAULT_C0 = 1e-3
SAMPLE_DIRECTIONS = 720


def unit_circle(samples: int = SAMPLE_DIRECTIONS) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(samples) / samples
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


class AnisotropyModel:
    """
    Base class for surface energy densities.

    Subclasses implement ``phi``, ``gradient`` and ``hessian`` for arbitrary
    nonzero vectors.
    """

    tag = "abstract"

    def __init__(self, c0: float = DEFAULT_C0):
        if not c0 > 0:
            raise ValueError(f"ellipticity floor c0 must be positive, got {c0}")
        self.c0 = float(c0)

    def phi(self, nu) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, nu) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, nu) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> Dict[str, Any]:
        return {"type": self.tag, "c0": self.c0}

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.describe().items() if k != "type")
        return f"{type(self).__name__}({params})"


class IsotropicAnisotropy(AnisotropyModel):
    """phi(nu) = |nu|."""

    tag = "isotropic"

    def phi(self, nu):
        return np.linalg.norm(nu, axis=-1)

    def gradient(self, nu):
        nu = np.asarray(nu, dtype=float)
        return nu / np.linalg.norm(nu, axis=-1, keepdims=True)

    def hessian(self, nu):
        nu = np.asarray(nu, dtype=float)
        r = np.linalg.norm(nu, axis=-1)[..., None, None]
        unit = nu[..., :, None] / r
        eye = np.eye(2)
        return (eye - unit * np.swapaxes(unit, -1, -2)) / r


class EllipticAnisotropy(AnisotropyModel):
    """phi(nu) = sqrt(nu_1^2 + beta^2 nu_2^2)."""

    tag = "elliptic"

    def __init__(self, beta: float, c0: float = DEFAULT_C0):
        super().__init__(c0)
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.beta = float(beta)
        self._metric = np.diag([1.0, self.beta ** 2])

    def phi(self, nu):
        nu = np.asarray(nu, dtype=float)
        return np.sqrt(nu[..., 0] ** 2 + self.beta ** 2 * nu[..., 1] ** 2)

    def gradient(self, nu):
        nu = np.asarray(nu, dtype=float)
        return (nu @ self._metric) / self.phi(nu)[..., None]

    def hessian(self, nu):
        nu = np.asarray(nu, dtype=float)
        grad = self.gradient(nu)
        outer = grad[..., :, None] * grad[..., None, :]
        return (self._metric - outer) / self.phi(nu)[..., None, None]

    def describe(self):
        return {"type": self.tag, "beta": self.beta, "c0": self.c0}


class TabulatedAnisotropy(AnisotropyModel):
    """
    phi sampled at uniformly spaced angles, extended by trigonometric interpolation.

    With phi(theta) := phi(cos theta, sin theta), homogeneity gives
    grad phi(nu) = phi nu + phi' tau and D^2 phi(nu) = (phi + phi'') tau (x) tau
    on the unit circle, so every derivative comes from the interpolant.

    Args:
        theta (Sequence[float]): Uniform angles covering [0, 2*pi)
        phi (Sequence[float]): Energy density at those angles
        c0 (float): Ellipticity floor
    """

    tag = "table"

    def __init__(self, theta: Sequence[float], phi: Sequence[float], c0: float = DEFAULT_C0):
        super().__init__(c0)
        theta = np.asarray(theta, dtype=float)
        values = np.asarray(phi, dtype=float)
        if theta.shape != values.shape or theta.size < 3:
            raise ValueError("theta and phi must have the same length >= 3")
        step = 2.0 * np.pi / theta.size
        if np.max(np.abs(np.diff(theta) - step)) > 1e-9:
            raise ValueError("tabulated angles must be uniformly spaced over [0, 2*pi)")
        if np.any(values <= 0):
            raise ValueError("tabulated phi must be positive")
        self.theta = theta
        self.values = values
        n = theta.size
        coeffs = np.fft.rfft(values) / n
        # Shift so the interpolant is expressed in absolute angle
        modes = np.arange(coeffs.size)
        coeffs = coeffs * np.exp(-1j * modes * theta[0])
        weights = np.full(coeffs.size, 2.0)
        weights[0] = 1.0
        if n % 2 == 0:
            weights[-1] = 1.0
        self._coeffs = coeffs
        self._weights = weights
        self._modes = modes

    def angular(self, angle, order: int = 0) -> np.ndarray:
        """order-th derivative of theta -> phi(cos theta, sin theta)."""
        angle = np.asarray(angle, dtype=float)
        phase = np.exp(1j * np.multiply.outer(angle, self._modes))
        terms = self._weights * self._coeffs * (1j * self._modes) ** order
        return np.real(phase @ terms)

    def _polar(self, nu):
        nu = np.asarray(nu, dtype=float)
        r = np.linalg.norm(nu, axis=-1)
        angle = np.arctan2(nu[..., 1], nu[..., 0])
        return nu, r, angle

    def phi(self, nu):
        _, r, angle = self._polar(nu)
        return r * self.angular(angle)

    def gradient(self, nu):
        nu, r, angle = self._polar(nu)
        unit = nu / r[..., None]
        return self.angular(angle)[..., None] * unit + self.angular(angle, 1)[..., None] * rotate(unit)

    def hessian(self, nu):
        nu, r, angle = self._polar(nu)
        tau = rotate(nu / r[..., None])
        stiffness = (self.angular(angle) + self.angular(angle, 2)) / r
        return stiffness[..., None, None] * tau[..., :, None] * tau[..., None, :]

    def describe(self):
        return {"type": self.tag, "theta": self.theta.tolist(), "phi": self.values.tolist(), "c0": self.c0}


def _stiffness(model: AnisotropyModel, nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu, axis=-1, keepdims=True)
    tau = rotate(nu)
    hess = model.hessian(nu)
    return np.einsum("...i,...ij,...j->...", tau, hess, tau)


def g_of_nu(model: AnisotropyModel, nu) -> np.ndarray:
    """
    g(nu) = D^2 phi(nu) tau . tau with tau = R nu.

    Args:
        model (AnisotropyModel): Surface energy density
        nu (array_like): Unit normal(s), renormalized internally

    Returns:
        g at each normal (a scalar array for a single vector)

    Raises:
        EllipticityError: if g drops below c0/2 anywhere
    """
    g = _stiffness(model, nu)
    low = float(np.min(g))
    if low < model.c0 / 2:
        raise EllipticityError(f"{model!r} has g={low:.3g} below c0/2={model.c0 / 2:.3g}")
    return g


@dataclass(frozen=True)
class EllipticityReport:
    min_g: float
    argmin: tuple
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"min_g": self.min_g, "argmin": list(self.argmin), "passed": self.passed}


def check_ellipticity(model: AnisotropyModel, samples: int = SAMPLE_DIRECTIONS) -> EllipticityReport:
    """Sample g on the unit circle and compare its minimum with c0."""
    directions = unit_circle(samples)
    g = _stiffness(model, directions)
    i = int(np.argmin(g))
    report = EllipticityReport(float(g[i]), tuple(float(c) for c in directions[i]), bool(g[i] >= model.c0))
    if not report.passed:
        logger.warning(f"{model!r} fails ellipticity: min g={report.min_g:.3g} at nu={report.argmin}")
    return report


def homogeneity_residuals(model: AnisotropyModel, samples: int = SAMPLE_DIRECTIONS) -> Dict[str, float]:
    """
    Largest violations of phi(t nu) = t phi(nu) and grad phi(nu) . nu = phi(nu).

    Returns:
        Dict with ``homogeneity`` and ``euler`` residuals
    """
    directions = unit_circle(samples)
    base = model.phi(directions)
    homogeneity = max(float(np.max(np.abs(model.phi(t * directions) - t * base))) for t in (0.5, 2.0, 3.7))
    euler = float(np.max(np.abs(np.sum(model.gradient(directions) * directions, axis=-1) - base)))
    return {"homogeneity": homogeneity, "euler": euler}


def get_anisotropy(config: Dict[str, Any]) -> AnisotropyModel:
    """
    Build an anisotropy model from its config block.

    Args:
        config (Dict[str, Any]): ``{"type": "isotropic"}``, ``{"type": "elliptic", "beta": b}``
            or ``{"type": "table", "theta": [...], "phi": [...]}``, optionally with ``c0``

    Returns:
        AnisotropyModel
    """
    kind = config.get("type", "isotropic")
    c0 = float(config.get("c0", DEFAULT_C0))
    if kind == "isotropic":
        return IsotropicAnisotropy(c0)
    if kind == "elliptic":
        return EllipticAnisotropy(float(config["beta"]), c0)
    if kind == "table":
        return TabulatedAnisotropy(config["theta"], config["phi"], c0)
    raise ValueError(f"unknown anisotropy type {kind!r}")
