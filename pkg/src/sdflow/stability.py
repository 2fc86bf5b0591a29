"""
Stability of flat films: the Grinfeld threshold and its numerical counterparts.

A flat film h = a of period ell is strictly stable when K(2 pi a / ell) < ell*/ell,
where K is the Grinfeld function and ell* depends on the material, the
mismatch and g(e2). The same threshold is located numerically from the sign
of a finite-difference second variation of the free energy.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from sdflow.anisotropy import AnisotropyModel, IsotropicAnisotropy, g_of_nu
from sdflow.diagnostics import surface_energy
from sdflow.elasticity import FilmSolver, LameMaterial, solve_film
from sdflow.errors import DegenerateFitError, InvalidMaterialError
from sdflow.geometry import HeightField, ReferenceCurve

logger = logging.getLogger(__name__)

K_TOLERANCE = 1e-12
DEFAULT_N_MAX = 8
# Beyond this many terms the maximum is located on the continuous profile of H(x)/x
K_TERMS_CAP = 1 << 16
DEFAULT_EPS_REL = 1e-4


def _validate_poisson(nu_p: float) -> None:
    if not nu_p < 0.5:
        raise ValueError(f"Poisson modulus must be below 1/2, got {nu_p}")


def grinfeld_H(s, nu_p: float):
    """
    H(s) = (s + (3 - 4 nu_p) sinh s cosh s) / (4 (1 - nu_p)^2 + s^2 + (3 - 4 nu_p) sinh^2 s).

    Beyond s = 1 the ratio is evaluated after dividing through by sinh^2 s,
    written with exp(-2 s), so it stays finite and tends to 1.
    """
    _validate_poisson(nu_p)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("H is defined for s >= 0")
    c = 3.0 - 4.0 * nu_p
    base = 4.0 * (1.0 - nu_p) ** 2
    small = np.minimum(s_arr, 1.0)
    direct = (small + c * np.sinh(small) * np.cosh(small)) / (base + small ** 2 + c * np.sinh(small) ** 2)
    large = np.maximum(s_arr, 1.0)
    q = np.exp(-2.0 * large)
    inv_sinh2 = 4.0 * q / (1.0 - q) ** 2
    coth = (1.0 + q) / (1.0 - q)
    asymptotic = (large * inv_sinh2 + c * coth) / ((base + large ** 2) * inv_sinh2 + c)
    out = np.where(s_arr <= 1.0, direct, asymptotic)
    return float(out) if out.ndim == 0 else out


def _grinfeld_K_tail(s: float, nu_p: float, first: int, last: int) -> float:
    """Max of H(n s)/n over first <= n <= last when the grid n s is too fine to enumerate."""
    x = np.linspace(first * s, last * s, 4097)
    i = int(np.argmax(grinfeld_H(x, nu_p) / x))
    bounds = (x[max(i - 1, 0)], x[min(i + 1, x.size - 1)])
    peak = minimize_scalar(lambda v: -grinfeld_H(v, nu_p) / v, bounds=bounds, method="bounded",
                           options={"xatol": s})
    centre = int(peak.x / s)
    n = np.arange(max(first, centre - 2), min(last, centre + 2) + 1, dtype=float)
    return float(np.max(grinfeld_H(n * s, nu_p) / n))


def _grinfeld_K_scalar(s: float, nu_p: float) -> float:
    if s == 0.0:
        return 0.0
    best = 0.0
    start = 1
    chunk = 256
    # H <= 1 bounds every term past n by 1/n
    while best == 0.0 or start <= 1.0 / (best * (1.0 - K_TOLERANCE)):
        if start > K_TERMS_CAP:
            last = int(1.0 / (best * (1.0 - K_TOLERANCE)))
            return max(best, _grinfeld_K_tail(s, nu_p, start, last))
        n = np.arange(start, start + chunk, dtype=float)
        best = max(best, float(np.max(grinfeld_H(n * s, nu_p) / n)))
        start += chunk
        chunk *= 2
    return best


def grinfeld_K(s, nu_p: float):
    """
    Grinfeld function K(s) = max over n >= 1 of H(n s)/n.

    K(0) = 0, K is strictly increasing and K(s) -> 1 as s -> infinity.
    """
    _validate_poisson(nu_p)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("K is defined for s >= 0")
    if s_arr.ndim == 0:
        return _grinfeld_K_scalar(float(s_arr), nu_p)
    return np.array([_grinfeld_K_scalar(float(v), nu_p) for v in s_arr.ravel()]).reshape(s_arr.shape)


def _check_material(material: LameMaterial) -> None:
    if material.mu * (material.mu + material.lam) <= 0:
        raise InvalidMaterialError(f"mu (mu + lambda) must be positive, got mu={material.mu}, lambda={material.lam}")


def critical_length(material: LameMaterial, e0: float, model: Optional[AnisotropyModel] = None) -> float:
    """ell* = (pi/4) (2 mu + lambda) g(e2) / (e0^2 mu (mu + lambda)); infinite without mismatch."""
    _check_material(material)
    if e0 == 0.0:
        return math.inf
    g = float(g_of_nu(model or IsotropicAnisotropy(), np.array([0.0, 1.0])))
    mu, lam = material.mu, material.lam
    return math.pi / 4.0 * (2.0 * mu + lam) * g / (e0 ** 2 * mu * (mu + lam))


def a_stable(ell: float, material: LameMaterial, e0: float, model: Optional[AnisotropyModel] = None) -> float:
    """
    Largest thickness for which the flat film of period ell is strictly stable.

    Returns +inf when e0 = 0 or ell <= ell*; otherwise solves
    K(2 pi a / ell) = ell*/ell by bisection to 1e-12 relative.

    Raises:
        InvalidMaterialError: if mu (mu + lambda) <= 0
    """
    if not ell > 0:
        raise ValueError(f"period must be positive, got {ell}")
    ell_star = critical_length(material, e0, model)
    if ell <= ell_star:
        return math.inf
    target = ell_star / ell
    nu_p = material.poisson
    lo, hi = 0.0, 1.0
    while grinfeld_K(hi, nu_p) < target:
        lo, hi = hi, 2.0 * hi
    while hi - lo > K_TOLERANCE * hi:
        mid = 0.5 * (lo + hi)
        if grinfeld_K(mid, nu_p) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) * ell / (2.0 * math.pi)


def free_energy(h: HeightField, material: LameMaterial, e0: float, model: AnisotropyModel,
                nx: Optional[int] = None, ny: int = 32, solver: Optional[FilmSolver] = None) -> float:
    """Surface plus elastic energy of a film profile; ``solver`` overrides nx and ny."""
    surface = surface_energy(h.curve, h, model)
    if solver is not None:
        return surface + solver.solve(h).energy
    return surface + solve_film(h, material, e0, nx, ny).energy


def _mode_profile(curve: ReferenceCurve, a: float, mode: int, eps: float) -> HeightField:
    values = a + eps * np.cos(2.0 * np.pi * mode * curve.grid / curve.period)
    values = values + (a - np.mean(values))
    return HeightField(curve, values)


def second_variation_fd(a: float, ell: float, mode: int, eps: Optional[float] = None,
                        material: Optional[LameMaterial] = None, e0: float = 0.0,
                        model: Optional[AnisotropyModel] = None, n: int = 128,
                        nx: Optional[int] = None, ny: int = 32, extrapolate: bool = True) -> float:
    """
    d2_n = (J(h_eps) + J(h_-eps) - 2 J(h_0)) / eps^2 for h_eps = a + eps cos(2 pi n x / ell).

    Args:
        a (float): Film thickness
        ell (float): Period
        mode (int): Perturbation mode n (1 <= n < N/2)
        eps (Optional[float]): Amplitude, default 1e-4 a
        material (Optional[LameMaterial]): Lame coefficients (default mu = lambda = 1)
        e0 (float): Mismatch strain
        model (Optional[AnisotropyModel]): Surface energy density (default isotropic)
        n (int): Height grid size N
        nx, ny: FEM resolution
        extrapolate (bool): Combine eps and eps/2 by Richardson extrapolation

    Returns:
        Finite-difference second variation along the mode
    """
    if not a > 0:
        raise ValueError(f"thickness must be positive, got {a}")
    if not 1 <= mode < n // 2:
        raise ValueError(f"mode must lie in [1, {n // 2}), got {mode}")
    material = material or LameMaterial(1.0, 1.0)
    model = model or IsotropicAnisotropy()
    eps = DEFAULT_EPS_REL * a if eps is None else eps
    curve = ReferenceCurve.periodic_graph(ell, n)
    solver = FilmSolver(material, e0, nx, ny)

    def energy(amplitude):
        return free_energy(_mode_profile(curve, a, mode, amplitude), material, e0, model, solver=solver)

    center = energy(0.0)

    def difference(amplitude):
        return (energy(amplitude) + energy(-amplitude) - 2.0 * center) / amplitude ** 2

    coarse = difference(eps)
    if not extrapolate:
        return coarse
    return (4.0 * difference(0.5 * eps) - coarse) / 3.0


def mode_scan(a: float, ell: float, n_max: int = DEFAULT_N_MAX, **kwargs) -> List[float]:
    """d2_n for n = 1..n_max."""
    return [second_variation_fd(a, ell, mode, **kwargs) for mode in range(1, n_max + 1)]


def second_variation_threshold(ell: float, material: LameMaterial, e0: float,
                               model: Optional[AnisotropyModel] = None,
                               bracket: Optional[Tuple[float, float]] = None, mode: int = 1,
                               rtol: float = 1e-6, **kwargs) -> float:
    """
    Thickness where d2_mode changes sign, located with Brent's method.

    The default bracket is [a_stable/2, 2 a_stable]; returns +inf when the
    analytic threshold is infinite and no bracket is given.
    """
    if bracket is None:
        reference = a_stable(ell, material, e0, model)
        if math.isinf(reference):
            return math.inf
        bracket = (0.5 * reference, 2.0 * reference)

    def d2(a):
        value = second_variation_fd(a, ell, mode, material=material, e0=e0, model=model, **kwargs)
        logger.debug(f"d2_{mode}(a={a:.8g}) = {value:.6g}")
        return value

    root = brentq(d2, *bracket, rtol=rtol)
    logger.info(f"Second variation of mode {mode} vanishes at a={root:.8g} (ell={ell:.6g})")
    return float(root)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    intercept: float
    samples: int


def fit_decay(times: Sequence[float], norms: Sequence[float], drop: float = 0.2,
              min_samples: int = 10, floor: float = 1e-13) -> DecayFit:
    """
    Least-squares fit of log ||h - h_inf|| against t past the transient.

    The first ``drop`` fraction of samples is discarded.

    Raises:
        DegenerateFitError: with fewer than ``min_samples`` samples left or a norm below ``floor``
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if times.shape != norms.shape:
        raise ValueError("times and norms must have the same length")
    start = int(math.floor(drop * times.size))
    times, norms = times[start:], norms[start:]
    if times.size < min_samples:
        raise DegenerateFitError(f"need {min_samples} samples past the transient, got {times.size}")
    if np.min(norms) < floor:
        raise DegenerateFitError(f"norm reached the round-off floor ({np.min(norms):.3g} < {floor:g})")
    logs = np.log(norms)
    slope, intercept = np.polyfit(times, logs, 1)
    residual = logs - (slope * times + intercept)
    total = float(np.sum((logs - np.mean(logs)) ** 2))
    r_squared = 1.0 - float(np.sum(residual ** 2)) / total if total > 0 else 1.0
    return DecayFit(float(-slope), r_squared, float(intercept), int(times.size))


def fit_decay_rate(times: Sequence[float], norms: Sequence[float], **kwargs) -> float:
    """Fitted exponential rate c of ||h - h_inf|| ~ exp(-c t); negative for growth."""
    return fit_decay(times, norms, **kwargs).rate


def _json_length(value: float):
    return "inf" if math.isinf(value) else value


@dataclass
class StabilityReport:
    """
    Stability summary of a flat film.

    Attributes:
        ell (float): Period
        material (LameMaterial): Lame coefficients
        e0 (float): Mismatch strain
        anisotropy (Dict[str, Any]): Description of the surface energy
        ell_star (float): Critical period
        a_stable (float): Analytic threshold (may be inf)
        a (Optional[float]): Thickness probed by the mode scan
        d2 (List[float]): Second variations d2_n, n = 1..n_max
        decay (Optional[DecayFit]): Rate fitted from a flow run
    """

    ell: float
    material: LameMaterial
    e0: float
    anisotropy: Dict[str, Any]
    ell_star: float
    a_stable: float
    a: Optional[float] = None
    d2: List[float] = field(default_factory=list)
    decay: Optional[DecayFit] = None

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "ell": self.ell,
            "mu": self.material.mu,
            "lambda": self.material.lam,
            "nu_p": self.material.poisson,
            "e0": self.e0,
            "anisotropy": self.anisotropy,
            "ell_star": _json_length(self.ell_star),
            "a_stable": _json_length(self.a_stable),
            "a": self.a,
            "d2": {str(n): value for n, value in enumerate(self.d2, start=1)},
        }
        if self.decay is not None:
            out["decay_rate"] = self.decay.rate
            out["decay_r_squared"] = self.decay.r_squared
        return out
