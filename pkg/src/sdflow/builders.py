"""Factories turning a validated SimConfig into runtime objects."""
import logging

import numpy as np

from sdflow import spectral
from sdflow.anisotropy import AnisotropyModel, check_ellipticity, get_anisotropy
from sdflow.config import SimConfig
from sdflow.elasticity import LameMaterial
from sdflow.flow import DtPolicy, ElasticForcing, ForcingSpec, SurfaceDiffusionFlow
from sdflow.geometry import GRAPH, HeightField, ReferenceCurve, load_reference_curve

logger = logging.getLogger(__name__)


def get_reference_curve(config: SimConfig) -> ReferenceCurve:
    """
    Reference curve described by the geometry block.

    Args:
        config (SimConfig): Validated configuration

    Returns:
        ReferenceCurve
    """
    geometry = config.geometry
    if geometry.mode == GRAPH:
        return ReferenceCurve.periodic_graph(geometry.ell, geometry.N)
    if geometry.curve_file is not None:
        curve = load_reference_curve(geometry.curve_file)
        if curve.n != geometry.N:
            logger.warning(f"{geometry.curve_file} has {curve.n} samples, geometry.N={geometry.N} ignored")
        return curve
    return ReferenceCurve.circle(geometry.radius, geometry.N, geometry.eta_bar)


def _modes(curve: ReferenceCurve, modes) -> np.ndarray:
    phase = 2.0 * np.pi * curve.grid / curve.period
    out = np.zeros(curve.n)
    for mode in modes:
        out += mode.amplitude * np.cos(mode.n * phase + mode.phase)
    return out


def get_initial_heights(config: SimConfig, curve: ReferenceCurve) -> HeightField:
    """
    Initial heights: base value plus Fourier modes plus seeded, band-limited noise.

    Args:
        config (SimConfig): Validated configuration
        curve (ReferenceCurve): Reference the heights live on

    Returns:
        HeightField, checked for admissibility
    """
    initial = config.initial
    values = initial.base + _modes(curve, initial.modes)
    if initial.noise > 0:
        rng = np.random.default_rng(config.seed)
        noise = spectral.lowpass(rng.standard_normal(curve.n), curve.n // 4)
        values = values + initial.noise * (noise - np.mean(noise)) / np.max(np.abs(noise))
    h = HeightField(curve, values)
    h.check_admissible()
    return h


def get_model(config: SimConfig) -> AnisotropyModel:
    model = get_anisotropy(config.anisotropy.to_model_dict())
    check_ellipticity(model)
    return model


def get_material(config: SimConfig) -> LameMaterial:
    return LameMaterial(config.material.mu, config.material.lam)


def get_elastic_forcing(config: SimConfig) -> ElasticForcing:
    elasticity = config.elasticity
    return ElasticForcing(get_material(config), config.material.e0, elasticity.nx, elasticity.ny,
                          elasticity.trace_cutoff, elasticity.resolve_every)


def get_forcing(config: SimConfig, curve: ReferenceCurve) -> ForcingSpec:
    """
    Forcing described by ``flow.forcing``.

    Prescribed forcing is f(x, t) = sum A cos(2 pi n x / L + phase) cos(omega t).
    """
    forcing = config.flow.forcing
    if forcing.kind == "elastic":
        return ForcingSpec(forcing.kind, elastic=get_elastic_forcing(config))
    if forcing.kind == "none":
        return ForcingSpec.none()
    shape = _modes(curve, forcing.modes)
    omega = forcing.omega
    if omega == 0.0:
        return ForcingSpec.constant(shape)
    return ForcingSpec.prescribed(lambda x, t: shape * np.cos(omega * t), time_dependent=True)


def get_dt_policy(config: SimConfig) -> DtPolicy:
    flow = config.flow
    return DtPolicy(flow.c_dt, flow.dt, flow.max_halvings)


def get_flow(config: SimConfig, curve: ReferenceCurve) -> SurfaceDiffusionFlow:
    return SurfaceDiffusionFlow(get_model(config), get_forcing(config, curve))
