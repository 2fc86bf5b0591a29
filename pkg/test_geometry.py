import math

import numpy as np
import pytest

from sdflow import spectral
from sdflow.errors import DegenerateGeometryError, InadmissibleHeightError
from sdflow.geometry import (
    CLOSED,
    GRAPH,
    HeightField,
    ReferenceCurve,
    anchored_distance,
    curvature,
    enclosed_areas,
    frame,
    jacobian,
    load_reference_curve,
    perimeter,
    tangential_derivative,
)


def test_spectral_derivative_of_trigonometric_samples():
    x = 2 * np.pi * np.arange(64) / 64
    f = np.sin(3 * x) + 0.5 * np.cos(5 * x)
    assert np.allclose(spectral.derivative(f, 2 * np.pi), 3 * np.cos(3 * x) - 2.5 * np.sin(5 * x), atol=1e-10)
    assert np.allclose(spectral.derivative(f, 2 * np.pi, order=2), -9 * np.sin(3 * x) - 12.5 * np.cos(5 * x),
                       atol=1e-9)


def test_spectral_lowpass_resample_and_integrals():
    x = 2 * np.pi * np.arange(32) / 32
    f = 1.0 + np.cos(2 * x) + np.sin(9 * x)
    assert np.allclose(spectral.lowpass(f, 4), 1.0 + np.cos(2 * x), atol=1e-12)

    fine = 2 * np.pi * np.arange(128) / 128
    assert np.allclose(spectral.resample(f, 128), 1.0 + np.cos(2 * fine) + np.sin(9 * fine), atol=1e-12)
    assert spectral.integrate(f, 2 * np.pi) == pytest.approx(2 * np.pi)
    assert np.allclose(spectral.antiderivative(np.cos(2 * x), 2 * np.pi), 0.5 * np.sin(2 * x), atol=1e-12)


def test_reference_grid_must_be_even_and_large_enough():
    with pytest.raises(ValueError):
        ReferenceCurve.periodic_graph(1.0, 10)
    with pytest.raises(ValueError):
        ReferenceCurve.circle(1.0, 33)


def test_circle_reference_with_constant_height():
    curve = ReferenceCurve.circle(radius=1.0, n=64)
    h = HeightField.constant(curve, 0.2)
    assert curve.mode == CLOSED
    assert curve.orientation == 1.0
    assert np.allclose(jacobian(curve, h), 1.2)
    assert np.allclose(curvature(curve, h), 1 / 1.2)
    assert perimeter(curve, h) == pytest.approx(2 * np.pi * 1.2, rel=1e-12)
    assert enclosed_areas(curve, h)[0] == pytest.approx(np.pi * 1.2 ** 2, rel=1e-12)


def test_graph_curvature_and_normal():
    curve = ReferenceCurve.periodic_graph(2 * np.pi, 64)
    x = curve.grid
    values = 1.0 + 0.1 * np.cos(x)
    h = HeightField(curve, values)
    slope = -0.1 * np.sin(x)
    expected = 0.1 * np.cos(x) / (1 + slope ** 2) ** 1.5
    assert curve.mode == GRAPH
    assert np.allclose(curvature(curve, h), expected, atol=1e-12)

    tau, nu = frame(curve, h)
    assert np.allclose(nu[:, 0], -slope / np.sqrt(1 + slope ** 2), atol=1e-12)
    assert np.all(nu[:, 1] > 0)
    assert np.allclose(np.sum(tau * nu, axis=-1), 0.0, atol=1e-14)
    assert enclosed_areas(curve, h)[0] == pytest.approx(2 * np.pi, rel=1e-12)


def test_tangential_derivative_on_circle():
    curve = ReferenceCurve.circle(radius=2.0, n=64)
    s = curve.grid
    f = np.sin(s / 2.0)
    assert np.allclose(tangential_derivative(f, curve, np.zeros(64)), 0.5 * np.cos(s / 2.0), atol=1e-12)
    with pytest.raises(ValueError):
        tangential_derivative(f, curve, np.zeros(64), order=4)


def test_admissibility_checks():
    graph = ReferenceCurve.periodic_graph(1.0, 16)
    with pytest.raises(InadmissibleHeightError):
        HeightField(graph, np.linspace(-0.1, 1.0, 16)).check_admissible()

    circle = ReferenceCurve.circle(radius=1.0, n=16, eta_bar=0.8)
    HeightField.constant(circle, 0.39).check_admissible()
    with pytest.raises(InadmissibleHeightError):
        HeightField.constant(circle, 0.4).check_admissible()
    with pytest.raises(DegenerateGeometryError):
        jacobian(circle, np.full(16, -1.5))


def test_eta_bar_cannot_exceed_curvature_radius():
    with pytest.raises(ValueError):
        ReferenceCurve.circle(radius=1.0, n=16, eta_bar=1.5)


def test_load_reference_curve_from_points():
    n = 32
    s = 4 * np.pi * np.arange(n) / n
    angle = s / 2.0
    points = [{"s": float(si), "nu": [math.cos(a), math.sin(a)], "k": 0.5} for si, a in zip(s, angle)]
    curve = load_reference_curve({"mode": "closed", "N": n, "points": points})
    assert curve.period == pytest.approx(4 * np.pi)
    assert curve.area == pytest.approx(4 * np.pi, rel=1e-10)
    assert np.allclose(curve.points, 2 * np.stack([np.cos(angle), np.sin(angle)], axis=-1), atol=1e-10)
    assert curve.eta_bar == pytest.approx(1.8)


def test_load_reference_curve_from_file(tmp_path):
    path = tmp_path / "graph.json"
    path.write_text('{"mode": "graph", "N": 32, "ell": 3.0}')
    curve = load_reference_curve(path)
    assert curve.mode == GRAPH and curve.n == 32 and curve.period == 3.0
    with pytest.raises(ValueError):
        load_reference_curve({"mode": "spiral"})


def test_anchored_distance_vanishes_only_at_baseline():
    curve = ReferenceCurve.periodic_graph(2 * np.pi, 32)
    assert anchored_distance(curve, np.full(32, 1.0), baseline=1.0) == 0.0
    bumped = 1.0 + 0.1 * np.cos(curve.grid)
    assert anchored_distance(curve, bumped, baseline=1.0) == pytest.approx(0.5 * 0.01 * np.pi, rel=1e-12)
