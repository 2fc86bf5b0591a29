import numpy as np
import pytest

from sdflow.elasticity import LameMaterial
from sdflow.errors import NonContractionError
from sdflow.flow import DtPolicy, ElasticForcing, FlowState, ForcingSpec, SurfaceDiffusionFlow
from sdflow.geometry import HeightField, ReferenceCurve
from sdflow.picard import PicardReport, interpolated_forcing, measure, picard_solve, trajectory_distance


def _film(n=16, amplitude=0.05):
    curve = ReferenceCurve.periodic_graph(2 * np.pi, n)
    return HeightField(curve, 1.0 + amplitude * np.cos(curve.grid))


def test_trajectory_distance():
    times = np.linspace(0.0, 2.0, 5)
    first = np.zeros((5, 16))
    assert trajectory_distance(times, first, first, 2 * np.pi) == 0.0
    second = np.full((5, 16), 0.1)
    assert trajectory_distance(times, first, second, 2 * np.pi) == pytest.approx(np.sqrt(2.0 * 2 * np.pi * 0.01))


def test_interpolated_forcing_is_linear_in_time():
    samples = np.array([np.zeros(4), np.ones(4), 3 * np.ones(4)])
    f = interpolated_forcing([0.0, 1.0, 2.0], samples)
    assert np.allclose(f(None, 0.5), 0.5)
    assert np.allclose(f(None, 1.5), 2.0)
    assert np.allclose(f(None, 1.0), 1.0)
    assert np.allclose(f(None, -1.0), 0.0)
    assert np.allclose(f(None, 5.0), 3.0)


def test_measure_raises_after_three_expansions():
    h0 = _film()
    state = {"times": np.array([0.0, 1.0]), "trajectory": np.full((2, 16), 16.0), "previous": np.zeros((2, 16)),
             "distances": [1.0, 2.0, 4.0], "ratios": [2.0, 2.0], "iteration": 3}
    with pytest.raises(NonContractionError) as info:
        measure(state, h0, 1e-8)
    assert info.value.exit_code == 4
    assert len(info.value.ratios) == 3


def test_no_mismatch_converges_in_one_iteration():
    elastic = ElasticForcing(LameMaterial(1.0, 1.0), 0.0, ny=4)
    report = picard_solve(_film(), 0.01, elastic, dt=1e-3)
    assert isinstance(report, PicardReport)
    assert report.converged
    assert report.iterations == 1
    assert report.distances == [0.0]
    assert report.to_dict()["iterations"] == 1
    assert report.result.state.steps == 10


def test_picard_needs_a_graph():
    circle = ReferenceCurve.circle(1.0, 16)
    with pytest.raises(ValueError):
        picard_solve(HeightField.constant(circle, 0.0), 0.01, ElasticForcing(LameMaterial(1.0, 1.0), 0.05), 1e-3)


def test_picard_stops_at_max_iter():
    elastic = ElasticForcing(LameMaterial(1.0, 1.0), 0.05, ny=4)
    report = picard_solve(_film(), 0.01, elastic, dt=1e-3, tol=1e-30, max_iter=2)
    assert not report.converged
    assert report.iterations == 2


@pytest.mark.slow
def test_picard_contracts_to_the_direct_coupled_run():
    h0 = _film(n=32)
    elastic = ElasticForcing(LameMaterial(1.0, 1.0), 0.05, ny=8)
    dt, T, tol = 1e-3, 0.04, 1e-10
    report = picard_solve(h0, T, elastic, dt=dt, tol=tol)
    assert report.converged
    assert all(ratio < 1.0 for ratio in report.ratios)

    direct = SurfaceDiffusionFlow(forcing=ForcingSpec("elastic", elastic=elastic))
    result = direct.run(FlowState(h0), T, DtPolicy(dt=dt))
    assert result.state.steps == report.result.state.steps < 50
    times, heights = result.trajectory()
    picard_times, picard_heights = report.result.trajectory()
    assert np.allclose(times, picard_times)
    assert trajectory_distance(times, heights, picard_heights, 2 * np.pi) < 10 * tol
    assert np.max(report.result.record.area_drift()) < 1e-10
