import time

import numpy as np
import pytest

from sdflow.diagnostics import dissipation_defect, smoothed_non_increasing
from sdflow.elasticity import LameMaterial, uniform_strain
from sdflow.errors import GeometricBreakdownError, StepRejectedError
from sdflow.flow import (
    DtPolicy,
    FlowState,
    ForcingSpec,
    SurfaceDiffusionFlow,
    chemical_potential,
    d_growth_excess,
    project_area,
    run,
    step,
    velocity,
)
from sdflow.geometry import HeightField, ReferenceCurve, enclosed_areas
from sdflow.stability import fit_decay


def _graph(values, n=32, ell=2 * np.pi):
    curve = ReferenceCurve.periodic_graph(ell, n)
    return HeightField(curve, values(curve.grid) if callable(values) else np.full(n, float(values)))


def _circle(values, n=64):
    curve = ReferenceCurve.circle(1.0, n)
    return HeightField(curve, values(curve.grid))


def test_dt_policy():
    with pytest.raises(ValueError):
        DtPolicy(c_dt=0.0)
    with pytest.raises(ValueError):
        DtPolicy(dt=-1.0)
    policy = DtPolicy(dt=0.3)
    assert policy.uniform_steps(1.0) == 4
    assert policy.uniform_steps(1.0, multiple=3) == 6
    assert DtPolicy(dt=0.1).uniform_steps(1.0) == 10

    state = FlowState(_graph(1.0))
    assert DtPolicy().adaptive(SurfaceDiffusionFlow(), state) == pytest.approx(0.5 * (2 * np.pi / 32) ** 2)


def test_forcing_spec_validation():
    with pytest.raises(ValueError):
        ForcingSpec("magnetic")
    with pytest.raises(ValueError):
        ForcingSpec("prescribed")
    with pytest.raises(ValueError):
        ForcingSpec("elastic")
    assert ForcingSpec.none().autonomous
    assert ForcingSpec.constant(np.zeros(4)).autonomous
    assert not ForcingSpec.prescribed(lambda x, t: np.sin(t)).autonomous


def test_flat_film_is_stationary():
    state = FlowState(_graph(1.0))
    assert np.allclose(velocity(state), 0.0, atol=1e-14)
    result = run(state, None, 0.05, DtPolicy(dt=0.005))
    assert result.completed
    assert result.state.steps == 10
    assert np.max(np.abs(result.state.h.values - 1.0)) < 1e-14


def test_circle_is_stationary():
    result = run(FlowState(_circle(lambda s: 0.0 * s)), None, 0.01, DtPolicy(dt=1e-3))
    assert np.max(np.abs(result.state.h.values)) < 1e-14
    energy = np.array(result.record.energy)
    assert np.max(np.abs(energy - 2 * np.pi)) < 1e-10


def test_chemical_potential_of_circles():
    offset = FlowState(_circle(lambda s: np.full_like(s, 0.3)))
    assert np.max(np.abs(chemical_potential(offset) - 1.0 / 1.3)) < 1e-12
    unit = FlowState(_circle(np.zeros_like))
    assert np.max(np.abs(chemical_potential(unit) - 1.0)) < 1e-12
    advanced = step(unit, None, 1e-3)
    assert advanced.t == 1e-3 and unit.t == 0.0
    assert np.max(np.abs(advanced.h.values)) < 1e-12


def test_chemical_potential_of_flat_elastic_film():
    material = LameMaterial(1.0, 1.0)
    _, q = uniform_strain(material, 0.1)
    forcing = ForcingSpec.elastic_film(material, 0.1, ny=8)
    potential = chemical_potential(FlowState(_graph(1.0)), forcing)
    assert np.max(np.abs(potential - q)) < 1e-12
    assert np.max(np.abs(step(FlowState(_graph(1.0)), forcing, 1e-3).h.values - 1.0)) < 1e-12


def test_step_returns_new_state():
    flow = SurfaceDiffusionFlow()
    state = FlowState(_graph(lambda x: 1.0 + 0.1 * np.cos(2 * x)))
    new = flow.step(state, 1e-3)
    assert new is not state
    assert new.steps == 1 and new.t == pytest.approx(1e-3)
    assert state.steps == 0
    assert np.max(np.abs(new.h.values - 1.0)) < 0.1
    with pytest.raises(ValueError):
        flow.step(state, 0.0)


def test_graph_mode_one_decays_at_unit_rate():
    h0 = _graph(lambda x: 1.0 + 1e-3 * np.cos(x))
    result = run(FlowState(h0), None, 2.0, DtPolicy(dt=1e-3), snapshot_stride=20)
    times, heights = result.trajectory()
    norms = np.sqrt(np.sum((heights - 1.0) ** 2, axis=1) * 2 * np.pi / 32)
    fit = fit_decay(times, norms)
    assert fit.rate == pytest.approx(1.0, rel=0.02)
    assert fit.r_squared > 0.99
    assert smoothed_non_increasing(result.record.grad_R_l2sq)
    assert np.max(result.record.area_drift()) < 1e-10


def test_area_is_preserved_on_perturbed_circle():
    h0 = _circle(lambda s: 0.05 * np.cos(3 * s) + 0.02 * np.sin(5 * s))
    result = run(FlowState(h0), None, 0.01, DtPolicy())
    assert result.completed
    assert np.max(result.record.area_drift()) < 1e-10
    energy = np.array(result.record.energy)
    assert np.all(np.diff(energy) < 0)
    assert np.max(np.abs(result.state.h.values)) < np.max(np.abs(h0.values))


def test_project_area_restores_target_on_circle():
    curve = ReferenceCurve.circle(1.0, 32)
    values = 0.1 * np.cos(curve.grid)
    target = enclosed_areas(curve, values)
    shifted = project_area(curve, values + 0.03, target)
    assert enclosed_areas(curve, shifted)[0] == pytest.approx(target[0], rel=1e-13)
    assert np.allclose(shifted, values, atol=1e-12)


def test_prescribed_forcing_drives_the_film():
    curve = ReferenceCurve.periodic_graph(2 * np.pi, 32)
    forcing = ForcingSpec.constant(0.1 * np.cos(curve.grid))
    result = run(FlowState(HeightField.constant(curve, 1.0)), forcing, 0.1, DtPolicy(dt=1e-3))
    bump = result.state.h.values - 1.0
    assert np.max(np.abs(bump)) > 1e-4
    # V = d_ss f pushes material away from where f is large
    assert bump[0] < 0 < bump[16]
    assert np.max(result.record.area_drift()) < 1e-10
    assert result.record.autonomous
    pulsed = ForcingSpec.prescribed(lambda x, t: 0.1 * np.cos(x) * np.cos(10 * t))
    assert not run(FlowState(HeightField.constant(curve, 1.0)), pulsed, 0.01, DtPolicy(dt=1e-3)).record.autonomous


def test_fixed_dt_lands_on_final_time():
    result = run(FlowState(_graph(1.0)), None, 1.0, DtPolicy(dt=0.3))
    assert result.state.steps == 4
    assert result.state.t == pytest.approx(1.0, abs=1e-12)
    assert result.snapshots[-1][0] == result.state.t
    with pytest.raises(ValueError):
        run(result.state, None, 0.5)


class _RejectingFlow(SurfaceDiffusionFlow):
    def step(self, state, dt):
        raise StepRejectedError(f"rejected dt={dt}")


def test_breakdown_after_exhausting_halvings():
    result = _RejectingFlow().run(FlowState(_graph(1.0)), 1.0, DtPolicy(dt=0.1, max_halvings=3))
    assert result.status == "breakdown"
    assert result.halvings == 3
    assert not result.completed
    with pytest.raises(GeometricBreakdownError) as info:
        result.raise_for_status()
    assert info.value.exit_code == 3
    assert info.value.result is result


def test_elastic_flat_film_is_stationary():
    forcing = ForcingSpec.elastic_film(LameMaterial(1.0, 1.0), 0.1, ny=8)
    result = run(FlowState(_graph(1.0)), forcing, 0.1, DtPolicy(dt=1e-3))
    assert result.state.steps == 100
    assert np.max(np.abs(result.state.h.values - 1.0)) < 1e-10
    energy = np.array(result.record.energy)
    assert np.max(np.abs(energy - energy[0])) < 1e-10


@pytest.mark.slow
def test_elastic_flat_film_is_stationary_at_full_resolution():
    forcing = ForcingSpec.elastic_film(LameMaterial(1.0, 1.0), 0.1, nx=128, ny=32)
    start = time.perf_counter()
    result = run(FlowState(_graph(1.0, n=128)), forcing, 1.0, DtPolicy(dt=1e-3))
    assert time.perf_counter() - start < 10.0
    assert result.state.steps == 1000
    assert np.max(np.abs(result.state.h.values - 1.0)) < 1e-10
    assert np.max(result.record.area_drift()) < 1e-10


def test_elastic_run_keeps_one_factorization():
    curve = ReferenceCurve.periodic_graph(2 * np.pi, 32)
    h0 = HeightField(curve, 1.0 + 0.05 * np.cos(curve.grid))
    flow = SurfaceDiffusionFlow(forcing=ForcingSpec.elastic_film(LameMaterial(1.0, 1.0), 0.05, ny=8))
    result = flow.run(FlowState(h0), 0.02, DtPolicy(dt=1e-3)).raise_for_status()
    assert result.state.steps == 20
    assert flow.film_solver.factorizations == 1
    assert result.state.solution.residual < 1e-11
    assert np.max(result.record.area_drift()) < 1e-10


def test_resolve_cadence_reuses_the_trace():
    curve = ReferenceCurve.periodic_graph(2 * np.pi, 16)
    h0 = HeightField(curve, 1.0 + 0.05 * np.cos(curve.grid))
    forcing = ForcingSpec.elastic_film(LameMaterial(1.0, 1.0), 0.05, ny=4, resolve_every=3)
    flow = SurfaceDiffusionFlow(forcing=forcing)
    state = FlowState(h0)
    first = flow.forcing_values(state)
    ages = []
    for _ in range(4):
        state = flow.step(state, 1e-4)
        flow.forcing_values(state)
        ages.append(state.trace_age)
    assert ages == [1, 2, 0, 1]
    assert first.shape == (16,)


def test_dissipation_defect_is_first_order_in_dt():
    h0 = _circle(lambda s: 0.05 * np.cos(3 * s))
    defects = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        result = run(FlowState(h0), None, 0.01, DtPolicy(dt=dt))
        defects.append(np.max(np.abs(dissipation_defect(result.record))))
        assert np.max(result.record.area_drift()) < 1e-10
    for coarse, fine in zip(defects, defects[1:]):
        assert 1.6 <= coarse / fine <= 2.4


def _random_circle_perturbation(seed, modes=range(2, 7)):
    rng = np.random.default_rng(seed)
    coefficients = [(k, *rng.uniform(-0.03, 0.03, size=2) / k) for k in modes]
    return _circle(lambda s: sum(a * np.cos(k * s) + b * np.sin(k * s) for k, a, b in coefficients))


@pytest.mark.parametrize("seed", range(5))
def test_distance_growth_bound(seed):
    result = run(FlowState(_random_circle_perturbation(seed)), None, 0.005, DtPolicy(dt=2.5e-4)).raise_for_status()
    excess = d_growth_excess(result.record)
    assert excess.shape == (20,)
    assert np.all(excess <= 0.1)
    assert np.max(result.record.area_drift()) < 1e-10
