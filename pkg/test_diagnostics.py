import numpy as np
import pytest

from sdflow.anisotropy import EllipticAnisotropy, IsotropicAnisotropy
from sdflow.diagnostics import (
    INTERPOLATION_CASES,
    DiagnosticsRecord,
    dissipation_defect,
    holder_ratio,
    inequality_ratio,
    interpolation_suite,
    random_polynomial,
    scaling_residual,
    smoothed_non_increasing,
    sobolev_seminorm,
    surface_energy,
    theta,
    total_energy,
)
from sdflow.elasticity import LameMaterial, uniform_strain
from sdflow.geometry import HeightField, ReferenceCurve, perimeter

X = 2 * np.pi * np.arange(1024) / 1024


def _sample(t, **overrides):
    values = dict(t=t, energy=1.0 - t, surface=1.0 - t, elastic=0.0, grad_R_l2sq=1.0, d3R_l2sq=1.0,
                  areas=[2.0], D=0.0, perimeter=1.0, h_max=1.0, h_min=1.0, dt=0.1)
    values.update(overrides)
    return values


def test_isotropic_surface_energy_is_length():
    curve = ReferenceCurve.circle(1.0, 64)
    h = HeightField(curve, 0.1 * np.cos(3 * curve.grid))
    assert surface_energy(curve, h, IsotropicAnisotropy()) == pytest.approx(perimeter(curve, h), abs=1e-10)


def test_energy_decomposition():
    curve = ReferenceCurve.periodic_graph(2 * np.pi, 32)
    h = HeightField.constant(curve, 1.5)
    material = LameMaterial(1.0, 1.0)
    breakdown = total_energy(curve, h, EllipticAnisotropy(2.0), material, 0.1, ny=4)
    _, q = uniform_strain(material, 0.1)
    assert breakdown.total == breakdown.surface + breakdown.elastic
    assert breakdown.surface == pytest.approx(2 * 2 * np.pi)
    assert breakdown.elastic == pytest.approx(q * 1.5 * 2 * np.pi, rel=1e-10)

    circle = ReferenceCurve.circle(1.0, 32)
    closed = total_energy(circle, np.zeros(32), IsotropicAnisotropy(), material, 0.1)
    assert closed.elastic == 0.0


def test_record_validation_and_rows():
    record = DiagnosticsRecord()
    with pytest.raises(ValueError):
        record.append(t=0.0)
    for i in range(5):
        record.append(**_sample(0.1 * i))
    with pytest.raises(ValueError):
        record.append(**_sample(0.1))
    assert len(record) == 5
    assert record.components == 1
    assert record.columns() == ["t", "energy", "grad_R_l2sq", "area_0", "D", "h_max", "h_min", "dt"]
    rows = record.rows(stride=3)
    assert [row[0] for row in rows] == pytest.approx([0.0, 0.3, 0.4])
    assert np.all(record.area_drift() == 0.0)


def test_dissipation_defect_on_exact_series():
    record = DiagnosticsRecord()
    for i in range(6):
        t = 0.1 * i
        record.append(**_sample(t, energy=np.exp(-t), grad_R_l2sq=np.exp(-t)))
    defect = dissipation_defect(record, normalize=False)
    assert defect.shape == (4,)
    assert np.max(np.abs(defect)) < 2e-3
    short = DiagnosticsRecord()
    short.append(**_sample(0.0))
    with pytest.raises(ValueError):
        dissipation_defect(short)


def test_dissipation_defect_is_raw_for_time_dependent_forcing(caplog):
    series = [_sample(0.1 * i, energy=1.0 + 50.0 * i, grad_R_l2sq=0.0) for i in range(4)]
    autonomous = DiagnosticsRecord()
    forced = DiagnosticsRecord(autonomous=False)
    for values in series:
        autonomous.append(**values)
        forced.append(**values)
    assert dissipation_defect(autonomous) == pytest.approx([1.0, 1.0])
    with caplog.at_level("WARNING"):
        assert dissipation_defect(forced) == pytest.approx([500.0, 500.0])
    assert "time-dependent forcing" in caplog.text


def test_smoothed_non_increasing():
    t = np.linspace(0.0, 1.0, 50)
    assert smoothed_non_increasing(np.exp(-t) + 1e-4 * np.sin(40 * t))
    assert not smoothed_non_increasing(np.exp(t))
    assert smoothed_non_increasing([1.0, 2.0])


def test_sobolev_seminorms_of_a_single_mode():
    f = np.cos(5 * X)
    assert sobolev_seminorm(f, 0) == pytest.approx(np.sqrt(np.pi))
    assert sobolev_seminorm(f, 2) == pytest.approx(25 * np.sqrt(np.pi))
    assert sobolev_seminorm(np.ones(1024), 0) == pytest.approx(np.sqrt(2 * np.pi))


def test_single_mode_equality_and_zero_function():
    assert theta(1, 2, 2) == 0.5
    for k in (1, 4, 11):
        assert inequality_ratio(np.cos(k * X), 1, 2, 2) == pytest.approx(1.0, abs=1e-12)
    for s, m, p in INTERPOLATION_CASES:
        assert inequality_ratio(np.zeros(1024), s, m, p) == 0.0
    assert holder_ratio(np.zeros(256), 1, 0.3) == 0.0


def test_scaling_exponent_balance():
    for s, m, p in INTERPOLATION_CASES:
        if p == 2:
            assert scaling_residual(s, m) < 1e-10


def test_random_polynomials_respect_the_inequalities():
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = random_polynomial(rng, 1024, zero_mean=True)
        assert abs(np.mean(f)) < 1e-10
        for s, m, p in INTERPOLATION_CASES:
            assert 0.0 < inequality_ratio(f, s, m, p) <= 1.5
    g = random_polynomial(rng, 256, max_degree=32)
    assert 0.0 < holder_ratio(g, 2, 0.1) < 10.0


def test_interpolation_suite_is_deterministic():
    first = interpolation_suite(seed=7, trials=30)
    second = interpolation_suite(seed=7, trials=30)
    assert first.passed
    assert [c.constant for c in first.checks] == [c.constant for c in second.checks]
    names = [c.name for c in first.checks]
    assert "single mode equality" in names and "scaling exponent" in names
    data = first.to_dict()
    assert data["trials"] == 30 and data["lp_samples"] == 1024
    with pytest.raises(ValueError):
        interpolation_suite(trials=0)


@pytest.mark.slow
def test_interpolation_suite_with_full_trial_count():
    report = interpolation_suite(seed=0, trials=1000)
    assert report.passed
    for check in report.checks:
        assert check.constant <= check.cap
