import json
import math

import numpy as np

from sdflow import plots
from sdflow.diagnostics import DiagnosticsRecord
from sdflow.output import read_csv, write_csv, write_json, write_snapshots, write_trajectory_csv

DIGEST = "0" * 63 + "1"


def test_json_is_plain_and_stamped(tmp_path):
    path = write_json(tmp_path / "nested" / "report.json",
                      {"a_stable": math.inf, "values": np.arange(3.0), "n": np.int64(4), "d2": {1: -math.inf}},
                      DIGEST)
    data = json.loads(path.read_text())
    assert data["config_sha256"] == DIGEST
    assert data["a_stable"] == "inf"
    assert data["values"] == [0.0, 1.0, 2.0]
    assert data["n"] == 4
    assert data["d2"] == {"1": "-inf"}


def test_csv_keeps_hash_and_full_precision(tmp_path):
    value = 1.0 / 3.0
    path = write_csv(tmp_path / "table.csv", ["x", "label"], [[value, "stable"], [np.float64(2.5), "unstable"]],
                     DIGEST)
    assert path.read_text().splitlines()[0] == f"# config_sha256: {DIGEST}"
    digest, rows = read_csv(path)
    assert digest == DIGEST
    assert rows[0]["x"] == value
    assert rows[1] == {"x": 2.5, "label": "unstable"}


def _record(samples=4):
    record = DiagnosticsRecord()
    for i in range(samples):
        record.append(t=0.1 * i, energy=2.0 - 0.1 * i, surface=2.0 - 0.1 * i, elastic=0.0,
                      grad_R_l2sq=np.exp(-i), d3R_l2sq=1.0, areas=[3.0, 1.0], D=0.01 * i,
                      perimeter=2.0, h_max=1.1, h_min=0.9, dt=0.1)
    return record


def test_trajectory_and_snapshots(tmp_path):
    path = write_trajectory_csv(tmp_path / "trajectory.csv", _record(), DIGEST, stride=2)
    _, rows = read_csv(path)
    assert list(rows[0]) == ["t", "energy", "grad_R_l2sq", "area_0", "area_1", "D", "h_max", "h_min", "dt"]
    assert [row["t"] for row in rows] == [0.0, 0.2, 0.30000000000000004]
    written = write_snapshots(tmp_path / "snapshots", [(0.0, np.ones(4)), (0.5, np.zeros(4))], DIGEST)
    assert [p.name for p in written] == ["snapshot_00000.json", "snapshot_00001.json"]
    assert json.loads(written[1].read_text())["h"] == [0.0] * 4


def test_figures_are_deterministic(tmp_path):
    record = _record()
    snapshots = [(0.1 * i, 1.0 + 0.1 * np.cos(np.linspace(0, 2 * np.pi, 16, endpoint=False)) * 0.5 ** i)
                 for i in range(4)]
    for name in ("first", "second"):
        plots.plot_energy(record, tmp_path / name / "energy.svg", DIGEST)
        plots.plot_waterfall(snapshots, 2 * np.pi, tmp_path / name / "waterfall.svg", DIGEST)
        plots.plot_grinfeld_K(0.25, tmp_path / name / "K.svg", DIGEST, level=0.5)
        plots.plot_second_variation([1.0, 2.0, 3.0], [1.0, 0.0, -1.0], tmp_path / name / "d2.svg", DIGEST, 2.0)
    for svg in ("energy.svg", "waterfall.svg", "K.svg", "d2.svg"):
        data = (tmp_path / "first" / svg).read_bytes()
        assert data == (tmp_path / "second" / svg).read_bytes()
        assert DIGEST.encode() in data
