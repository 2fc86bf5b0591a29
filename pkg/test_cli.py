import json
import math

import numpy as np
import pytest

from sdflow import cli
from sdflow.config import parse_config
from sdflow.errors import NonContractionError
from sdflow.output import read_csv

FLAT_RUN = {
    "geometry": {"N": 16},
    "flow": {"T": 0.01, "dt": 0.001},
    "stability": {"n_max": 2},
    "output": {"snapshot_stride": 5},
}


def _write(tmp_path, document, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document), encoding="utf-8")
    return str(path)


def test_flat_film_run(tmp_path):
    config = _write(tmp_path, FLAT_RUN)
    out = tmp_path / "out"
    assert cli.main(["run", "-c", config, "--out", str(out)]) == 0

    digest, rows = read_csv(out / "trajectory.csv")
    assert digest == parse_config(json.dumps(FLAT_RUN)).sha256
    assert len(rows) == 11
    energy = np.array([row["energy"] for row in rows])
    assert np.max(np.abs(energy - energy[0])) < 1e-10
    assert rows[-1]["t"] == pytest.approx(0.01)

    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "completed"
    assert summary["steps"] == 10
    assert summary["config_sha256"] == digest
    snapshots = sorted((out / "snapshots").glob("*.json"))
    assert len(snapshots) == 3
    assert json.loads(snapshots[-1].read_text())["t"] == pytest.approx(0.01)


def test_reruns_are_byte_identical(tmp_path):
    config = _write(tmp_path, FLAT_RUN)
    first, second = tmp_path / "first", tmp_path / "second"
    assert cli.main(["run", "-c", config, "--out", str(first)]) == 0
    assert cli.main(["run", "-c", config, "--out", str(second)]) == 0
    for path in sorted(first.rglob("*")):
        if path.is_file():
            assert path.read_bytes() == (second / path.relative_to(first)).read_bytes()


def test_svg_figures_are_reproducible(tmp_path):
    config = _write(tmp_path, {**FLAT_RUN, "output": {"svg": True}})
    first, second = tmp_path / "first", tmp_path / "second"
    assert cli.main(["run", "-c", config, "--out", str(first)]) == 0
    assert cli.main(["run", "-c", config, "--out", str(second)]) == 0
    for name in ("waterfall.svg", "energy.svg"):
        data = (first / name).read_bytes()
        assert data == (second / name).read_bytes()
        assert parse_config(json.dumps({**FLAT_RUN, "output": {"svg": True}})).sha256.encode() in data


def test_configuration_errors_exit_with_2(tmp_path):
    no_time = _write(tmp_path, {"geometry": {"N": 16}, "stability": {"n_max": 2}}, "no_time.json")
    assert cli.main(["run", "-c", no_time, "--out", str(tmp_path / "a")]) == 2
    bad = _write(tmp_path, {"geometry": {"N": 100}}, "bad.json")
    assert cli.main(["run", "-c", bad, "--out", str(tmp_path / "b")]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    assert cli.main(["stability", "-c", str(broken)]) == 2
    closed = _write(tmp_path, {"geometry": {"mode": "closed", "N": 16}, "stability": {"n_max": 2}}, "closed.json")
    assert cli.main(["stability", "-c", closed, "--out", str(tmp_path / "c")]) == 2


def test_error_codes_from_the_library(tmp_path, monkeypatch):
    def fail(args):
        raise NonContractionError("distances grew", [2.0, 2.0, 2.0])

    monkeypatch.setattr(cli, "cmd_run", fail)
    assert cli.main(["run", "-c", _write(tmp_path, FLAT_RUN)]) == 4

    def crash(args):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "cmd_run", crash)
    assert cli.main(["run", "-c", _write(tmp_path, FLAT_RUN)]) == 1


def test_stability_without_mismatch(tmp_path):
    document = {"geometry": {"N": 32}, "elasticity": {"nx": 32, "ny": 4}, "stability": {"n_max": 2}}
    out = tmp_path / "out"
    assert cli.main(["stability", "-c", _write(tmp_path, document), "--out", str(out)]) == 0
    report = json.loads((out / "stability.json").read_text())
    assert report["a_stable"] == "inf"
    assert report["ell_star"] == "inf"
    assert report["a"] == 1.0
    assert report["d2"]["1"] == pytest.approx(math.pi, rel=1e-5)
    assert report["d2"]["2"] == pytest.approx(4 * math.pi, rel=1e-5)


def test_validate_passes(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["validate", "--trials", "20", "--out", str(out)]) == 0
    report = json.loads((out / "validate.json").read_text())
    assert report["passed"]
    names = [check["name"] for check in report["checks"]]
    assert "elastic patch test" in names
    assert len(report["config_sha256"]) == 64


def test_small_sweep(tmp_path):
    document = {"geometry": {"N": 32}, "material": {"e0": 0.1}, "elasticity": {"ny": 8},
                "stability": {"n_max": 2}}
    out = tmp_path / "out"
    args = ["sweep", "-c", _write(tmp_path, document), "--a", "5:20:2", "--ell", "100:250:2",
            "--workers", "1", "--out", str(out)]
    assert cli.main(args) == 0
    _, rows = read_csv(out / "phase_map.csv")
    assert len(rows) == 4
    assert rows[0]["a_stable"] == math.inf
    assert {row["analytic"] for row in rows} <= {"stable", "unstable"}
    assert cli.main(args[:4] + ["nonsense"] + args[5:]) == 2


@pytest.mark.slow
def test_phase_map_follows_the_analytic_boundary(tmp_path):
    document = {"geometry": {"N": 64}, "material": {"e0": 0.1}, "elasticity": {"nx": 128, "ny": 32},
                "stability": {"n_max": 4}}
    out = tmp_path / "out"
    assert cli.main(["sweep", "-c", _write(tmp_path, document), "--a", "4:32:8", "--ell", "150:360:8",
                     "--out", str(out)]) == 0
    _, rows = read_csv(out / "phase_map.csv")
    assert len(rows) == 64
    spacing = 4.0
    for row in rows:
        if row["numeric"] != row["analytic"]:
            assert abs(row["a"] - row["a_stable"]) <= spacing
