import json

import pytest

from sdflow.config import SimConfig, canonical_json, load_config, parse_config
from sdflow.errors import ConfigError


def _errors(document):
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(document))
    return info.value.errors


def test_defaults():
    config = parse_config("{}")
    assert isinstance(config, SimConfig)
    assert config.geometry.mode == "graph"
    assert config.geometry.N == 128
    assert config.flow.c_dt == 0.5
    assert config.flow.T is None
    assert config.stability.n_max == 8
    assert config.elasticity.trace_cutoff == 42
    assert config.elasticity.nx == 128
    assert config.initial.base == 1.0
    assert config.geometry.radius is None
    assert config.output.dir == "out"
    assert parse_config("").sha256 == config.sha256


def test_closed_defaults():
    config = parse_config('{"geometry": {"mode": "closed", "N": 64}}')
    assert config.geometry.radius == 1.0
    assert config.initial.base == 0.0
    assert config.elasticity.trace_cutoff == 21


def test_material_bounds():
    assert any(e.startswith("material.lambda") for e in _errors({"material": {"mu": 1.0, "lambda": -2.0}}))
    assert any(e.startswith("material.mu") for e in _errors({"material": {"mu": 0.0}}))
    assert any(e.startswith("material.lambda") for e in _errors({"material": {"mu": 1.0, "lambda": 60.0}}))


def test_grid_size_must_be_power_of_two():
    errors = _errors({"geometry": {"N": 100}})
    assert errors == ["geometry.N: must be a power of two >= 16, got 100"]
    assert _errors({"geometry": {"N": 8}})[0].startswith("geometry.N")


def test_unknown_and_mistyped_keys():
    assert _errors({"geometry": {"n": 64}}) == ["geometry.n: unknown key"]
    assert _errors({"flow": {"T": "long"}}) == ["flow.T: expected a finite number, got 'long'"]
    assert _errors({"output": {"svg": 1}}) == ["output.svg: expected true or false, got 1"]
    assert _errors({"initial": {"modes": [{"n": 1, "amp": 0.1}]}}) == ["initial.modes[0].amp: unknown key"]


def test_all_errors_are_collected():
    errors = _errors({"geometry": {"N": 100}, "material": {"mu": -1.0}, "flow": {"dt": 0.0}, "extra": 1})
    assert len(errors) == 4
    paths = [e.split(":")[0] for e in errors]
    assert set(paths) == {"extra", "geometry.N", "material.mu", "flow.dt"}


def test_cross_block_rules():
    assert "flow.coupling: picard coupling needs elastic forcing" in _errors({"flow": {"coupling": "picard"}})
    errors = _errors({"geometry": {"mode": "closed"}, "flow": {"forcing": {"kind": "elastic"}}})
    assert any(e.startswith("flow.forcing.kind") for e in errors)
    assert any(e.startswith("stability.n_max") for e in _errors({"geometry": {"N": 16}}))
    assert any(e.startswith("elasticity.nx") for e in _errors({"geometry": {"N": 32}, "elasticity": {"nx": 48}}))
    assert any(e.startswith("geometry.curve_file") for e in _errors({"geometry": {"curve_file": "c.json"}}))


def test_invalid_json():
    with pytest.raises(ConfigError) as info:
        parse_config("{geometry")
    assert info.value.errors[0].startswith("<root>: invalid JSON")
    assert info.value.exit_code == 2
    assert _errors([1, 2]) == ["<root>: expected an object"]


def test_hash_is_canonical():
    a = parse_config('{"material": {"mu": 2.0, "e0": 0.1}, "seed": 3}')
    b = parse_config('{"seed": 3,\n "material": {"e0": 0.1, "mu": 2.0}}')
    assert a.sha256 == b.sha256
    assert len(a.sha256) == 64
    assert parse_config('{"seed": 4}').sha256 != parse_config('{"seed": 3}').sha256
    data = a.to_dict()
    assert data["material"] == {"mu": 2.0, "lambda": 1.0, "e0": 0.1}
    assert canonical_json({"b": 1, "a": [1.5]}) == '{"a":[1.5],"b":1}'


def test_round_trip_through_to_dict():
    config = parse_config('{"anisotropy": {"type": "elliptic", "beta": 1.5}, "flow": {"T": 1.0, "dt": 0.01}}')
    assert parse_config(canonical_json(config.to_dict())) == config


def test_load_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"flow": {"T": 0.5}, "material": {"e0": 0.02}}', encoding="utf-8")
    config = load_config(path)
    assert config.flow.T == 0.5
    assert config.material.e0 == 0.02
