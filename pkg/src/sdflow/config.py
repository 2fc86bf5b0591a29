"""
Simulation configuration: a strict JSON schema parsed into frozen dataclasses.

Every block is a dataclass whose fields declare their JSON kind; unknown
keys, wrong types and violated preconditions are collected with their
paths and raised together as one ``ConfigError``.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from sdflow.errors import ConfigError

logger = logging.getLogger(__name__)

MAX_LAMBDA_OVER_MU = 50.0
_INVALID = object()


def _spec(kind: str, default: Any = None, key: Optional[str] = None, block: Any = None):
    metadata = {"kind": kind, "key": key, "block": block}
    if kind == "block":
        return field(default_factory=block, metadata=metadata)
    return field(default=default, metadata=metadata)


@dataclass(frozen=True)
class GeometryConfig:
    mode: str = _spec("str", "graph")
    N: int = _spec("int", 128)
    ell: float = _spec("float", 2.0 * math.pi)
    radius: Optional[float] = _spec("float")
    curve_file: Optional[str] = _spec("str")
    eta_bar: Optional[float] = _spec("float")


@dataclass(frozen=True)
class ModeConfig:
    n: int = _spec("int", 1)
    amplitude: float = _spec("float", 0.0)
    phase: float = _spec("float", 0.0)


@dataclass(frozen=True)
class InitialConfig:
    base: Optional[float] = _spec("float")
    modes: Tuple[ModeConfig, ...] = _spec("blocks", (), block=ModeConfig)
    noise: float = _spec("float", 0.0)


@dataclass(frozen=True)
class AnisotropyConfig:
    type: str = _spec("str", "isotropic")
    beta: Optional[float] = _spec("float")
    theta: Optional[Tuple[float, ...]] = _spec("floats")
    phi: Optional[Tuple[float, ...]] = _spec("floats")
    c0: float = _spec("float", 1e-3)

    def to_model_dict(self) -> Dict[str, Any]:
        out = {"type": self.type, "c0": self.c0}
        if self.type == "elliptic":
            out["beta"] = self.beta
        if self.type == "table":
            out["theta"], out["phi"] = list(self.theta), list(self.phi)
        return out


@dataclass(frozen=True)
class MaterialConfig:
    mu: float = _spec("float", 1.0)
    lam: float = _spec("float", 1.0, key="lambda")
    e0: float = _spec("float", 0.0)


@dataclass(frozen=True)
class ForcingConfig:
    kind: str = _spec("str", "none")
    modes: Tuple[ModeConfig, ...] = _spec("blocks", (), block=ModeConfig)
    omega: float = _spec("float", 0.0)


@dataclass(frozen=True)
class PicardConfig:
    tol: float = _spec("float", 1e-8)
    max_iter: int = _spec("int", 20)
    stride: int = _spec("int", 1)


@dataclass(frozen=True)
class FlowConfig:
    T: Optional[float] = _spec("float")
    dt: Optional[float] = _spec("float")
    c_dt: float = _spec("float", 0.5)
    max_halvings: int = _spec("int", 10)
    forcing: ForcingConfig = _spec("block", block=ForcingConfig)
    coupling: str = _spec("str", "direct")
    picard: PicardConfig = _spec("block", block=PicardConfig)


@dataclass(frozen=True)
class ElasticityConfig:
    nx: Optional[int] = _spec("int")
    ny: int = _spec("int", 32)
    trace_cutoff: Optional[int] = _spec("int")
    resolve_every: int = _spec("int", 1)


@dataclass(frozen=True)
class StabilityConfig:
    n_max: int = _spec("int", 8)
    eps_rel: float = _spec("float", 1e-4)
    extrapolate: bool = _spec("bool", True)
    fit_flow: bool = _spec("bool", False)


@dataclass(frozen=True)
class SweepConfig:
    workers: Optional[int] = _spec("int")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = _spec("str", "out")
    csv_stride: int = _spec("int", 1)
    snapshot_stride: int = _spec("int", 10)
    svg: bool = _spec("bool", False)


@dataclass(frozen=True)
class SimConfig:
    """
    Validated simulation configuration.

    Optional values that depend on other blocks (``initial.base``,
    ``elasticity.nx``, ``elasticity.trace_cutoff``, ``geometry.radius``)
    are filled in by ``parse_config``.
    """

    geometry: GeometryConfig = _spec("block", block=GeometryConfig)
    initial: InitialConfig = _spec("block", block=InitialConfig)
    anisotropy: AnisotropyConfig = _spec("block", block=AnisotropyConfig)
    material: MaterialConfig = _spec("block", block=MaterialConfig)
    flow: FlowConfig = _spec("block", block=FlowConfig)
    elasticity: ElasticityConfig = _spec("block", block=ElasticityConfig)
    stability: StabilityConfig = _spec("block", block=StabilityConfig)
    sweep: SweepConfig = _spec("block", block=SweepConfig)
    output: OutputConfig = _spec("block", block=OutputConfig)
    seed: int = _spec("int", 0)

    def to_dict(self) -> Dict[str, Any]:
        return _to_json(self)

    @property
    def sha256(self) -> str:
        """SHA-256 of the canonical JSON of the validated configuration."""
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _to_json(value: Any) -> Any:
    if is_dataclass(value):
        return {(f.metadata.get("key") or f.name): _to_json(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, tuple):
        return [_to_json(v) for v in value]
    return value


def _join(path: str, key: Any) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _is_number(raw: Any) -> bool:
    return isinstance(raw, (int, float)) and not isinstance(raw, bool)


def _coerce(raw: Any, spec: Dict[str, Any], path: str, errors: List[str]) -> Any:
    kind = spec["kind"]
    if kind == "float":
        if not _is_number(raw) or not math.isfinite(raw):
            errors.append(f"{path}: expected a finite number, got {raw!r}")
            return _INVALID
        return float(raw)
    if kind == "int":
        if not isinstance(raw, int) or isinstance(raw, bool):
            errors.append(f"{path}: expected an integer, got {raw!r}")
            return _INVALID
        return raw
    if kind == "str":
        if not isinstance(raw, str):
            errors.append(f"{path}: expected a string, got {raw!r}")
            return _INVALID
        return raw
    if kind == "bool":
        if not isinstance(raw, bool):
            errors.append(f"{path}: expected true or false, got {raw!r}")
            return _INVALID
        return raw
    if kind == "floats":
        if not isinstance(raw, list) or not all(_is_number(v) for v in raw):
            errors.append(f"{path}: expected a list of numbers")
            return _INVALID
        return tuple(float(v) for v in raw)
    if kind == "blocks":
        if not isinstance(raw, list):
            errors.append(f"{path}: expected a list of objects")
            return _INVALID
        return tuple(_read(spec["block"], item, _join(path, i), errors) for i, item in enumerate(raw))
    return _read(spec["block"], raw, path, errors)


def _read(cls, data: Any, path: str, errors: List[str]):
    if not isinstance(data, dict):
        errors.append(f"{path or '<root>'}: expected an object")
        return cls()
    by_key = {(f.metadata.get("key") or f.name): f for f in fields(cls)}
    for key in data:
        if key not in by_key:
            errors.append(f"{_join(path, key)}: unknown key")
    values = {}
    for key, f in by_key.items():
        if key not in data or (data[key] is None and f.default is None):
            continue
        value = _coerce(data[key], f.metadata, _join(path, key), errors)
        if value is not _INVALID:
            values[f.name] = value
    return cls(**values)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _validate(config: SimConfig, errors: List[str]) -> None:
    geometry = config.geometry
    n = geometry.N
    graph = geometry.mode == "graph"
    if geometry.mode not in ("graph", "closed"):
        errors.append(f"geometry.mode: expected 'graph' or 'closed', got {geometry.mode!r}")
    if not (n >= 16 and _is_power_of_two(n)):
        errors.append(f"geometry.N: must be a power of two >= 16, got {n}")
    if not geometry.ell > 0:
        errors.append(f"geometry.ell: must be positive, got {geometry.ell}")
    if geometry.radius is not None and not geometry.radius > 0:
        errors.append(f"geometry.radius: must be positive, got {geometry.radius}")
    if geometry.eta_bar is not None and not geometry.eta_bar > 0:
        errors.append(f"geometry.eta_bar: must be positive, got {geometry.eta_bar}")
    if geometry.curve_file is not None:
        if graph:
            errors.append("geometry.curve_file: only valid in closed mode")
        elif geometry.radius is not None:
            errors.append("geometry.curve_file: give either radius or curve_file, not both")
        elif not Path(geometry.curve_file).is_file():
            errors.append(f"geometry.curve_file: no such file {geometry.curve_file!r}")

    initial = config.initial
    if initial.base is not None and graph and not initial.base > 0:
        errors.append(f"initial.base: film thickness must be positive, got {initial.base}")
    if not initial.noise >= 0:
        errors.append(f"initial.noise: must be >= 0, got {initial.noise}")
    for block, modes in (("initial", initial.modes), ("flow.forcing", config.flow.forcing.modes)):
        for i, mode in enumerate(modes):
            if not 1 <= mode.n < n // 2:
                errors.append(f"{block}.modes[{i}].n: must lie in [1, {n // 2}), got {mode.n}")

    anisotropy = config.anisotropy
    if anisotropy.type not in ("isotropic", "elliptic", "table"):
        errors.append(f"anisotropy.type: expected isotropic, elliptic or table, got {anisotropy.type!r}")
    if anisotropy.type == "elliptic" and not (anisotropy.beta is not None and anisotropy.beta > 0):
        errors.append("anisotropy.beta: elliptic anisotropy needs beta > 0")
    if anisotropy.type == "table":
        if anisotropy.theta is None or anisotropy.phi is None:
            errors.append("anisotropy.theta: table anisotropy needs theta and phi")
        elif len(anisotropy.theta) != len(anisotropy.phi) or len(anisotropy.theta) < 3:
            errors.append("anisotropy.phi: theta and phi must have the same length >= 3")
    if not anisotropy.c0 > 0:
        errors.append(f"anisotropy.c0: must be positive, got {anisotropy.c0}")

    material = config.material
    if not material.mu > 0:
        errors.append(f"material.mu: must be positive, got {material.mu}")
    elif not material.lam > -material.mu:
        errors.append(f"material.lambda: must exceed -mu={-material.mu}, got {material.lam}")
    elif material.lam > MAX_LAMBDA_OVER_MU * material.mu:
        errors.append(f"material.lambda: must not exceed {MAX_LAMBDA_OVER_MU:g} mu, got {material.lam}")

    flow = config.flow
    for name in ("T", "dt"):
        value = getattr(flow, name)
        if value is not None and not value > 0:
            errors.append(f"flow.{name}: must be positive, got {value}")
    if not flow.c_dt > 0:
        errors.append(f"flow.c_dt: must be positive, got {flow.c_dt}")
    if flow.max_halvings < 0:
        errors.append(f"flow.max_halvings: must be >= 0, got {flow.max_halvings}")
    if flow.forcing.kind not in ("none", "prescribed", "elastic"):
        errors.append(f"flow.forcing.kind: expected none, prescribed or elastic, got {flow.forcing.kind!r}")
    if flow.forcing.kind == "elastic" and not graph:
        errors.append("flow.forcing.kind: elastic forcing needs geometry.mode 'graph'")
    if flow.coupling not in ("direct", "picard"):
        errors.append(f"flow.coupling: expected direct or picard, got {flow.coupling!r}")
    if flow.coupling == "picard" and flow.forcing.kind != "elastic":
        errors.append("flow.coupling: picard coupling needs elastic forcing")
    if not flow.picard.tol > 0:
        errors.append(f"flow.picard.tol: must be positive, got {flow.picard.tol}")
    if flow.picard.max_iter < 1:
        errors.append(f"flow.picard.max_iter: must be >= 1, got {flow.picard.max_iter}")
    if flow.picard.stride < 1:
        errors.append(f"flow.picard.stride: must be >= 1, got {flow.picard.stride}")

    elasticity = config.elasticity
    if elasticity.nx is not None and (elasticity.nx < n or elasticity.nx % n):
        errors.append(f"elasticity.nx: must be a positive multiple of N={n}, got {elasticity.nx}")
    if elasticity.ny < 1:
        errors.append(f"elasticity.ny: must be >= 1, got {elasticity.ny}")
    if elasticity.trace_cutoff is not None and not 0 <= elasticity.trace_cutoff <= n // 2:
        errors.append(f"elasticity.trace_cutoff: must lie in [0, {n // 2}], got {elasticity.trace_cutoff}")
    if elasticity.resolve_every < 1:
        errors.append(f"elasticity.resolve_every: must be >= 1, got {elasticity.resolve_every}")

    stability = config.stability
    if not 1 <= stability.n_max < n // 2:
        errors.append(f"stability.n_max: must lie in [1, {n // 2}), got {stability.n_max}")
    if not stability.eps_rel > 0:
        errors.append(f"stability.eps_rel: must be positive, got {stability.eps_rel}")
    if config.sweep.workers is not None and config.sweep.workers < 1:
        errors.append(f"sweep.workers: must be >= 1, got {config.sweep.workers}")
    for name in ("csv_stride", "snapshot_stride"):
        if getattr(config.output, name) < 1:
            errors.append(f"output.{name}: must be >= 1, got {getattr(config.output, name)}")


def _fill_defaults(config: SimConfig) -> SimConfig:
    geometry = config.geometry
    graph = geometry.mode == "graph"
    if not graph and geometry.radius is None and geometry.curve_file is None:
        geometry = replace(geometry, radius=1.0)
    initial = config.initial
    if initial.base is None:
        initial = replace(initial, base=1.0 if graph else 0.0)
    elasticity = config.elasticity
    if elasticity.nx is None:
        elasticity = replace(elasticity, nx=geometry.N)
    if elasticity.trace_cutoff is None:
        elasticity = replace(elasticity, trace_cutoff=geometry.N // 3)
    return replace(config, geometry=geometry, initial=initial, elasticity=elasticity)


def parse_config(text: Union[str, bytes]) -> SimConfig:
    """
    Parse and validate a JSON configuration document.

    Args:
        text: UTF-8 JSON text

    Returns:
        SimConfig with every default filled in

    Raises:
        ConfigError: listing every violation as ``path: message``
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError([f"<root>: invalid JSON: {e}"]) from e
    errors: List[str] = []
    config = _read(SimConfig, data, "", errors)
    _validate(config, errors)
    if errors:
        raise ConfigError(errors)
    return _fill_defaults(config)


def load_config(path: Union[str, Path]) -> SimConfig:
    """Read and parse a configuration file."""
    logger.debug(f"Loading configuration from {path}")
    return parse_config(Path(path).read_text(encoding="utf-8"))
