"""
Command line entry point: ``sdflow run|stability|sweep|validate``.

Exit codes: 0 ok, 2 configuration error, 3 geometric breakdown,
4 non-contraction, 5 validation failure, 1 anything else.
"""
import argparse
import hashlib
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from sdflow import __version__, builders, output, spectral
from sdflow.anisotropy import EllipticAnisotropy, IsotropicAnisotropy, check_ellipticity, homogeneity_residuals
from sdflow.config import SimConfig, canonical_json, load_config
from sdflow.diagnostics import interpolation_suite
from sdflow.elasticity import LameMaterial, solve_film, uniform_strain
from sdflow.errors import ConfigError, SdflowError, ValidationFailure
from sdflow.flow import ELASTIC, FlowState, ForcingSpec, SurfaceDiffusionFlow
from sdflow.geometry import GRAPH, HeightField, ReferenceCurve
from sdflow.picard import picard_solve
from sdflow.stability import (
    StabilityReport,
    a_stable,
    critical_length,
    fit_decay,
    mode_scan,
    second_variation_fd,
)
from sdflow.sweep import COLUMNS, boundary_mismatch, parse_range, run_sweep

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else os.environ.get("SDFLOW_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


def _out_dir(args, config: Optional[SimConfig]) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(config.output.dir if config is not None else "out")


def _require_graph(config: SimConfig, command: str) -> None:
    if config.geometry.mode != GRAPH:
        raise ConfigError([f"geometry.mode: '{command}' needs a periodic graph"])


def cmd_run(args) -> int:
    config = load_config(args.config)
    if config.flow.T is None:
        raise ConfigError(["flow.T: required for run"])
    out = _out_dir(args, config)
    digest = config.sha256
    curve = builders.get_reference_curve(config)
    h0 = builders.get_initial_heights(config, curve)
    extra: Dict[str, Any] = {}

    if config.flow.coupling == "picard":
        flow = builders.get_flow(config, curve)
        policy = builders.get_dt_policy(config)
        dt = policy.dt if policy.dt is not None else policy.adaptive(flow, FlowState(h0))
        picard = config.flow.picard
        report = picard_solve(h0, config.flow.T, builders.get_elastic_forcing(config), dt,
                              model=flow.model, tol=picard.tol, max_iter=picard.max_iter, stride=picard.stride)
        result = report.result
        extra["picard"] = report.to_dict()
    else:
        flow = builders.get_flow(config, curve)
        result = flow.run(FlowState(h0), config.flow.T, builders.get_dt_policy(config),
                          snapshot_stride=config.output.snapshot_stride)

    output.write_trajectory_csv(out / "trajectory.csv", result.record, digest, config.output.csv_stride)
    output.write_snapshots(out / "snapshots", result.snapshots, digest)
    drift = float(np.max(result.record.area_drift()))
    output.write_json(out / "summary.json", {
        "status": result.status,
        "message": result.message,
        "t": result.state.t,
        "steps": result.state.steps,
        "halvings": result.halvings,
        "max_area_drift": drift,
        **extra,
    }, digest)
    if config.output.svg:
        from sdflow import plots
        plots.plot_waterfall(result.snapshots, curve.period, out / "waterfall.svg", digest)
        plots.plot_energy(result.record, out / "energy.svg", digest)
    result.raise_for_status()
    return 0


def _mode_norms(result, a: float, period: float):
    times, heights = result.trajectory()
    norms = np.array([math.sqrt(spectral.integrate((h - a) ** 2, period)) for h in heights])
    return times, norms


def cmd_stability(args) -> int:
    config = load_config(args.config)
    _require_graph(config, "stability")
    out = _out_dir(args, config)
    digest = config.sha256
    ell = config.geometry.ell
    a = args.a if args.a is not None else config.initial.base
    material = builders.get_material(config)
    model = builders.get_model(config)
    e0 = config.material.e0
    settings = {"n": config.geometry.N, "nx": config.elasticity.nx, "ny": config.elasticity.ny,
                "extrapolate": config.stability.extrapolate}

    threshold = a_stable(ell, material, e0, model)
    logger.info(f"ell*={critical_length(material, e0, model):.6g}, a_stable={threshold:.6g} for ell={ell:.6g}")
    d2 = mode_scan(a, ell, config.stability.n_max, eps=config.stability.eps_rel * a,
                   material=material, e0=e0, model=model, **settings)
    report = StabilityReport(ell, material, e0, model.describe(), critical_length(material, e0, model),
                             threshold, a, d2)

    if config.stability.fit_flow:
        if config.flow.T is None:
            raise ConfigError(["flow.T: required when stability.fit_flow is set"])
        curve = ReferenceCurve.periodic_graph(ell, config.geometry.N)
        eps = config.stability.eps_rel * a
        h0 = HeightField(curve, a + eps * np.cos(2.0 * np.pi * curve.grid / ell))
        flow = SurfaceDiffusionFlow(model, ForcingSpec(ELASTIC, elastic=builders.get_elastic_forcing(config)))
        result = flow.run(FlowState(h0), config.flow.T, builders.get_dt_policy(config)).raise_for_status()
        report.decay = fit_decay(*_mode_norms(result, a, ell))

    output.write_json(out / "stability.json", report.to_dict(), digest)
    if config.output.svg:
        from sdflow import plots
        plots.plot_grinfeld_K(material.poisson, out / "grinfeld_K.svg", digest,
                              level=report.ell_star / ell if math.isfinite(report.ell_star) else None)
        center = threshold if math.isfinite(threshold) else a
        a_values = np.linspace(0.5 * center, 1.5 * center, 9)
        d2_values = [second_variation_fd(v, ell, 1, eps=config.stability.eps_rel * v, material=material,
                                         e0=e0, model=model, **settings) for v in a_values]
        plots.plot_second_variation(a_values, d2_values, out / "second_variation.svg", digest, threshold)
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    _require_graph(config, "sweep")
    out = _out_dir(args, config)
    try:
        a_values, ell_values = parse_range(args.a), parse_range(args.ell)
    except ValueError as e:
        raise ConfigError([f"--a/--ell: {e}"]) from e
    cells = run_sweep(config, a_values, ell_values, args.workers)
    output.write_csv(out / "phase_map.csv", COLUMNS, [cell.row() for cell in cells], config.sha256)
    logger.info(f"Phase map: {boundary_mismatch(cells)} of {len(cells)} cells disagree with a_stable(ell)")
    return 0


def _patch_test() -> Dict[str, Any]:
    """Flat film under uniform strain: displacement, trace and energy against the closed form."""
    material = LameMaterial(1.0, 1.0)
    e0, a, ell = 0.05, 1.0, 2.0 * math.pi
    curve = ReferenceCurve.periodic_graph(ell, 32)
    solution = solve_film(HeightField.constant(curve, a), material, e0, ny=8)
    c, q = uniform_strain(material, e0)
    nodes = solution.mesh.nodes
    exact = np.stack([e0 * nodes[:, 0], c * nodes[:, 1]], axis=-1)
    errors = {
        "displacement": float(np.max(np.abs(solution.displacement - exact))),
        "trace": float(np.max(np.abs(solution.top_density - q))) / q,
        "energy": abs(solution.energy - q * a * ell) / (q * a * ell),
        "energy_forms": abs(solution.energy - solution.energy_stiffness) / solution.energy,
        "residual": solution.residual,
    }
    return {"name": "elastic patch test", "passed": all(v < 1e-10 for v in errors.values()), **errors}


def _anisotropy_checks(config: Optional[SimConfig]) -> List[Dict[str, Any]]:
    models = [IsotropicAnisotropy(), EllipticAnisotropy(2.0)]
    if config is not None:
        models.append(builders.get_model(config))
    checks = []
    for model in models:
        residuals = homogeneity_residuals(model)
        report = check_ellipticity(model)
        checks.append({"name": f"anisotropy {model!r}", **residuals, **report.to_dict(),
                       "passed": report.passed and max(residuals.values()) < 1e-8})
    return checks


def cmd_validate(args) -> int:
    config = load_config(args.config) if args.config is not None else None
    digest = config.sha256 if config is not None else _validate_digest(args)
    suite = interpolation_suite(args.seed, args.trials)
    checks = [c.to_dict() for c in suite.checks] + _anisotropy_checks(config) + [_patch_test()]
    passed = all(c["passed"] for c in checks)
    output.write_json(_out_dir(args, config) / "validate.json",
                      {"passed": passed, "seed": args.seed, "trials": args.trials, "checks": checks}, digest)
    failed = [c["name"] for c in checks if not c["passed"]]
    if failed:
        raise ValidationFailure(f"{len(failed)} checks failed: {', '.join(failed)}")
    logger.info(f"All {len(checks)} validation checks passed")
    return 0


def _validate_digest(args) -> str:
    return hashlib.sha256(canonical_json({"validate": {"seed": args.seed, "trials": args.trials}})
                          .encode("utf-8")).hexdigest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdflow", description="Surface diffusion flow with elasticity")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate the flow and write the trajectory")
    run.add_argument("-c", "--config", required=True)
    run.add_argument("--out")
    run.set_defaults(handler=cmd_run)

    stability = sub.add_parser("stability", help="Grinfeld threshold and second variations")
    stability.add_argument("-c", "--config", required=True)
    stability.add_argument("--a", type=float, help="film thickness (default initial.base)")
    stability.add_argument("--out")
    stability.set_defaults(handler=cmd_stability)

    sweep = sub.add_parser("sweep", help="stability phase map over (a, ell)")
    sweep.add_argument("-c", "--config", required=True)
    sweep.add_argument("--a", required=True, help="lo:hi:n")
    sweep.add_argument("--ell", required=True, help="lo:hi:n")
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--out")
    sweep.set_defaults(handler=cmd_sweep)

    validate = sub.add_parser("validate", help="run the built-in diagnostics suite")
    validate.add_argument("-c", "--config")
    validate.add_argument("--trials", type=int, default=1000)
    validate.add_argument("--seed", type=int, default=0)
    validate.add_argument("--out")
    validate.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}", exc_info=True)
        return e.exit_code
    except SdflowError as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=True)
        return e.exit_code
    except Exception as e:
        logger.error(f"An error occurred: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
