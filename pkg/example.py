import os
import json
import logging
from sdflow import builders, output
from sdflow.config import parse_config
from sdflow.flow import FlowState
from sdflow.stability import a_stable, critical_length

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

CONFIG = {
    "geometry": {"mode": "graph", "N": 64, "ell": 240.0},
    "initial": {"base": 10.0, "modes": [{"n": 1, "amplitude": 0.05}]},
    "material": {"mu": 1.0, "lambda": 1.0, "e0": 0.1},
    "elasticity": {"ny": 16},
    "flow": {"T": 2.0e6, "dt": 2.0e4, "forcing": {"kind": "elastic"}},
}


def main():
    try:
        config = parse_config(json.dumps(CONFIG))
        out_dir = os.environ.get('SDFLOW_EXAMPLE_OUT', 'out/example')

        # Where does the film stop being stable?
        material = builders.get_material(config)
        model = builders.get_model(config)
        ell = config.geometry.ell
        logger.info(f"ell* = {critical_length(material, config.material.e0, model):.4g}, "
                    f"a_stable({ell:g}) = {a_stable(ell, material, config.material.e0, model):.4g}")

        # Flow a thin film below the threshold
        curve = builders.get_reference_curve(config)
        flow = builders.get_flow(config, curve)
        h0 = builders.get_initial_heights(config, curve)
        result = flow.run(FlowState(h0), config.flow.T, builders.get_dt_policy(config), snapshot_stride=10)

        output.write_trajectory_csv(os.path.join(out_dir, 'trajectory.csv'), result.record, config.sha256)
        logger.info(f"Run {result.status} at t={result.state.t:.4g}")
        print(f'Mode amplitude: {(h0.values.max() - h0.values.min()) / 2:.4g} -> '
              f'{(result.state.h.values.max() - result.state.h.values.min()) / 2:.4g}')

    except Exception as e:
        logger.error(f"An error occurred: {e}", exc_info=True)

if __name__ == "__main__":
    main()
