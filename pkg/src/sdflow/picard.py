"""
Picard coupling of the film flow with elasticity.

Starting from f = 0, each iteration runs the forced flow with the current
forcing history f(x, t), then replaces f by the elastic surface trace
Q(E(u)) computed along the new trajectory. Iterations stop when two
successive trajectories are closer than ``tol`` in L2(0, T; L2).

The loop is a small state graph: solve_forced_flow -> measure ->
(END | update_forcing -> solve_forced_flow).
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from langgraph.graph import END, START, StateGraph
from scipy.integrate import trapezoid
from typing_extensions import TypedDict

from sdflow import spectral
from sdflow.anisotropy import AnisotropyModel
from sdflow.elasticity import FilmSolver, boundary_Q_trace
from sdflow.errors import NonContractionError
from sdflow.flow import DtPolicy, ElasticForcing, FlowState, ForcingSpec, RunResult, SurfaceDiffusionFlow
from sdflow.geometry import GRAPH, HeightField

logger = logging.getLogger(__name__)

NON_CONTRACTION_STREAK = 3


class PicardState(TypedDict, total=False):
    """
    State of the Picard loop.

    Attributes:
        iteration (int): Number of completed map applications
        times (np.ndarray): Snapshot times of the latest trajectory
        trajectory (np.ndarray): (S, N) heights of the latest trajectory
        previous (Optional[np.ndarray]): Trajectory of the previous iterate
        forcing (Optional[np.ndarray]): (S, N) forcing samples driving the next solve
        result (RunResult): Run that produced ``trajectory``
        distances (List[float]): d_k between successive trajectories
        ratios (List[float]): rho_k = d_(k+1) / d_k
        converged (bool): Whether the last distance fell below tol
    """

    iteration: int
    times: np.ndarray
    trajectory: np.ndarray
    previous: Optional[np.ndarray]
    forcing: Optional[np.ndarray]
    result: RunResult
    distances: List[float]
    ratios: List[float]
    converged: bool


def trajectory_distance(times: np.ndarray, first: np.ndarray, second: np.ndarray, period: float) -> float:
    """Discrete L2(0, T; L2) distance: trapezoid rule in time of the spatial L2 norm squared."""
    squared = np.array([spectral.integrate(row ** 2, period) for row in first - second])
    return float(np.sqrt(trapezoid(squared, times)))


def interpolated_forcing(times: np.ndarray, samples: np.ndarray):
    """f(x, t) linear in t between the snapshot samples, constant outside."""
    times = np.array(times, dtype=float)
    samples = np.array(samples, dtype=float)

    def function(x, t):
        i = int(np.searchsorted(times, t, side="right")) - 1
        if i < 0:
            return samples[0]
        if i >= len(times) - 1:
            return samples[-1]
        w = (t - times[i]) / (times[i + 1] - times[i])
        return (1.0 - w) * samples[i] + w * samples[i + 1]

    return function


def solve_forced_flow(state: PicardState, h0: HeightField, flow_model: AnisotropyModel,
                      T: float, policy: DtPolicy, stride: int):
    """
    Run the flow driven by the current forcing history.

    Returns:
        Dict with the new trajectory, its times and the run result
    """
    forcing = state.get("forcing")
    if forcing is None:
        spec = ForcingSpec.none()
    else:
        spec = ForcingSpec.prescribed(interpolated_forcing(state["times"], forcing))
    flow = SurfaceDiffusionFlow(flow_model, spec)
    result = flow.run(FlowState(h0), T, policy, snapshot_stride=stride, steps_multiple=stride)
    result.raise_for_status()
    times, heights = result.trajectory()
    return {"times": times, "trajectory": heights, "result": result}


def measure(state: PicardState, h0: HeightField, tol: float):
    """
    Distance to the previous trajectory and contraction ratio.

    Raises:
        NonContractionError: after three consecutive ratios above 1
    """
    if state.get("previous") is None:
        return {"converged": False}
    distance = trajectory_distance(state["times"], state["trajectory"], state["previous"], h0.curve.period)
    distances = state["distances"] + [distance]
    ratios = list(state["ratios"])
    if len(distances) > 1:
        ratios.append(distance / distances[-2] if distances[-2] > 0 else 0.0)
    iteration = state["iteration"] + 1
    logger.info(f"Picard iteration {iteration}: distance={distance:.3e}"
                + (f", ratio={ratios[-1]:.3f}" if ratios else ""))
    if len(ratios) >= NON_CONTRACTION_STREAK and all(r > 1.0 for r in ratios[-NON_CONTRACTION_STREAK:]):
        raise NonContractionError(
            f"Picard map expanded {NON_CONTRACTION_STREAK} times in a row; reduce T", ratios)
    return {"distances": distances, "ratios": ratios, "iteration": iteration, "converged": distance < tol}


def update_forcing(state: PicardState, h0: HeightField, elastic: ElasticForcing):
    """Elastic surface trace Q(E(u)) along every snapshot of the latest trajectory."""
    curve = h0.curve
    cutoff = elastic.cutoff_for(curve.n)
    solver = FilmSolver(elastic.material, elastic.e0, elastic.nx, elastic.ny)
    samples = []
    for values in state["trajectory"]:
        h = HeightField(curve, values)
        solution = solver.solve(h)
        samples.append(boundary_Q_trace(solution, h, cutoff))
    return {"forcing": np.array(samples), "previous": state["trajectory"]}


def create_picard_graph(h0: HeightField, flow_model: AnisotropyModel, elastic: ElasticForcing,
                        T: float, policy: DtPolicy, tol: float, max_iter: int, stride: int = 1):
    """
    Build the Picard iteration graph.

    Returns:
        Compiled graph
    """
    def route(state: PicardState):
        if state.get("converged"):
            return END
        if state.get("iteration", 0) >= max_iter:
            logger.warning(f"Picard iteration stopped after {max_iter} iterations without convergence")
            return END
        return "update_forcing"

    graph_builder = StateGraph(PicardState)

    graph_builder.add_node("solve_forced_flow",
                           lambda state: solve_forced_flow(state, h0, flow_model, T, policy, stride))
    graph_builder.add_node("measure", lambda state: measure(state, h0, tol))
    graph_builder.add_node("update_forcing", lambda state: update_forcing(state, h0, elastic))

    graph_builder.add_edge(START, "solve_forced_flow")
    graph_builder.add_edge("solve_forced_flow", "measure")
    graph_builder.add_conditional_edges("measure", route, ["update_forcing", END])
    graph_builder.add_edge("update_forcing", "solve_forced_flow")

    return graph_builder.compile()


@dataclass
class PicardReport:
    """
    Outcome of ``picard_solve``.

    Attributes:
        result (RunResult): Run of the last iterate
        distances (List[float]): Distances between successive trajectories
        ratios (List[float]): Contraction ratios
        converged (bool): Whether the tolerance was reached
    """

    result: RunResult
    distances: List[float] = field(default_factory=list)
    ratios: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.distances)

    def to_dict(self) -> Dict[str, Any]:
        return {"iterations": self.iterations, "converged": self.converged,
                "distances": self.distances, "ratios": self.ratios}


def picard_solve(h0: HeightField, T: float, elastic: ElasticForcing, dt: float,
                 model: Optional[AnisotropyModel] = None, tol: float = 1e-8, max_iter: int = 20,
                 stride: int = 1) -> PicardReport:
    """
    Fixed point of the map f -> Q(E(u_F)) over forced flows on [0, T].

    Args:
        h0 (HeightField): Initial film profile over a periodic graph
        T (float): Time horizon
        elastic (ElasticForcing): Material, mismatch and FEM settings
        dt (float): Fixed time step, shared by every iterate
        model (Optional[AnisotropyModel]): Surface energy density
        tol (float): Stopping distance
        max_iter (int): Maximum number of map applications
        stride (int): Snapshot stride K for the forcing history and the distance

    Returns:
        PicardReport

    Raises:
        NonContractionError: if the map expands three times in a row
        GeometricBreakdownError: if an inner flow breaks down
    """
    if h0.curve.mode != GRAPH:
        raise ValueError("Picard coupling needs a periodic graph reference")
    flow_model = SurfaceDiffusionFlow(model).model
    policy = DtPolicy(dt=dt, max_halvings=0)
    graph = create_picard_graph(h0, flow_model, elastic, T, policy, tol, max_iter, stride)
    logger.info(f"Starting Picard iteration: T={T:.6g}, dt={dt:.3g}, tol={tol:g}, max_iter={max_iter}")
    final = graph.invoke(
        {"iteration": 0, "forcing": None, "previous": None, "distances": [], "ratios": [], "converged": False},
        {"recursion_limit": 3 * (max_iter + 2) + 5},
    )
    return PicardReport(final["result"], final["distances"], final["ratios"], bool(final["converged"]))
