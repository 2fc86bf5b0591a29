"""
Surface diffusion of normal graphs, V = d_ss R with R = g(nu) k + f.

Heights evolve by ((1 + h k_G)/J) dh/dt = V on the reference grid. The
step is semi-implicit: the constant-coefficient part g_bar d^4 h goes to
Fourier space, everything else is explicit, and a constant normal shift
per component restores the enclosed area afterwards.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from sdflow import diagnostics, spectral
from sdflow.anisotropy import AnisotropyModel, IsotropicAnisotropy, g_of_nu
from sdflow.elasticity import ElasticSolution, FilmSolver, LameMaterial, boundary_Q_trace
from sdflow.errors import (
    DegenerateGeometryError,
    GeometricBreakdownError,
    InadmissibleHeightError,
    StepRejectedError,
)
from sdflow.geometry import (
    CLOSED,
    GRAPH,
    HeightField,
    anchored_distance,
    curvature,
    enclosed_areas,
    frame,
    jacobian,
    tangential_derivative,
)

logger = logging.getLogger(__name__)

NONE = "none"
PRESCRIBED = "prescribed"
ELASTIC = "elastic"

ForcingFunction = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ElasticForcing:
    """
    Film elasticity settings for the elastic forcing.

    Attributes:
        material (LameMaterial): Lame coefficients
        e0 (float): Mismatch strain
        nx (Optional[int]): FEM columns (default: the height grid size)
        ny (int): FEM layers
        trace_cutoff (Optional[int]): Highest retained trace mode (default N//3)
        resolve_every (int): Steps between elastic solves
    """

    material: LameMaterial
    e0: float
    nx: Optional[int] = None
    ny: int = 32
    trace_cutoff: Optional[int] = None
    resolve_every: int = 1

    def cutoff_for(self, n: int) -> int:
        return n // 3 if self.trace_cutoff is None else self.trace_cutoff


@dataclass(frozen=True)
class ForcingSpec:
    """
    The forcing f entering R = g(nu) k + f.

    Attributes:
        kind (str): ``"none"``, ``"prescribed"`` or ``"elastic"``
        function (Optional[ForcingFunction]): f(x, t) sampled on the reference grid
        time_dependent (bool): Whether ``function`` depends on t
        elastic (Optional[ElasticForcing]): Film settings for the elastic kind
    """

    kind: str = NONE
    function: Optional[ForcingFunction] = None
    time_dependent: bool = False
    elastic: Optional[ElasticForcing] = None

    def __post_init__(self):
        if self.kind not in (NONE, PRESCRIBED, ELASTIC):
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.kind == PRESCRIBED and self.function is None:
            raise ValueError("prescribed forcing needs a function f(x, t)")
        if self.kind == ELASTIC and self.elastic is None:
            raise ValueError("elastic forcing needs film settings")

    @classmethod
    def none(cls) -> "ForcingSpec":
        return cls()

    @classmethod
    def prescribed(cls, function: ForcingFunction, time_dependent: bool = True) -> "ForcingSpec":
        return cls(PRESCRIBED, function=function, time_dependent=time_dependent)

    @classmethod
    def constant(cls, values) -> "ForcingSpec":
        """Time-independent forcing given by its samples on the reference grid."""
        values = np.array(values, dtype=float)
        values.setflags(write=False)
        return cls(PRESCRIBED, function=lambda x, t: values, time_dependent=False)

    @classmethod
    def elastic_film(cls, material: LameMaterial, e0: float, **settings) -> "ForcingSpec":
        return cls(ELASTIC, elastic=ElasticForcing(material, e0, **settings))

    @property
    def autonomous(self) -> bool:
        """True when the forced flow has a Lyapunov functional (f independent of t)."""
        return self.kind != PRESCRIBED or not self.time_dependent


class FlowState:
    """
    Mutable state of one run.

    Holds the heights, the time and the areas every step must preserve. The
    chemical potential and the geometric fields are cached and dropped
    whenever ``h`` is reassigned.
    """

    def __init__(self, h: HeightField, t: float = 0.0, target_areas: Optional[np.ndarray] = None,
                 steps: int = 0, dt_last: float = 0.0):
        self._h = h
        self.t = float(t)
        self.target_areas = (enclosed_areas(h.curve, h) if target_areas is None
                             else np.asarray(target_areas, dtype=float))
        self.steps = steps
        self.dt_last = dt_last
        self.solution: Optional[ElasticSolution] = None
        self.trace: Optional[np.ndarray] = None
        self.trace_age = 0
        self._cache = {}

    @property
    def h(self) -> HeightField:
        return self._h

    @h.setter
    def h(self, value: HeightField):
        self._h = value
        self._cache = {}
        self.solution = None
        self.trace = None

    @property
    def curve(self):
        return self._h.curve

    def __repr__(self):
        return f"FlowState(t={self.t:.6g}, steps={self.steps}, mode={self.curve.mode})"


@dataclass(frozen=True)
class DtPolicy:
    """
    Time step selection.

    ``dt`` fixes a uniform step (adjusted so the steps land on T); otherwise
    dt = c_dt (L/N)^2 min(1, 1/g_bar) is recomputed every step. Rejected
    steps are retried with dt halved up to ``max_halvings`` times.
    """

    c_dt: float = 0.5
    dt: Optional[float] = None
    max_halvings: int = 10

    def __post_init__(self):
        if not self.c_dt > 0:
            raise ValueError(f"c_dt must be positive, got {self.c_dt}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")

    def uniform_steps(self, duration: float, multiple: int = 1) -> int:
        """Number of fixed steps covering ``duration``, rounded up to a multiple of ``multiple``."""
        ratio = duration / self.dt
        n = max(1, int(math.ceil(ratio - 1e-9 * max(ratio, 1.0))))
        return int(math.ceil(n / multiple)) * multiple

    def adaptive(self, flow: "SurfaceDiffusionFlow", state: FlowState) -> float:
        spacing = state.curve.spacing
        return self.c_dt * spacing ** 2 * min(1.0, 1.0 / flow.stiffness_bound(state))


@dataclass
class RunResult:
    """
    Outcome of ``SurfaceDiffusionFlow.run``.

    Attributes:
        status (str): ``"completed"`` or ``"breakdown"``
        state (FlowState): Last accepted state
        record (DiagnosticsRecord): Per-step diagnostics, initial state included
        snapshots (List[Tuple[float, np.ndarray]]): (t, h) every snapshot stride
        halvings (int): Total number of dt halvings
        message (str): Breakdown reason
    """

    status: str
    state: FlowState
    record: "diagnostics.DiagnosticsRecord"
    snapshots: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    halvings: int = 0
    message: str = ""

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def raise_for_status(self) -> "RunResult":
        if not self.completed:
            raise GeometricBreakdownError(f"flow broke down at t={self.state.t:.6g}: {self.message}",
                                          result=self)
        return self

    def trajectory(self) -> Tuple[np.ndarray, np.ndarray]:
        """Snapshot times and heights as arrays of shape (S,) and (S, N)."""
        times = np.array([t for t, _ in self.snapshots])
        heights = np.array([h for _, h in self.snapshots])
        return times, heights


def surface_laplacian(f, curve, h) -> np.ndarray:
    """d_ss f along the graph boundary, (1/J) d((1/J) d f)."""
    return tangential_derivative(f, curve, h, order=2)


def project_area(curve, values: np.ndarray, target: np.ndarray) -> np.ndarray:
    """
    Shift the heights by a constant so the enclosed area matches ``target``.

    Closed references solve the quadratic tubular area equation
    A(h + d) = A(h) + d int(1 + h k) + d^2/2 int k exactly.
    """
    current = float(enclosed_areas(curve, values)[0])
    goal = float(target[0])
    if curve.mode == GRAPH:
        return values + (goal - current) / curve.period
    a = 0.5 * spectral.integrate(curve.curvature, curve.period)
    b = spectral.integrate(1.0 + values * curve.curvature, curve.period)
    c = current - goal
    disc = b * b - 4.0 * a * c
    if disc < 0 or b <= 0:
        raise DegenerateGeometryError(f"area projection has no real shift (b={b:.3g}, disc={disc:.3g})")
    return values - 2.0 * c / (b + math.sqrt(disc))


class SurfaceDiffusionFlow:
    """
    Surface diffusion of a normal graph with a fixed anisotropy and forcing.

    Args:
        model (Optional[AnisotropyModel]): Surface energy density (default isotropic)
        forcing (Optional[ForcingSpec]): Forcing term (default none)
    """

    def __init__(self, model: Optional[AnisotropyModel] = None, forcing: Optional[ForcingSpec] = None):
        self.model = model or IsotropicAnisotropy()
        self.forcing = forcing or ForcingSpec.none()
        self._key = id(self)
        self.film_solver: Optional[FilmSolver] = None

    def __repr__(self):
        return f"SurfaceDiffusionFlow(model={self.model!r}, forcing={self.forcing.kind})"

    def _cached(self, state: FlowState, name: str, compute):
        key = (self._key, name)
        if key not in state._cache:
            state._cache[key] = compute()
        return state._cache[key]

    def fields(self, state: FlowState) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(J, k_F, g(nu_F)) on the reference grid."""
        def compute():
            curve, h = state.curve, state.h
            _, nu = frame(curve, h)
            return jacobian(curve, h), curvature(curve, h), g_of_nu(self.model, nu)
        return self._cached(state, "fields", compute)

    def stiffness_bound(self, state: FlowState) -> float:
        """g_bar: bound on the coefficient of the fourth derivative, max g / min(J, 1)^5."""
        jac, _, g = self.fields(state)
        return float(np.max(g / np.minimum(jac, 1.0) ** 5))

    def forcing_values(self, state: FlowState) -> np.ndarray:
        """f on the reference grid at the state's time."""
        curve = state.curve
        forcing = self.forcing
        if forcing.kind == NONE:
            return np.zeros(curve.n)
        if forcing.kind == PRESCRIBED:
            values = np.broadcast_to(np.asarray(forcing.function(curve.grid, state.t), dtype=float), (curve.n,))
            return np.array(values)
        if curve.mode != GRAPH:
            raise ValueError("elastic forcing needs a periodic graph reference")
        settings = forcing.elastic
        if state.trace is None or state.trace_age >= settings.resolve_every:
            if self.film_solver is None:
                self.film_solver = FilmSolver(settings.material, settings.e0, settings.nx, settings.ny)
            state.solution = self.film_solver.solve(state.h)
            state.trace = boundary_Q_trace(state.solution, state.h, settings.cutoff_for(curve.n))
            state.trace_age = 0
        return state.trace

    def chemical_potential(self, state: FlowState) -> np.ndarray:
        """
        R = g(nu_F) k_F + f on the reference grid.

        In graph mode with elastic forcing f is the surface trace of
        Q(E(u)), entering with a plus sign since nu points out of the film.
        """
        def compute():
            _, k, g = self.fields(state)
            return g * k + self.forcing_values(state)
        return self._cached(state, "R", compute)

    def velocity(self, state: FlowState) -> np.ndarray:
        """Normal velocity V = d_ss R with its J-weighted mean removed."""
        def compute():
            jac, _, _ = self.fields(state)
            v = surface_laplacian(self.chemical_potential(state), state.curve, state.h)
            return v - np.sum(v * jac) / np.sum(jac)
        return self._cached(state, "V", compute)

    def step(self, state: FlowState, dt: float) -> FlowState:
        """
        One semi-implicit step of size dt.

        Returns:
            The new state; ``state`` itself is left untouched

        Raises:
            StepRejectedError: if the new heights leave the admissible set
        """
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        curve = state.curve
        h = state.h.values
        jac, _, _ = self.fields(state)
        rate = jac * self.velocity(state) / (1.0 + h * curve.curvature)
        g_bar = self.stiffness_bound(state)
        k4 = spectral.wavenumbers(curve.n, curve.period) ** 4
        h_hat = np.fft.rfft(h)
        h_hat = (h_hat + dt * (np.fft.rfft(rate) + g_bar * k4 * h_hat)) / (1.0 + dt * g_bar * k4)
        values = np.fft.irfft(h_hat, n=curve.n)
        try:
            if not np.all(np.isfinite(values)):
                raise InadmissibleHeightError("non-finite heights")
            values = project_area(curve, values, state.target_areas)
            new_h = HeightField(curve, values)
            new_h.check_admissible()
            jacobian(curve, new_h)
        except (InadmissibleHeightError, DegenerateGeometryError) as e:
            raise StepRejectedError(f"step at t={state.t:.6g} with dt={dt:.3g} rejected: {e}") from e

        new_state = FlowState(new_h, state.t + dt, state.target_areas, state.steps + 1, dt)
        if state.trace is not None:
            new_state.solution = state.solution
            new_state.trace = state.trace
            new_state.trace_age = state.trace_age + 1
        return new_state

    def forcing_potential(self, state: FlowState) -> float:
        """Integral of f over the layer between reference and graph, for autonomous prescribed forcing."""
        if self.forcing.kind != PRESCRIBED or self.forcing.time_dependent:
            return 0.0
        curve = state.curve
        h = state.h.values
        f = self.forcing_values(state)
        return spectral.integrate(f * (h + 0.5 * curve.curvature * h ** 2), curve.period)

    def observe(self, state: FlowState, record: "diagnostics.DiagnosticsRecord") -> None:
        """Append the diagnostics of ``state`` to ``record``."""
        curve, h = state.curve, state.h
        potential = self.chemical_potential(state)
        jac, _, _ = self.fields(state)
        solution = state.solution if self.forcing.kind == ELASTIC else None
        energy = diagnostics.total_energy(curve, h, self.model, solution=solution)
        d1 = tangential_derivative(potential, curve, h, order=1)
        d3 = tangential_derivative(potential, curve, h, order=3)
        baseline = float(state.target_areas[0]) / curve.period if curve.mode == GRAPH else 0.0
        record.append(
            t=state.t,
            energy=energy.total + self.forcing_potential(state),
            surface=energy.surface,
            elastic=energy.elastic,
            grad_R_l2sq=spectral.integrate(d1 ** 2 * jac, curve.period),
            d3R_l2sq=spectral.integrate(d3 ** 2 * jac, curve.period),
            areas=enclosed_areas(curve, h),
            D=anchored_distance(curve, h, baseline),
            perimeter=spectral.integrate(jac, curve.period),
            h_max=float(np.max(h.values)),
            h_min=float(np.min(h.values)),
            dt=state.dt_last,
        )

    def run(self, state: FlowState, T: float, policy: Optional[DtPolicy] = None,
            snapshot_stride: int = 1, steps_multiple: int = 1,
            on_step: Optional[Callable[[FlowState], None]] = None) -> RunResult:
        """
        Advance until ``state.t`` reaches T or the flow breaks down.

        Args:
            state (FlowState): Initial state
            T (float): Final time (absolute)
            policy (Optional[DtPolicy]): Step selection (default adaptive, C_dt = 0.5)
            snapshot_stride (int): Keep (t, h) every this many steps
            steps_multiple (int): With a fixed dt, round the step count up to a multiple of this
            on_step (Optional[Callable]): Called with every accepted state

        Returns:
            RunResult with status ``"completed"`` or ``"breakdown"``
        """
        policy = policy or DtPolicy()
        duration = T - state.t
        if not duration > 0:
            raise ValueError(f"final time T={T} must exceed the start time {state.t}")
        nominal = None
        if policy.dt is not None:
            nominal = duration / policy.uniform_steps(duration, steps_multiple)

        record = diagnostics.DiagnosticsRecord(autonomous=self.forcing.autonomous)
        self.observe(state, record)
        snapshots = [(state.t, np.array(state.h.values))]
        logger.info(f"Starting run to T={T:.6g} in {state.curve.mode} mode with {self!r}")
        halvings = 0
        tolerance = 1e-9 * max(abs(T), 1.0)
        while T - state.t > tolerance:
            dt = nominal if nominal is not None else policy.adaptive(self, state)
            dt = min(dt, T - state.t)
            for attempt in range(policy.max_halvings + 1):
                try:
                    new_state = self.step(state, dt)
                    break
                except StepRejectedError as e:
                    if attempt == policy.max_halvings:
                        logger.warning(f"Giving up at t={state.t:.6g} after {attempt} halvings: {e}")
                        if snapshots[-1][0] != state.t:
                            snapshots.append((state.t, np.array(state.h.values)))
                        return RunResult("breakdown", state, record, snapshots, halvings, str(e))
                    logger.warning(f"{e}; halving dt")
                    dt *= 0.5
                    halvings += 1
            state = new_state
            self.observe(state, record)
            if state.steps % snapshot_stride == 0:
                snapshots.append((state.t, np.array(state.h.values)))
            if on_step is not None:
                on_step(state)
            logger.debug(f"step {state.steps}: t={state.t:.6g} dt={dt:.3g} max|h|={np.max(np.abs(state.h.values)):.6g}")
        if snapshots[-1][0] != state.t:
            snapshots.append((state.t, np.array(state.h.values)))
        logger.info(f"Run completed at t={state.t:.6g} after {state.steps} steps ({halvings} halvings)")
        return RunResult("completed", state, record, snapshots, halvings)


def chemical_potential(state: FlowState, forcing: Optional[ForcingSpec] = None,
                       model: Optional[AnisotropyModel] = None) -> np.ndarray:
    return SurfaceDiffusionFlow(model, forcing).chemical_potential(state)


def velocity(state: FlowState, forcing: Optional[ForcingSpec] = None,
             model: Optional[AnisotropyModel] = None) -> np.ndarray:
    return SurfaceDiffusionFlow(model, forcing).velocity(state)


def step(state: FlowState, forcing: Optional[ForcingSpec], dt: float,
         model: Optional[AnisotropyModel] = None) -> FlowState:
    return SurfaceDiffusionFlow(model, forcing).step(state, dt)


def run(state: FlowState, forcing: Optional[ForcingSpec], T: float, policy: Optional[DtPolicy] = None,
        model: Optional[AnisotropyModel] = None, **kwargs) -> RunResult:
    return SurfaceDiffusionFlow(model, forcing).run(state, T, policy, **kwargs)


def d_growth_excess(record: "diagnostics.DiagnosticsRecord") -> np.ndarray:
    """
    Relative excess of D(F_{n+1}) - D(F_n) over dt P(F_n)^(1/2) (int (d_s R)^2)^(1/2).

    Non-positive values mean the growth bound holds for that step.
    """
    data = record.as_arrays()
    if len(data["t"]) < 2:
        return np.zeros(0)
    growth = np.diff(data["D"])
    dt = np.diff(data["t"])
    bound = dt * np.sqrt(data["perimeter"][:-1] * data["grad_R_l2sq"][:-1])
    scale = np.maximum(bound, np.finfo(float).eps * max(1.0, float(np.max(np.abs(data["D"])))))
    return (growth - bound) / scale
