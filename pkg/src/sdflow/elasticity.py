"""
Plane-strain elasticity of an epitaxial film on a rigid substrate.

The film occupies 0 < x2 < h(x1) over one period [0, ell). The displacement
is split as u = e0 (x1, 0) + w with w periodic in x1 and w = 0 on the
substrate, so the mismatch enters as the constant eigen-stress of the
uniform strain e0 e1 (x) e1. The strip is meshed with bilinear
quadrilaterals following the profile, (x1, xi * h(x1)) with xi in [0, 1],
and the laterally periodic displacement is obtained by identifying the
first and last node columns.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from sdflow import spectral
from sdflow.errors import InvalidMaterialError, MeshQualityError, SingularSystemError
from sdflow.geometry import GRAPH, HeightField

logger = logging.getLogger(__name__)

_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([(-_G, -_G), (_G, -_G), (_G, _G), (-_G, _G)])
# Reference corners in element node order
CORNERS = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])


@dataclass(frozen=True)
class LameMaterial:
    """
    Isotropic material with Q(E) = mu |E|^2 + lambda/2 (tr E)^2.

    Attributes:
        mu (float): Shear modulus
        lam (float): First Lame parameter
    """

    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidMaterialError(f"shear modulus must be positive, got mu={self.mu}")
        if not self.lam > -self.mu:
            raise InvalidMaterialError(f"need lambda > -mu, got lambda={self.lam}, mu={self.mu}")

    @property
    def poisson(self) -> float:
        """Poisson modulus nu_p = lambda / (2 (lambda + mu))."""
        return self.lam / (2.0 * (self.lam + self.mu))

    @property
    def voigt(self) -> np.ndarray:
        """Plane-strain stiffness in Voigt form with engineering shear."""
        mu, lam = self.mu, self.lam
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])

    def energy_density(self, e11, e22, e12) -> np.ndarray:
        trace = e11 + e22
        return self.mu * (e11 ** 2 + e22 ** 2 + 2.0 * e12 ** 2) + 0.5 * self.lam * trace ** 2


def uniform_strain(material: LameMaterial, e0: float) -> Tuple[float, float]:
    """
    Flat-film equilibrium u = (e0 x1, c x2).

    Returns:
        (c, q) with c = -lambda e0 / (lambda + 2 mu) and q the constant energy density
    """
    c = -material.lam * e0 / (material.lam + 2.0 * material.mu)
    return c, float(material.energy_density(e0, c, 0.0))


@dataclass(frozen=True, eq=False)
class StripMesh:
    """
    Terrain-following quadrilateral mesh of the film.

    Node (i, j), i in [0, nx), j in [0, ny], sits at (i dx, j/ny * H_i) and has
    index j * nx + i. Element (i, j) spans columns i, i+1 (mod nx) and rows j, j+1.
    """

    ell: float
    nx: int
    ny: int
    heights: np.ndarray = field(repr=False)

    @classmethod
    def over(cls, h: HeightField, nx: int, ny: int) -> "StripMesh":
        curve = h.curve
        if curve.mode != GRAPH:
            raise ValueError("film elasticity needs a periodic graph reference")
        if nx % curve.n:
            raise ValueError(f"nx={nx} must be a multiple of the height grid size {curve.n}")
        heights = spectral.resample(h.values, nx)
        if np.min(heights) <= 0:
            raise MeshQualityError(f"interpolated film thickness reaches {np.min(heights):.3g}")
        return cls(curve.period, nx, ny, heights)

    @property
    def n_nodes(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.nx) * self.ell / self.nx
        xi = np.arange(self.ny + 1) / self.ny
        return np.stack([np.tile(x, self.ny + 1), np.outer(xi, self.heights).ravel()], axis=-1)

    @property
    def cells(self) -> np.ndarray:
        i = np.tile(np.arange(self.nx), self.ny)
        j = np.repeat(np.arange(self.ny), self.nx)
        right = (i + 1) % self.nx
        return np.stack([j * self.nx + i, j * self.nx + right,
                         (j + 1) * self.nx + right, (j + 1) * self.nx + i], axis=-1)

    def element_coordinates(self) -> np.ndarray:
        """(n_cells, 4, 2) corner coordinates, unwrapped across the period."""
        dx = self.ell / self.nx
        i = np.tile(np.arange(self.nx), self.ny)
        j = np.repeat(np.arange(self.ny), self.nx)
        right = (i + 1) % self.nx
        x0, x1 = i * dx, (i + 1) * dx
        lo, hi = j / self.ny, (j + 1) / self.ny
        hl, hr = self.heights[i], self.heights[right]
        xs = np.stack([x0, x1, x1, x0], axis=-1)
        ys = np.stack([lo * hl, lo * hr, hi * hr, hi * hl], axis=-1)
        return np.stack([xs, ys], axis=-1)


def _shape_gradients(xi: float, eta: float) -> np.ndarray:
    """(2, 4) derivatives of the bilinear shape functions in reference coordinates."""
    return 0.25 * np.array([
        [-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)],
        [-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)],
    ])


def _strain_operator(coords: np.ndarray, xi: float, eta: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Strain-displacement matrices at one reference point for all elements.

    Returns:
        (B, detJ) with B of shape (n_cells, 3, 8) producing [e11, e22, 2 e12]
    """
    dn = _shape_gradients(xi, eta)
    jac = np.einsum("an,enb->eab", dn, coords)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0):
        raise MeshQualityError(f"element Jacobian {np.min(det):.3g} <= 0")
    inv = np.stack([
        np.stack([jac[:, 1, 1], -jac[:, 0, 1]], axis=-1),
        np.stack([-jac[:, 1, 0], jac[:, 0, 0]], axis=-1),
    ], axis=-2) / det[:, None, None]
    grad = np.einsum("eab,bn->ean", inv, dn)
    b = np.zeros((coords.shape[0], 3, 8))
    b[:, 0, 0::2] = grad[:, 0]
    b[:, 1, 1::2] = grad[:, 1]
    b[:, 2, 0::2] = grad[:, 1]
    b[:, 2, 1::2] = grad[:, 0]
    return b, det


@dataclass(frozen=True, eq=False)
class ElasticSolution:
    """
    Discrete elastic equilibrium of the film.

    Attributes:
        mesh (StripMesh): Mesh the solution lives on
        material (LameMaterial): Lame coefficients
        e0 (float): Mismatch strain
        displacement (np.ndarray): (n_nodes, 2) total displacement u
        top_density (np.ndarray): Q(E(u)) at the top nodes (nx values)
        energy (float): Quadrature value of the integral of Q(E(u))
        energy_stiffness (float): Same energy from the stiffness form
        residual (float): Relative residual of the reduced linear system
    """

    mesh: StripMesh
    material: LameMaterial
    e0: float
    displacement: np.ndarray = field(repr=False)
    top_density: np.ndarray = field(repr=False)
    energy: float
    energy_stiffness: float
    residual: float

    def to_json(self) -> Dict[str, Any]:
        return {
            "ell": self.mesh.ell,
            "nx": self.mesh.nx,
            "ny": self.mesh.ny,
            "e0": self.e0,
            "mu": self.material.mu,
            "lambda": self.material.lam,
            "energy": self.energy,
            "nodes": self.mesh.nodes.tolist(),
            "cells": self.mesh.cells.tolist(),
            "u": self.displacement.tolist(),
        }

    def dump(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")


def _element_dofs(cells: np.ndarray) -> np.ndarray:
    dofs = np.empty((cells.shape[0], 8), dtype=np.int64)
    dofs[:, 0::2] = 2 * cells
    dofs[:, 1::2] = 2 * cells + 1
    return dofs


def _total_strain(b: np.ndarray, ue: np.ndarray, e0: float):
    eps = np.einsum("eki,ei->ek", b, ue)
    return eps[:, 0] + e0, eps[:, 1], 0.5 * eps[:, 2]


def _element_kernels(coords: np.ndarray, stiffness: np.ndarray, prestress: np.ndarray):
    """Element stiffness (n_cells, 8, 8), eigen-stress load (n_cells, 8) and the Gauss-point operators."""
    ke = np.zeros((coords.shape[0], 8, 8))
    fe = np.zeros((coords.shape[0], 8))
    operators = []
    for xi, eta in GAUSS_POINTS:
        b, det = _strain_operator(coords, xi, eta)
        bt = np.swapaxes(b, 1, 2)
        ke += bt @ (stiffness @ b) * det[:, None, None]
        fe -= (bt @ prestress) * det[:, None]
        operators.append((b, det))
    return ke, fe, operators


@dataclass(frozen=True, eq=False)
class _ReducedPattern:
    """CSC sparsity of the stiffness restricted to the dofs above the substrate."""

    size: int
    indices: np.ndarray = field(repr=False)
    indptr: np.ndarray = field(repr=False)
    keep: np.ndarray = field(repr=False)
    slots: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, dofs: np.ndarray, n_fixed: int, n_dof: int) -> "_ReducedPattern":
        size = n_dof - n_fixed
        rows = np.broadcast_to(dofs[:, :, None], (dofs.shape[0], 8, 8)).ravel() - n_fixed
        cols = np.broadcast_to(dofs[:, None, :], (dofs.shape[0], 8, 8)).ravel() - n_fixed
        keep = np.flatnonzero((rows >= 0) & (cols >= 0))
        rows, cols = rows[keep], cols[keep]
        pattern = sp.csc_matrix((np.ones(keep.size), (rows, cols)), shape=(size, size))
        pattern.sum_duplicates()
        pattern.sort_indices()
        columns = np.repeat(np.arange(size, dtype=np.int64), np.diff(pattern.indptr))
        keys = columns * size + pattern.indices
        slots = np.searchsorted(keys, cols.astype(np.int64) * size + rows)
        return cls(size, pattern.indices.copy(), pattern.indptr.copy(), keep, slots)

    def assemble(self, ke: np.ndarray) -> sp.csc_matrix:
        data = np.bincount(self.slots, weights=ke.ravel()[self.keep], minlength=self.indices.size)
        return sp.csc_matrix((data, self.indices, self.indptr), shape=(self.size, self.size))


class FilmSolver:
    """
    Repeated film solves for one material, mismatch and mesh resolution.

    The sparsity pattern is built once per mesh topology. The last LU
    factorization is kept and used with iterative refinement for the next
    profile; it is refreshed when refinement stalls or misses ``refine_tol``.
    A profile identical to the previous one returns the previous solution.
    """

    def __init__(self, material: LameMaterial, e0: float, nx: Optional[int] = None, ny: int = 32,
                 refine_tol: float = 1e-12, max_refine: int = 6):
        self.material = material
        self.e0 = e0
        self.nx = nx
        self.ny = ny
        self.refine_tol = refine_tol
        self.max_refine = max_refine
        self.factorizations = 0
        self._pattern: Optional[_ReducedPattern] = None
        self._topology: Optional[Tuple[float, int, int]] = None
        self._lu = None
        self._last: Optional[Tuple[np.ndarray, ElasticSolution]] = None

    def _factorize(self, matrix: sp.csc_matrix):
        try:
            self._lu = spla.splu(matrix, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as e:
            self._lu = None
            raise SingularSystemError(f"film stiffness factorization failed: {e}") from e
        self.factorizations += 1

    def _refine(self, matrix: sp.csc_matrix, rhs: np.ndarray, rhs_norm: float) -> Optional[np.ndarray]:
        w = self._lu.solve(rhs)
        previous = np.inf
        for _ in range(self.max_refine):
            r = rhs - matrix @ w
            norm = float(np.linalg.norm(r))
            if norm <= self.refine_tol * rhs_norm:
                return w
            if norm > 0.5 * previous:
                break
            previous = norm
            w = w + self._lu.solve(r)
        return None

    def _solve_reduced(self, matrix: sp.csc_matrix, rhs: np.ndarray) -> np.ndarray:
        rhs_norm = float(np.linalg.norm(rhs))
        if rhs_norm == 0.0:
            return np.zeros_like(rhs)
        if self._lu is not None:
            w = self._refine(matrix, rhs, rhs_norm)
            if w is not None:
                return w
            logger.debug("stale film factorization did not converge, refactoring")
        self._factorize(matrix)
        return self._lu.solve(rhs)

    def solve(self, h: HeightField) -> ElasticSolution:
        """Elastic equilibrium below the graph of h; see ``solve_film``."""
        last = self._last
        if last is not None and last[1].mesh.ell == h.curve.period and np.array_equal(last[0], h.values):
            return last[1]
        nx = h.curve.n if self.nx is None else int(self.nx)
        mesh = StripMesh.over(h, nx, self.ny)
        coords = mesh.element_coordinates()
        dofs = _element_dofs(mesh.cells)
        n_dof = 2 * mesh.n_nodes
        material, e0 = self.material, self.e0
        stiffness = material.voigt
        ke, fe, operators = _element_kernels(coords, stiffness, stiffness @ np.array([e0, 0.0, 0.0]))

        # Substrate row carries w = 0
        topology = (mesh.ell, nx, self.ny)
        if topology != self._topology:
            self._pattern = _ReducedPattern.build(dofs, 2 * nx, n_dof)
            self._topology = topology
            self._lu = None
        reduced = self._pattern.assemble(ke)
        rhs = np.bincount(dofs.ravel(), weights=fe.ravel(), minlength=n_dof)[2 * nx:]
        w = np.zeros(n_dof)
        w[2 * nx:] = self._solve_reduced(reduced, rhs)
        rhs_norm = float(np.linalg.norm(rhs))
        residual = float(np.linalg.norm(reduced @ w[2 * nx:] - rhs)) / rhs_norm if rhs_norm > 0 else 0.0

        ue = w[dofs]
        energy = 0.0
        area = 0.0
        for b, det in operators:
            e11, e22, e12 = _total_strain(b, ue, e0)
            energy += float(np.sum(material.energy_density(e11, e22, e12) * det))
            area += float(np.sum(det))
        base_density = (material.mu + 0.5 * material.lam) * e0 ** 2
        energy_stiffness = area * base_density - 0.5 * float(rhs @ w[2 * nx:])

        top_density = _top_density(mesh, coords, ue, material, e0)
        nodes = mesh.nodes
        displacement = w.reshape(-1, 2) + np.stack([e0 * nodes[:, 0], np.zeros(mesh.n_nodes)], axis=-1)
        logger.debug(f"film solve nx={nx} ny={self.ny}: W={energy:.12g}, residual={residual:.2e}")
        solution = ElasticSolution(mesh, material, e0, displacement, top_density, energy, energy_stiffness, residual)
        self._last = (np.array(h.values), solution)
        return solution


def solve_film(h: HeightField, material: LameMaterial, e0: float, nx: Optional[int] = None,
               ny: int = 32) -> ElasticSolution:
    """
    Elastic equilibrium in the film below the graph of h.

    Solves div C E(u) = 0 with u(x1, 0) = e0 (x1, 0), a traction-free top and
    x1-periodic gradient, using bilinear elements and 2x2 Gauss quadrature.
    Use a ``FilmSolver`` to reuse the factorization across nearby profiles.

    Args:
        h (HeightField): Film profile over a periodic graph reference (h > 0)
        material (LameMaterial): Lame coefficients
        e0 (float): Mismatch strain
        nx (Optional[int]): Element columns, a multiple of the height grid size (default: equal)
        ny (int): Element layers through the thickness

    Returns:
        ElasticSolution
    """
    return FilmSolver(material, e0, nx, ny).solve(h)


def _top_density(mesh: StripMesh, coords: np.ndarray, ue: np.ndarray, material: LameMaterial,
                 e0: float) -> np.ndarray:
    """Q(E(u)) at the top nodes from the strain averaged over the two adjacent top elements."""
    top = slice((mesh.ny - 1) * mesh.nx, mesh.ny * mesh.nx)
    coords, ue = coords[top], ue[top]
    strains = np.zeros((mesh.nx, 3))
    # Corner 3 of element i is node i, corner 2 is node i+1
    for corner, shift in ((3, 0), (2, 1)):
        b, _ = _strain_operator(coords, *CORNERS[corner])
        e11, e22, e12 = _total_strain(b, ue, e0)
        strains[(np.arange(mesh.nx) + shift) % mesh.nx] += 0.5 * np.stack([e11, e22, e12], axis=-1)
    return material.energy_density(strains[:, 0], strains[:, 1], strains[:, 2])


def boundary_Q_trace(solution: ElasticSolution, target: HeightField,
                     cutoff: Optional[int] = None) -> np.ndarray:
    """
    Q(E(u)) on the free surface, sampled on the height grid.

    Args:
        solution (ElasticSolution): Equilibrium computed over ``target``
        target (HeightField): Profile whose grid receives the trace
        cutoff (Optional[int]): Highest Fourier mode kept; ``None`` keeps everything

    Returns:
        Trace values at the N grid nodes
    """
    n = target.curve.n
    nx = solution.mesh.nx
    if nx % n:
        raise ValueError(f"mesh with nx={nx} is not compatible with a grid of {n} nodes")
    trace = solution.top_density
    if cutoff is not None:
        trace = spectral.lowpass(trace, cutoff)
    return np.asarray(trace[::nx // n], dtype=float)


def _c1_norm(f: np.ndarray, period: float) -> float:
    return float(np.max(np.abs(f)) + np.max(np.abs(spectral.derivative(f, period))))


def trace_lipschitz_probe(h1: HeightField, h2: HeightField, material: LameMaterial, e0: float,
                          nx: Optional[int] = None, ny: int = 32,
                          cutoff: Optional[int] = None) -> float:
    """
    Observed ratio ||q1 - q2||_inf / ||h1 - h2||_C1 of elastic traces.

    Returns 0 when the two profiles coincide.
    """
    diff = h1.values - h2.values
    denominator = _c1_norm(diff, h1.curve.period)
    if denominator == 0.0:
        return 0.0
    solver = FilmSolver(material, e0, nx, ny)
    q1 = boundary_Q_trace(solver.solve(h1), h1, cutoff)
    q2 = boundary_Q_trace(solver.solve(h2), h2, cutoff)
    return float(np.max(np.abs(q1 - q2))) / denominator
