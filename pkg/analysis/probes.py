"""
Numerical probes of the discrete stability inequalities.

Each probe draws random coefficient vectors (entries uniform in [-1, 1],
seeded) on every slab of a refinement sequence and records the largest
observed ratio LHS / RHS per level. A probe fails when that ratio grows by
more than `growth_factor` between the coarsest and the finest level.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp

from analysis.operators import discrete_material_derivative, gather_elementwise, oswald_project, time_project
from cases import get_case
from core.fespace import DofMap, SlabSolution, SlabSpace
from core.forms import PatchJumps, assemble_J, ghost_penalty_spatial, spatial_mass, spatial_stiffness
from core.levelset import TimePartition
from core.mesh import Mesh, build_structured_mesh
from core.quadrature import QuadratureConfig, SlabQuadrature, full_batch, interface_batches, triangle_rule
from core.solver import SlabProblem, prepare_slab

PROBES = ("gp_extension", "temporal_inverse", "spatial_inverse", "time_trace", "special_trace",
          "commutator", "oswald", "material_derivative")
GEOMETRIES = ("case", "sliver")
COMMUTATOR_RATE = 1.0

logger = logging.getLogger(__name__)


@dataclass
class ProbeRow:
    level: int
    h: float
    dt: float
    ratio: float
    slabs: int
    samples: int


@dataclass
class ProbeReport:
    name: str
    geometry: str
    gamma_j: float
    growth_factor: float
    rows: List[ProbeRow] = field(default_factory=list)

    @property
    def ratios(self) -> List[float]:
        return [r.ratio for r in self.rows]

    @property
    def growth(self) -> float:
        ratios = self.ratios
        if len(ratios) < 2:
            return float("nan")
        if ratios[0] <= 0:
            return 0.0 if ratios[-1] <= 0 else float("inf")
        return ratios[-1] / ratios[0]

    @property
    def status(self) -> str:
        growth = self.growth
        if math.isnan(growth):
            return "PASS"
        return "FAIL" if growth > self.growth_factor else "PASS"

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(r) for r in self.rows])
        frame.insert(0, "probe", self.name)
        return frame

    def to_dict(self) -> Dict:
        return {"name": self.name, "geometry": self.geometry, "gamma_j": self.gamma_j,
                "growth_factor": self.growth_factor, "growth": self.growth, "status": self.status,
                "rows": [asdict(r) for r in self.rows]}


def _quadratic(matrix: sp.spmatrix, samples: np.ndarray) -> np.ndarray:
    return np.einsum("si,si->s", samples, (matrix @ samples.T).T)


def _max_ratio(lhs: np.ndarray, rhs: np.ndarray) -> float:
    ok = rhs > 0
    if not np.any(ok):
        return 0.0 if np.all(lhs <= 0) else float("inf")
    return float(np.max(lhs[ok] / rhs[ok]))


class SlabOperators:
    """Quadratic-form matrices of one slab shared by the probes."""

    def __init__(self, space: SlabSpace, quadrature: SlabQuadrature, gamma_j: float, j_scaling: int):
        self.space = space
        self.quadrature = quadrature
        self.gamma_j = gamma_j
        self.j_scaling = j_scaling
        self.h = space.mesh.h_max
        temporal = space.temporal
        dt = space.dt
        n = space.n_unknowns
        self.mass_q = []
        mass = sp.csr_matrix((n, n))
        for s, tau, batches in zip(quadrature.time_points, quadrature.time_weights, quadrature.volume):
            m = spatial_mass(space, batches)
            self.mass_q.append(m)
            ell = temporal.values(s)
            mass = mass + tau * sp.kron(m, np.outer(ell, ell))
        self.mass = mass.tocsr()
        self.jump_raw = sp.kron(ghost_penalty_spatial(space), dt * temporal.mass).tocsr()

    def stabilised_mass(self) -> sp.csr_matrix:
        """||u||^2_Q + h^{-j} J(u, u) = ||u||^2_Q + gamma_J sum_F int [u]^2."""
        return (self.mass + self.gamma_j * self.jump_raw).tocsr()

    def extended_mass(self) -> sp.csr_matrix:
        space = self.space
        batch = full_batch(space.mesh, space.geometry.active_elements, 2 * space.k_s, space.t_start, 0.0)
        return sp.kron(spatial_mass(space, [batch]), space.dt * space.temporal.mass).tocsr()

    def time_derivative(self) -> sp.csr_matrix:
        temporal = self.space.temporal
        n = self.space.n_unknowns
        total = sp.csr_matrix((n, n))
        for m, s, tau in zip(self.mass_q, self.quadrature.time_points, self.quadrature.time_weights):
            dell = temporal.derivatives(s) / self.space.dt
            total = total + tau * sp.kron(m, np.outer(dell, dell))
        return total.tocsr()

    def gradient(self) -> sp.csr_matrix:
        temporal = self.space.temporal
        n = self.space.n_unknowns
        total = sp.csr_matrix((n, n))
        for s, tau, batches in zip(self.quadrature.time_points, self.quadrature.time_weights, self.quadrature.volume):
            ell = temporal.values(s)
            total = total + tau * sp.kron(spatial_stiffness(self.space, batches), np.outer(ell, ell))
        return total.tocsr()

    def start_trace(self) -> sp.csr_matrix:
        ell = self.space.temporal.values(0.0)
        return sp.kron(spatial_mass(self.space, self.quadrature.start), np.outer(ell, ell)).tocsr()

    def boundary_trace(self) -> sp.csr_matrix:
        """int_{I_n} int_{boundary of Omega^h(t)} u v, on the straight interface segments."""
        space = self.space
        temporal = space.temporal
        ls = space.geometry.levelset
        n = space.n_unknowns
        total = sp.csr_matrix((n, n))
        for s, tau, t in zip(self.quadrature.time_points, self.quadrature.time_weights, self.quadrature.times):
            batches = interface_batches(space.mesh, ls, float(t), space.k_s + 1, space.geometry.active_elements)
            if not batches:
                continue
            ell = temporal.values(s)
            total = total + tau * sp.kron(spatial_mass(space, batches), np.outer(ell, ell))
        return total.tocsr()


def _quadratic_probe(name: str, ops: SlabOperators, samples: np.ndarray) -> float:
    space = ops.space
    rhs_matrix = ops.stabilised_mass()
    if name == "gp_extension":
        lhs_matrix = ops.extended_mass()
    elif name == "temporal_inverse":
        lhs_matrix = space.dt ** 2 * ops.time_derivative()
    elif name == "spatial_inverse":
        lhs_matrix = ops.h ** 2 * ops.gradient()
    elif name == "time_trace":
        lhs_matrix = space.dt * ops.start_trace()
    elif name == "special_trace":
        lhs_matrix = ops.h * ops.boundary_trace()
    else:
        raise ValueError(f"'{name}' is not a quadratic-form probe")
    return _max_ratio(_quadratic(lhs_matrix, samples), _quadratic(rhs_matrix, samples))


def _commutator_probe(ops: SlabOperators, samples: np.ndarray) -> float:
    """||u e^{-t} - Pi(u e^{-t})||^2_Q / (dt^2 ||u||^2_Q)."""
    space = ops.space
    temporal = space.temporal
    norms = _quadratic(ops.mass, samples)
    errors = np.zeros(len(samples))
    for k, u in enumerate(samples):
        nodal = u.reshape(space.n_active_dofs, space.nt)

        def weighted(t):
            s = (t - space.t_start) / space.dt
            return np.exp(-COMMUTATOR_RATE * t) * (nodal @ temporal.values(s))

        projected = time_project(space, weighted)
        for m, s, tau, t in zip(ops.mass_q, ops.quadrature.time_points, ops.quadrature.time_weights,
                                ops.quadrature.times):
            diff = weighted(float(t)) - projected @ temporal.values(s)
            errors[k] += tau * float(diff @ (m @ diff))
    return _max_ratio(errors, space.dt ** 2 * norms)


def _oswald_probe(ops: SlabOperators, rng: np.random.Generator, n_samples: int) -> float:
    """||v - Oswald(v)||^2 on the active elements against h J(v, v) for elementwise polynomials v."""
    space = ops.space
    mesh = space.mesh
    elements = space.geometry.active_elements
    nb = space.spatial.n_basis
    xi_ref, w_ref = triangle_rule(2 * space.k_s)
    psi = space.spatial.values(xi_ref)
    reference_mass = np.einsum("p,pa,pb->ab", w_ref, psi, psi)
    element_mass = mesh.det[elements][:, None, None] * reference_mass

    patches = PatchJumps.for_dofmap(space.dofmap)
    facets = space.geometry.ghost_facets
    position = np.full(mesh.n_elements, -1, dtype=np.int64)
    position[elements] = np.arange(len(elements))
    first = position[mesh.interior_patches[facets, 0]]
    second = position[mesh.interior_patches[facets, 1]]
    scale = ops.h * ops.gamma_j * ops.h ** ops.j_scaling

    lhs = np.zeros(n_samples)
    rhs = np.zeros(n_samples)
    for k in range(n_samples):
        v = rng.uniform(-1.0, 1.0, (len(elements), nb))
        d = v - gather_elementwise(space, oswald_project(space, v))
        lhs[k] = float(np.einsum("ea,eab,eb->", d, element_mass, d))
        z = np.concatenate([v[first], v[second]], axis=1)
        rhs[k] = scale * float(np.einsum("fa,fab,fb->", z, patches.matrices[facets], z))
    return _max_ratio(lhs, rhs)


def _material_derivative_probe(ops: SlabOperators, samples: np.ndarray, w: Callable) -> float:
    """h ||D_t u - D_t^h u||^2_Q against ||u||^2_Q + J(u, u)."""
    space = ops.space
    mesh = space.mesh
    rhs = _quadratic(ops.mass + assemble_J(space, ops.gamma_j, ops.j_scaling), samples)
    lhs = np.zeros(len(samples))
    for k, u in enumerate(samples):
        solution = SlabSolution(space, u, ops.quadrature)
        discrete = discrete_material_derivative(solution, w)
        for batch in ops.quadrature.volume_batches():
            x = batch.points(mesh)
            wx, wy = w(x[..., 0], x[..., 1], batch.t)
            grad = solution.evaluate_batch(batch, "grad_x")
            exact = solution.evaluate_batch(batch, "dt") + wx * grad[..., 0] + wy * grad[..., 1]
            diff = exact - discrete.evaluate_batch(batch)
            lhs[k] += batch.time_weight * float(np.sum(batch.weights * diff ** 2))
    return _max_ratio(ops.h * lhs, rhs)


def _sliver_setup(level: int, split: str) -> Tuple[Mesh, TimePartition, Callable]:
    mesh = build_structured_mesh((0.0, 1.0, 0.0, 1.0), 0.25 * 0.5 ** level, split)
    cell = (mesh.box[1] - mesh.box[0]) / mesh.cells[0]
    c = cell * 10.0 ** (-(level + 1))

    def phi(x, y, t):
        return x - c

    return mesh, TimePartition(0.0, mesh.h_max, 1), phi


def inequality_probe(name: str, levels: Sequence[int], samples: int = 50, gamma_j: float = 0.05,
                     j_scaling: int = -1, seed: int = 0, growth_factor: float = 3.0,
                     case_name: str = "expanding_circle", geometry: str = "case", k_s: int = 2, k_t: int = 2,
                     q_t: int = 1, mesh_split: str = "criss_cross",
                     quadrature: Optional[QuadratureConfig] = None) -> ProbeReport:
    """
    Run one probe over a refinement sequence.

    Args:
        name (str): one of PROBES
        levels (Sequence[int]): refinement levels i
        samples (int): random coefficient vectors per slab
        gamma_j (float): ghost penalty weight; 0 removes the penalty (negative control)
        geometry (str): 'case' for the case's moving domain, 'sliver' for a straight
            cut x < c on the unit square with c shrinking tenfold per level

    Returns:
        ProbeReport: per-level maximal ratios and the PASS/FAIL verdict
    """
    if name not in PROBES:
        raise ValueError(f"unknown probe '{name}', expected one of {PROBES}")
    if geometry not in GEOMETRIES:
        raise ValueError(f"unknown probe geometry '{geometry}', expected one of {GEOMETRIES}")
    if samples < 1:
        raise ValueError("probes need at least one sample")

    case = get_case(case_name)
    report = ProbeReport(name=name, geometry=geometry, gamma_j=gamma_j, growth_factor=growth_factor)
    rng = np.random.default_rng(seed)
    for level in levels:
        if geometry == "sliver":
            mesh, partition, phi = _sliver_setup(level, mesh_split)
        else:
            h, n_slabs = case.schedule(level)
            mesh = build_structured_mesh(case.box, h, mesh_split)
            partition = TimePartition(case.t0, case.T, n_slabs)
            phi = case.phi
        problem = SlabProblem(mesh=mesh, partition=partition, phi=phi, data=case.transport_data(),
                              k_s=k_s, k_t=k_t, q_t=q_t, gamma_j=gamma_j, j_scaling=j_scaling,
                              quadrature=quadrature, level=level)
        dofmap = DofMap(mesh, k_s)
        worst = 0.0
        for n in range(1, partition.N + 1):
            space, slab_quadrature = prepare_slab(problem, dofmap, n)
            ops = SlabOperators(space, slab_quadrature, gamma_j, j_scaling)
            if name == "oswald":
                ratio = _oswald_probe(ops, rng, samples)
            else:
                draws = rng.uniform(-1.0, 1.0, (samples, space.n_unknowns))
                if name == "commutator":
                    ratio = _commutator_probe(ops, draws)
                elif name == "material_derivative":
                    ratio = _material_derivative_probe(ops, draws, case.w)
                else:
                    ratio = _quadratic_probe(name, ops, draws)
            worst = max(worst, ratio)
        report.rows.append(ProbeRow(level=level, h=mesh.h_max, dt=partition.dt, ratio=worst,
                                    slabs=partition.N, samples=samples))
        logger.info(f"Probe {name} ({geometry}, gamma_J={gamma_j}) level {level}: max ratio {worst:.4e}")
    logger.info(f"Probe {name}: growth {report.growth:.3g} -> {report.status}")
    return report
