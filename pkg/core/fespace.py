"""
Tensor-product finite element space per time slab: continuous P^k_s Lagrange
elements in space times P^k_t Lagrange polynomials in time, discontinuous
across slabs and restricted to the active elements.

Slab unknowns are ordered spatial-major, temporal-minor:
unknown = active_dof_index * (k_t + 1) + temporal_mode.
"""
import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from core.basis import IntervalLagrange, TriangleLagrange, interval_basis, triangle_basis
from core.exceptions import GeometryError, SpaceError
from core.levelset import SlabGeometry, TimePartition
from core.mesh import Mesh

DERIVATIVES = ("value", "grad_x", "dt", "grad_x_dt")


class DofMap:
    """Global continuous P^k dof numbering on the whole background mesh."""

    def __init__(self, mesh: Mesh, k_s: int):
        self.mesh = mesh
        self.k_s = k_s
        self.basis: TriangleLagrange = triangle_basis(k_s)
        self.cache: Dict[str, object] = {}

        nb = self.basis.n_basis
        element_dofs = np.empty((mesh.n_elements, nb), dtype=np.int64)
        element_dofs[:, :3] = mesh.elements
        next_id = mesh.n_vertices
        numbering: Dict[tuple, int] = {}
        lattice = self.basis.lattice[3:]
        for e, verts in enumerate(mesh.elements):
            for j, counts in enumerate(lattice, start=3):
                key = tuple(sorted((int(verts[i]), c) for i, c in enumerate(counts) if c > 0))
                dof = numbering.get(key)
                if dof is None:
                    dof = next_id
                    numbering[key] = dof
                    next_id += 1
                element_dofs[e, j] = dof
        self.element_dofs = element_dofs
        self.n_dofs = next_id

        coords = np.empty((self.n_dofs, 2))
        points = mesh.physical_points(np.arange(mesh.n_elements),
                                      np.broadcast_to(self.basis.nodes, (mesh.n_elements, nb, 2)))
        coords[element_dofs.ravel()] = points.reshape(-1, 2)
        self.coordinates = coords

    def physical_gradients(self, elements: np.ndarray, ref_grads: np.ndarray) -> np.ndarray:
        """Map reference gradients (E, P, nb, 2) to physical ones through J^{-T}."""
        return np.einsum("eji,epbj->epbi", self.mesh.inv_jac[elements], ref_grads)


class SlabSpace:
    def __init__(self, dofmap: DofMap, geometry: SlabGeometry, k_t: int):
        """
        Space of slab n restricted to the active elements of `geometry`.

        Args:
            dofmap (DofMap): spatial numbering shared by all slabs
            geometry (SlabGeometry): classification of the slab
            k_t (int): temporal order
        """
        if k_t < 1:
            raise SpaceError(f"temporal order must be >= 1, got {k_t}")
        self.logger = logging.getLogger(self.__class__.__name__)
        self.dofmap = dofmap
        self.mesh = dofmap.mesh
        self.geometry = geometry
        self.k_s = dofmap.k_s
        self.k_t = k_t
        self.n = geometry.n
        ls = geometry.levelset
        self.t_start, self.t_end, self.dt = ls.t_start, ls.t_end, ls.dt
        self.spatial = dofmap.basis
        self.temporal: IntervalLagrange = interval_basis(k_t)
        self.nt = k_t + 1

        if len(geometry.active_elements) == 0:
            raise SpaceError("empty slab space")
        active_dofs = np.unique(dofmap.element_dofs[geometry.active_elements])
        self.active_dofs = active_dofs
        self.act_index = np.full(dofmap.n_dofs, -1, dtype=np.int64)
        self.act_index[active_dofs] = np.arange(len(active_dofs))
        self.n_active_dofs = len(active_dofs)
        self.n_unknowns = self.n_active_dofs * self.nt
        self.logger.debug(f"Slab {self.n}: {self.n_active_dofs} active spatial dofs, {self.n_unknowns} unknowns")

    def node_times(self) -> np.ndarray:
        times = self.t_start + self.dt * self.temporal.nodes
        times[0], times[-1] = self.t_start, self.t_end
        return times

    def reference_time(self, t: float) -> float:
        if t == self.t_start:
            return 0.0
        if t == self.t_end:
            return 1.0
        tol = 1e-12 * max(1.0, abs(self.t_end))
        if t < self.t_start - tol or t > self.t_end + tol:
            raise GeometryError(f"time {t} outside slab {self.n} [{self.t_start}, {self.t_end}]")
        return min(max((t - self.t_start) / self.dt, 0.0), 1.0)

    def local_indices(self, elements: np.ndarray) -> np.ndarray:
        """Active spatial indices (E, nb) of the elements' dofs; raises on inactive elements."""
        elements = np.asarray(elements, dtype=np.int64)
        if not np.all(self.geometry.active[elements]):
            bad = elements[~self.geometry.active[elements]]
            raise SpaceError(f"element {int(bad[0])} is not active in slab {self.n}")
        return self.act_index[self.dofmap.element_dofs[elements]]

    def unknowns(self, elements: np.ndarray) -> np.ndarray:
        """Slab unknown indices (E, nb * nt) supported on the elements."""
        local = self.local_indices(elements)
        return (local[:, :, None] * self.nt + np.arange(self.nt)).reshape(len(local), -1)

    def spatial_values(self, elements: np.ndarray, xi: np.ndarray, derivative: str = "value") -> np.ndarray:
        """Spatial shape values (E, P, nb) or physical gradients (E, P, nb, 2)."""
        if derivative == "value":
            return self.spatial.values(xi)
        return self.dofmap.physical_gradients(elements, self.spatial.gradients(xi))

    def eval_basis(self, e: int, x_ref, t: float, derivative: str = "value") -> Tuple[np.ndarray, np.ndarray]:
        """
        Basis functions of the unknowns supported on element e at one point.

        Returns:
            Tuple[np.ndarray, np.ndarray]: unknown indices (nb*nt,) and values,
            shape (nb*nt,) or (nb*nt, 2) for gradients
        """
        if derivative not in DERIVATIVES:
            raise SpaceError(f"unknown derivative '{derivative}', expected one of {DERIVATIVES}")
        idx = self.unknowns(np.array([e]))[0]
        xi = np.asarray(x_ref, dtype=float).reshape(1, 1, 2)
        s = self.reference_time(t)
        ell = self.temporal.values(s)
        dell = self.temporal.derivatives(s) / self.dt
        time_part = dell if derivative in ("dt", "grad_x_dt") else ell
        if derivative in ("value", "dt"):
            space_part = self.spatial_values(np.array([e]), xi, "value")[0, 0]
            return idx, np.outer(space_part, time_part).ravel()
        grads = self.spatial_values(np.array([e]), xi, "grad")[0, 0]
        return idx, np.einsum("bi,m->bmi", grads, time_part).reshape(-1, 2)

    def interpolate(self, f: Callable) -> np.ndarray:
        """Nodal interpolation of f(x, y, t) at (spatial Lagrange node, temporal node) pairs."""
        coords = self.dofmap.coordinates[self.active_dofs]
        values = np.empty((self.n_active_dofs, self.nt))
        for m, t in enumerate(self.node_times()):
            values[:, m] = np.broadcast_to(np.asarray(f(coords[:, 0], coords[:, 1], float(t)), dtype=float),
                                           (self.n_active_dofs,))
        return values.ravel()

    def constant(self, value: float = 1.0) -> np.ndarray:
        return np.full(self.n_unknowns, float(value))


def build_slab_space(mesh: Mesh, geometry: SlabGeometry, k_s: int, k_t: int,
                     partition: Optional[TimePartition] = None, n: Optional[int] = None,
                     dofmap: Optional[DofMap] = None) -> SlabSpace:
    """Slab space on `geometry`; pass the march's dofmap to share the spatial numbering."""
    if dofmap is None:
        dofmap = DofMap(mesh, k_s)
    elif dofmap.mesh is not mesh or dofmap.k_s != k_s:
        raise SpaceError(f"dof map is for P{dofmap.k_s} on another mesh")
    if n is not None and n != geometry.n:
        raise GeometryError(f"geometry belongs to slab {geometry.n}, not slab {n}")
    if partition is not None and partition is not geometry.levelset.partition:
        ls = geometry.levelset
        if partition.slab(geometry.n) != (ls.t_start, ls.t_end):
            raise GeometryError(f"slab {geometry.n} interval does not match the partition")
    return SlabSpace(dofmap, geometry, k_t)


class SlabSolution:
    """Coefficients of one slab together with the space they live in."""

    def __init__(self, space: SlabSpace, coefficients: np.ndarray, quadrature=None):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.n_unknowns,):
            raise SpaceError(f"expected {space.n_unknowns} coefficients, got {coefficients.shape}")
        self.space = space
        self.coefficients = coefficients
        self.quadrature = quadrature

    @property
    def n(self) -> int:
        return self.space.n

    def nodal(self) -> np.ndarray:
        """Coefficients as (n_active_dofs, nt)."""
        return self.coefficients.reshape(self.space.n_active_dofs, self.space.nt)

    def spatial_coefficients(self, s: float, derivative: bool = False) -> np.ndarray:
        """Spatial coefficient vector at reference time s (or of the time derivative)."""
        if derivative:
            return self.nodal() @ (self.space.temporal.derivatives(s) / self.space.dt)
        return self.nodal() @ self.space.temporal.values(s)

    def evaluate(self, elements: np.ndarray, xi: np.ndarray, s: float, derivative: str = "value") -> np.ndarray:
        """
        Evaluate at reference points xi (E, P, 2) of active elements at reference time s.

        Returns (E, P) for 'value' and 'dt', (E, P, 2) for 'grad_x' and 'grad_x_dt'.
        """
        local = self.space.local_indices(elements)
        coeffs = self.spatial_coefficients(s, derivative=derivative in ("dt", "grad_x_dt"))[local]
        if derivative in ("value", "dt"):
            return np.einsum("epb,eb->ep", self.space.spatial.values(xi), coeffs)
        grads = self.space.spatial_values(elements, xi, "grad")
        return np.einsum("epbi,eb->epi", grads, coeffs)

    def evaluate_batch(self, batch, derivative: str = "value") -> np.ndarray:
        return self.evaluate(batch.elements, batch.xi, batch.s, derivative)


class SolutionField:
    """Discrete space-time solution: one SlabSolution per slab."""

    def __init__(self, partition: TimePartition, slabs: Optional[List[SlabSolution]] = None):
        self.partition = partition
        self.slabs: List[SlabSolution] = list(slabs or [])

    def append(self, slab: SlabSolution) -> None:
        self.slabs.append(slab)

    def slab(self, n: int) -> SlabSolution:
        return self.slabs[n - 1]

    @property
    def mesh(self) -> Mesh:
        return self.slabs[0].space.mesh

    def evaluate_points(self, points: np.ndarray, t: float, side: str = "left") -> Tuple[np.ndarray, np.ndarray]:
        """
        Evaluate at physical points at time t. At slab boundaries `side`
        selects the left or right limit.

        Returns:
            Tuple[np.ndarray, np.ndarray]: values (NaN where undefined) and a
            mask of points inside the discrete domain Omega^h(t)
        """
        n = self.partition.slab_of(t, side)
        slab = self.slab(n)
        space = slab.space
        elements, xi = self.mesh.locate_points(points)
        values = np.full(len(elements), np.nan)
        ok = elements >= 0
        ok[ok] = space.geometry.active[elements[ok]]
        if np.any(ok):
            values[ok] = slab.evaluate(elements[ok], xi[ok][:, None, :], space.reference_time(t))[:, 0]

        inside = np.zeros(len(elements), dtype=bool)
        located = elements >= 0
        if np.any(located):
            ls = space.geometry.levelset
            lam = np.column_stack([1.0 - xi[located, 0] - xi[located, 1], xi[located, 0], xi[located, 1]])
            phi = np.einsum("pi,pi->p", lam, ls.vertex_values(t)[self.mesh.elements[elements[located]]])
            inside[located] = phi <= 0.0
        return values, inside
