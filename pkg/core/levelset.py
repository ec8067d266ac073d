"""
Discrete space-time level set per time slab and the element classification
it induces.

A level set function is any callable phi(x, y, t) working on numpy arrays.
"""
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, List, Optional, Sequence

import numpy as np

from core.basis import gauss_legendre_unit, interval_basis
from core.exceptions import GeometryError
from core.mesh import Mesh

ScalarField = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

SNAP_TOLERANCE = 1e-14


class Region(IntEnum):
    NEG = -1
    CUT = 0
    POS = 1


class TimePartition:
    def __init__(self, t0: float, T: float, N: int):
        if N < 1:
            raise GeometryError(f"time partition needs at least one slab, got N={N}")
        if not T > t0:
            raise GeometryError(f"empty time interval [{t0}, {T}]")
        self.t0 = float(t0)
        self.T = float(T)
        self.N = int(N)
        self.dt = (self.T - self.t0) / self.N
        self.nodes = self.t0 + (self.T - self.t0) * np.arange(self.N + 1) / self.N
        self.nodes[-1] = self.T

    def slab(self, n: int):
        """Endpoints (t_{n-1}, t_n) of slab n, 1-based."""
        if n < 1 or n > self.N:
            raise GeometryError(f"slab {n} outside 1..{self.N}")
        return float(self.nodes[n - 1]), float(self.nodes[n])

    def slab_of(self, t: float, side: str = "left") -> int:
        """
        Slab containing t. At a slab boundary t_n, 'left' picks slab n and
        'right' picks slab n+1 (clamped to the partition).
        """
        if t < self.t0 - 1e-14 or t > self.T + 1e-14:
            raise GeometryError(f"time {t} outside [{self.t0}, {self.T}]")
        if side == "left":
            n = int(np.searchsorted(self.nodes, t, side="left"))
        else:
            n = int(np.searchsorted(self.nodes, t, side="right"))
        return min(max(n, 1), self.N)


class SlabLevelSet:
    def __init__(self, mesh: Mesh, partition: TimePartition, n: int, q_t: int, nodal_values: np.ndarray):
        if q_t < 1:
            raise GeometryError("unsupported temporal order")
        self.mesh = mesh
        self.partition = partition
        self.n = n
        self.q_t = q_t
        self.t_start, self.t_end = partition.slab(n)
        self.dt = self.t_end - self.t_start
        self.basis = interval_basis(q_t)
        self.nodal_values = np.asarray(nodal_values, dtype=float)
        self.nodal_values.setflags(write=False)
        if self.nodal_values.shape != (q_t + 1, mesh.n_vertices):
            raise GeometryError(
                f"nodal values have shape {self.nodal_values.shape}, expected {(q_t + 1, mesh.n_vertices)}"
            )

    def node_times(self) -> np.ndarray:
        times = self.t_start + self.dt * self.basis.nodes
        times[0] = self.t_start
        times[-1] = self.t_end
        return times

    def reference_time(self, t: float) -> float:
        if t < self.t_start - 1e-12 * max(1.0, abs(self.t_start)) or t > self.t_end + 1e-12 * max(1.0, abs(self.t_end)):
            raise GeometryError(f"time {t} outside slab {self.n} [{self.t_start}, {self.t_end}]")
        return min(max((t - self.t_start) / self.dt, 0.0), 1.0)

    def vertex_values(self, t: float, snap: bool = True) -> np.ndarray:
        """phi^lin at all vertices at time t, with tiny values snapped to zero."""
        if t == self.t_start:
            values = self.nodal_values[0].copy()
        elif t == self.t_end:
            values = self.nodal_values[-1].copy()
        else:
            s = self.reference_time(t)
            values = self.basis.values(s) @ self.nodal_values
        if snap:
            values[np.abs(values) < SNAP_TOLERANCE * self.local_scale(values)] = 0.0
        return values

    def local_scale(self, values: np.ndarray) -> np.ndarray:
        """Per vertex, the largest |phi^lin| over the elements sharing it."""
        elements = self.mesh.elements
        element_max = np.max(np.abs(values[elements]), axis=1)
        scale = np.zeros(len(values))
        np.maximum.at(scale, elements.ravel(), np.repeat(element_max, elements.shape[1]))
        return scale

    def vertex_time_derivatives(self, t: float) -> np.ndarray:
        s = self.reference_time(t)
        return self.basis.derivatives(s) @ self.nodal_values / self.dt

    def element_values(self, t: float) -> np.ndarray:
        """Vertex values per element, shape (n_elements, 3)."""
        return self.vertex_values(t)[self.mesh.elements]

    def eval_phi_lin(self, e: int, x_ref, t: float, want_time_derivative: bool = False):
        x_ref = np.asarray(x_ref, dtype=float)
        lam = np.stack([1.0 - x_ref[..., 0] - x_ref[..., 1], x_ref[..., 0], x_ref[..., 1]], axis=-1)
        vertices = self.mesh.elements[e]
        value = lam @ self.vertex_values(t, snap=False)[vertices]
        if not want_time_derivative:
            return value
        return value, lam @ self.vertex_time_derivatives(t)[vertices]


def sample_levelset(phi: ScalarField, mesh: Mesh, partition: TimePartition, n: int, q_t: int) -> SlabLevelSet:
    """Sample phi at the mesh vertices at the q_t+1 uniform temporal nodes of slab n."""
    if q_t < 1:
        raise GeometryError("unsupported temporal order")
    t_start, t_end = partition.slab(n)
    times = t_start + (t_end - t_start) * np.arange(q_t + 1) / q_t
    times[0] = t_start
    times[-1] = t_end
    x = mesh.vertices[:, 0]
    y = mesh.vertices[:, 1]
    values = np.stack([np.broadcast_to(np.asarray(phi(x, y, float(t)), dtype=float), x.shape) for t in times])
    return SlabLevelSet(mesh, partition, n, q_t, values)


@dataclass
class SlabGeometry:
    levelset: SlabLevelSet
    sample_times: np.ndarray
    marks: np.ndarray
    slab_marks: np.ndarray
    active: np.ndarray
    active_elements: np.ndarray
    ghost_facets: np.ndarray
    summary: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.levelset.n

    @property
    def mesh(self) -> Mesh:
        return self.levelset.mesh

    def marks_at(self, t: float) -> np.ndarray:
        """Element marks at an arbitrary time of the slab."""
        return element_marks(self.levelset.element_values(t))


def element_marks(element_values: np.ndarray) -> np.ndarray:
    neg = element_values <= 0.0
    marks = np.full(len(element_values), int(Region.CUT), dtype=np.int8)
    marks[np.all(neg, axis=1)] = int(Region.NEG)
    marks[~np.any(neg, axis=1)] = int(Region.POS)
    return marks


def default_sample_times(ls: SlabLevelSet, n_time_points: int) -> np.ndarray:
    """Slab endpoints plus the Gauss-Legendre times used by the space-time rules."""
    s, _ = gauss_legendre_unit(n_time_points)
    return np.concatenate([[ls.t_start], ls.t_start + s * ls.dt, [ls.t_end]])


def classify_slab(ls: SlabLevelSet, sample_times: Sequence[float]) -> SlabGeometry:
    sample_times = np.asarray(sorted(set(float(t) for t in sample_times)))
    if sample_times.size == 0:
        raise GeometryError("classification needs at least one sample time")
    mesh = ls.mesh
    marks = np.stack([element_marks(ls.element_values(t)) for t in sample_times])

    same = np.all(marks == marks[0], axis=0)
    slab_marks = np.where(same, marks[0], int(Region.CUT)).astype(np.int8)
    active = np.any(marks != int(Region.POS), axis=0)
    active_elements = np.flatnonzero(active)

    patches = mesh.interior_patches
    ghost = np.flatnonzero(active[patches[:, 0]] & active[patches[:, 1]])

    summary = {
        "slab": ls.n,
        "n_active": int(active.sum()),
        "n_cut": int(np.sum(slab_marks == int(Region.CUT))),
        "n_ghost_facets": int(len(ghost)),
        "sample_times": sample_times.tolist(),
    }
    logging.getLogger(__name__).debug(
        f"Slab {ls.n}: {summary['n_active']} active, {summary['n_cut']} cut, {summary['n_ghost_facets']} ghost facets"
    )
    return SlabGeometry(
        levelset=ls,
        sample_times=sample_times,
        marks=marks,
        slab_marks=slab_marks,
        active=active,
        active_elements=active_elements,
        ghost_facets=ghost,
        summary=summary,
    )


def sample_geometry_error(phi: ScalarField, mesh: Mesh, partition: TimePartition, q_t: int,
                          samples_per_edge: int = 6, n_time: int = 5, band: Optional[float] = 0.5,
                          cut_only: bool = True) -> float:
    """
    Sampled max |phi - phi^lin| over a barycentric lattice inside every
    element (so the sampling follows the mesh size) at n_time times per slab,
    at the same relative positions in every slab.

    Points with |phi| > band are skipped; None samples the whole box. With
    cut_only only elements cut by phi^lin at the sampled time count, which
    keeps kinks of phi away from the interface out of the measurement.
    """
    m = samples_per_edge
    lattice = np.array([(i / m, j / m) for i in range(m + 1) for j in range(m + 1 - i)])
    lam = np.stack([1.0 - lattice[:, 0] - lattice[:, 1], lattice[:, 0], lattice[:, 1]], axis=1)
    elements = np.arange(mesh.n_elements)
    points = mesh.physical_points(elements, np.broadcast_to(lattice, (mesh.n_elements,) + lattice.shape))
    rel = (np.arange(n_time) + 0.5) / n_time

    worst = 0.0
    for n in range(1, partition.N + 1):
        ls = sample_levelset(phi, mesh, partition, n, q_t)
        for s in rel:
            t = ls.t_start + s * ls.dt
            exact = np.broadcast_to(np.asarray(phi(points[..., 0], points[..., 1], t), dtype=float),
                                    points.shape[:-1])
            vertex = ls.vertex_values(t, snap=False)[mesh.elements]
            approx = vertex @ lam.T
            mask = np.ones(exact.shape, dtype=bool) if band is None else np.abs(exact) <= band
            if cut_only:
                mask &= (element_marks(vertex) == int(Region.CUT))[:, None]
            if np.any(mask):
                worst = max(worst, float(np.max(np.abs(exact - approx)[mask])))
    return worst
