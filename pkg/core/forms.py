"""
Slab system assembly.

Every slab operator is a sum of Kronecker products of a sparse spatial matrix
(assembled over rule batches at one time) and a small temporal matrix built
from the temporal Lagrange basis. Rows are test functions, columns trial
functions.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from core.basis import triangle_basis
from core.exceptions import GeometryError, SpaceError
from core.fespace import DofMap, SlabSolution, SlabSpace
from core.quadrature import QuadratureConfig, RuleBatch, SlabQuadrature, triangle_rule

logger = logging.getLogger(__name__)

VARIANTS = ("standard", "mass_conserving")


@dataclass
class TransportData:
    """
    Coefficients of the transport problem as callables on numpy arrays:
    w(x, y, t) -> (wx, wy), div_w(x, y, t), f(x, y, t), u0(x, y).
    """
    w: Callable
    div_w: Callable
    f: Callable
    u0: Callable

    def velocity(self, points: np.ndarray, t: float) -> np.ndarray:
        wx, wy = self.w(points[..., 0], points[..., 1], t)
        shape = points.shape[:-1]
        return np.stack([np.broadcast_to(wx, shape), np.broadcast_to(wy, shape)], axis=-1).astype(float)

    def divergence(self, points: np.ndarray, t: float) -> np.ndarray:
        return np.broadcast_to(self.div_w(points[..., 0], points[..., 1], t), points.shape[:-1]).astype(float)

    def source(self, points: np.ndarray, t: float) -> np.ndarray:
        return np.broadcast_to(self.f(points[..., 0], points[..., 1], t), points.shape[:-1]).astype(float)

    def initial(self, points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.u0(points[..., 0], points[..., 1]), points.shape[:-1]).astype(float)


@dataclass
class SlabSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    slab: int
    gamma_j: float
    variant: str = "standard"
    level: Optional[int] = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]


def _spatial_sparse(space: SlabSpace, elements: np.ndarray, local: np.ndarray) -> sp.csr_matrix:
    """Scatter element matrices (E, nb, nb) into an active-dof sparse matrix."""
    idx = space.local_indices(elements)
    nb = idx.shape[1]
    rows = np.repeat(idx, nb, axis=1).ravel()
    cols = np.tile(idx, (1, nb)).ravel()
    n = space.n_active_dofs
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _spatial_vector(space: SlabSpace, elements: np.ndarray, local: np.ndarray) -> np.ndarray:
    idx = space.local_indices(elements)
    out = np.zeros(space.n_active_dofs)
    np.add.at(out, idx.ravel(), local.ravel())
    return out


def _mass_local(space: SlabSpace, b: RuleBatch) -> np.ndarray:
    psi = space.spatial.values(b.xi)
    return np.einsum("ep,epa,epb->eab", b.weights, psi, psi)


def spatial_mass(space: SlabSpace, batches) -> sp.csr_matrix:
    """sum over batches of (psi_b, psi_a), without the time weight."""
    n = space.n_active_dofs
    total = sp.csr_matrix((n, n))
    for b in batches:
        total = total + _spatial_sparse(space, b.elements, _mass_local(space, b))
    return total


def spatial_stiffness(space: SlabSpace, batches) -> sp.csr_matrix:
    """sum over batches of (grad psi_b, grad psi_a), without the time weight."""
    n = space.n_active_dofs
    total = sp.csr_matrix((n, n))
    for b in batches:
        grad = space.spatial_values(b.elements, b.xi, "grad")
        total = total + _spatial_sparse(space, b.elements, np.einsum("ep,epai,epbi->eab", b.weights, grad, grad))
    return total


def _convection_local(space: SlabSpace, data: TransportData, b: RuleBatch) -> np.ndarray:
    """C[a, b] = (w . grad psi_b + div w psi_b, psi_a) per element."""
    x = b.points(space.mesh)
    w = data.velocity(x, b.point_times())
    div = data.divergence(x, b.point_times())
    psi = space.spatial.values(b.xi)
    grad = space.spatial_values(b.elements, b.xi, "grad")
    trial = np.einsum("epi,epbi->epb", w, grad) + div[..., None] * psi
    return np.einsum("ep,epa,epb->eab", b.weights, psi, trial)


def _advection_of_test_local(space: SlabSpace, data: TransportData, b: RuleBatch) -> np.ndarray:
    """A[a, b] = (psi_b, w . grad psi_a) per element."""
    x = b.points(space.mesh)
    w = data.velocity(x, b.point_times())
    psi = space.spatial.values(b.xi)
    grad = space.spatial_values(b.elements, b.xi, "grad")
    test = np.einsum("epi,epai->epa", w, grad)
    return np.einsum("ep,epa,epb->eab", b.weights, test, psi)


def _convection(space: SlabSpace, data: TransportData, b: RuleBatch) -> sp.csr_matrix:
    return _spatial_sparse(space, b.elements, _convection_local(space, data, b))


def _advection_of_test(space: SlabSpace, data: TransportData, b: RuleBatch) -> sp.csr_matrix:
    return _spatial_sparse(space, b.elements, _advection_of_test_local(space, data, b))


def _temporal_factors(space: SlabSpace, b: RuleBatch) -> Tuple[np.ndarray, np.ndarray]:
    """Temporal basis values and time derivatives (E, nt) at each element's own time."""
    s = b.element_times()
    return space.temporal.values(s), space.temporal.derivatives(s) / space.dt


def _split_term(space: SlabSpace, b: RuleBatch, spatial_local: np.ndarray, test_time: np.ndarray,
                trial_time: np.ndarray) -> sp.csr_matrix:
    """Space-time element matrices tau_e S[a, b] T_test[m] T_trial[l] scattered into slab unknowns."""
    local = np.einsum("e,eab,em,el->eambl", b.element_time_weights(), spatial_local, test_time, trial_time)
    idx = space.unknowns(b.elements)
    m = idx.shape[1]
    rows = np.repeat(idx, m, axis=1).ravel()
    cols = np.tile(idx, (1, m)).ravel()
    n = space.n_unknowns
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_Bh(space: SlabSpace, quadrature: SlabQuadrature, data: TransportData) -> sp.csr_matrix:
    """
    Upwind DG-in-time transport form on slab n:
    (d_t u + w . grad u + div w u, v)_Q + (u_+, v_+) at t_{n-1}.
    """
    quadrature.config.validate(space.k_s, space.k_t)
    temporal = space.temporal
    dt = space.dt
    n = space.n_unknowns
    matrix = sp.csr_matrix((n, n))
    for s, tau, batches in zip(quadrature.time_points, quadrature.time_weights, quadrature.form_volume):
        if not batches:
            continue
        ell = temporal.values(s)
        dell = temporal.derivatives(s) / dt
        mass = spatial_mass(space, batches)
        conv = sum((_convection(space, data, b) for b in batches[1:]), _convection(space, data, batches[0]))
        matrix = matrix + tau * (sp.kron(mass, np.outer(ell, dell)) + sp.kron(conv, np.outer(ell, ell)))
    for b in quadrature.split:
        ell, dell = _temporal_factors(space, b)
        matrix = (matrix + _split_term(space, b, _mass_local(space, b), ell, dell)
                  + _split_term(space, b, _convection_local(space, data, b), ell, ell))
    start = temporal.values(0.0)
    matrix = matrix + sp.kron(spatial_mass(space, quadrature.start), np.outer(start, start))
    return matrix.tocsr()


def assemble_Bmc(space: SlabSpace, quadrature: SlabQuadrature, data: TransportData) -> sp.csr_matrix:
    """
    Mass-conserving form on slab n: (u, -d_t v - w . grad v)_Q + (u_-, v_-) at t_n.
    The coupling to the previous slab enters through the same right-hand side
    as the standard form. Its consistency rests on the time rule integrating
    d/dt int_{Omega^h(t)} exactly, so the slab quadrature should split the
    time interval at vertex crossings (QuadratureConfig.split_crossings).
    """
    quadrature.config.validate(space.k_s, space.k_t)
    temporal = space.temporal
    dt = space.dt
    n = space.n_unknowns
    matrix = sp.csr_matrix((n, n))
    for s, tau, batches in zip(quadrature.time_points, quadrature.time_weights, quadrature.form_volume):
        if not batches:
            continue
        ell = temporal.values(s)
        dell = temporal.derivatives(s) / dt
        mass = spatial_mass(space, batches)
        adv = sum((_advection_of_test(space, data, b) for b in batches[1:]),
                  _advection_of_test(space, data, batches[0]))
        matrix = matrix - tau * (sp.kron(mass, np.outer(dell, ell)) + sp.kron(adv, np.outer(ell, ell)))
    for b in quadrature.split:
        ell, dell = _temporal_factors(space, b)
        matrix = (matrix - _split_term(space, b, _mass_local(space, b), dell, ell)
                  - _split_term(space, b, _advection_of_test_local(space, data, b), ell, ell))
    end = temporal.values(1.0)
    matrix = matrix + sp.kron(spatial_mass(space, quadrature.end), np.outer(end, end))
    return matrix.tocsr()


class PatchJumps:
    """
    Per interior facet, the matrix of the squared direct jump
    integral over the facet patch: int_{T1 u T2} (u_1 - u_2)^2 with each
    element polynomial extended to the neighbour through its affine map.
    Depends only on the mesh and k_s.
    """

    def __init__(self, dofmap: DofMap):
        mesh = dofmap.mesh
        basis = triangle_basis(dofmap.k_s)
        xi_ref, w_ref = triangle_rule(2 * dofmap.k_s)
        nb = basis.n_basis
        t1 = mesh.interior_patches[:, 0]
        t2 = mesh.interior_patches[:, 1]
        psi_ref = basis.values(xi_ref)
        F = len(t1)
        P = len(w_ref)
        matrices = np.zeros((F, 2 * nb, 2 * nb))
        for own, other in ((t1, t2), (t2, t1)):
            x = mesh.physical_points(own, np.broadcast_to(xi_ref, (F, P, 2)))
            xi_other = mesh.reference_points(other, x)
            psi_own = np.broadcast_to(psi_ref, (F, P, nb))
            psi_other = basis.values(xi_other)
            if own is t1:
                jump = np.concatenate([psi_own, -psi_other], axis=2)
            else:
                jump = np.concatenate([psi_other, -psi_own], axis=2)
            weights = mesh.det[own][:, None] * w_ref[None, :]
            matrices += np.einsum("fp,fpa,fpb->fab", weights, jump, jump)
        self.matrices = matrices
        self.dofs = np.concatenate([dofmap.element_dofs[t1], dofmap.element_dofs[t2]], axis=1)
        self.patches = mesh.interior_patches

    @classmethod
    def for_dofmap(cls, dofmap: DofMap) -> "PatchJumps":
        cached = dofmap.cache.get("patch_jumps")
        if cached is None:
            cached = cls(dofmap)
            dofmap.cache["patch_jumps"] = cached
        return cached


def ghost_penalty_spatial(space: SlabSpace) -> sp.csr_matrix:
    """Unscaled spatial jump matrix summed over the ghost facets of the slab."""
    patches = PatchJumps.for_dofmap(space.dofmap)
    facets = space.geometry.ghost_facets
    n = space.n_active_dofs
    if len(facets) == 0:
        return sp.csr_matrix((n, n))
    idx = space.act_index[patches.dofs[facets]]
    if np.any(idx < 0):
        raise SpaceError(f"ghost facet touches an inactive dof in slab {space.n}")
    m = idx.shape[1]
    rows = np.repeat(idx, m, axis=1).ravel()
    cols = np.tile(idx, (1, m)).ravel()
    return sp.coo_matrix((patches.matrices[facets].ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_J(space: SlabSpace, gamma_j: float, j_scaling: int = -1) -> sp.csr_matrix:
    """Direct space-time ghost penalty gamma_J h^j sum_F int_{I_n} int_{omega_F} [u][v]."""
    if gamma_j < 0:
        raise ValueError(f"gamma_j must be non-negative, got {gamma_j}")
    if gamma_j == 0.0:
        return sp.csr_matrix((space.n_unknowns, space.n_unknowns))
    scale = gamma_j * space.mesh.h_max ** j_scaling
    return (scale * sp.kron(ghost_penalty_spatial(space), space.dt * space.temporal.mass)).tocsr()


def _batch_load(space: SlabSpace, batches, values_per_batch) -> np.ndarray:
    load = np.zeros(space.n_active_dofs)
    for b, values in zip(batches, values_per_batch):
        psi = space.spatial.values(b.xi)
        load += _spatial_vector(space, b.elements, np.einsum("ep,ep,epa->ea", b.weights, values, psi))
    return load


def assemble_rhs(space: SlabSpace, quadrature: SlabQuadrature, data: TransportData,
                 previous: Optional[SlabSolution] = None) -> np.ndarray:
    """
    (f, v)_Q + (g, v_+) at t_{n-1}, with g = u0 on the first slab and the
    previous slab's left limit afterwards.
    """
    temporal = space.temporal
    mesh = space.mesh
    rhs = np.zeros(space.n_unknowns)
    for s, tau, batches in zip(quadrature.time_points, quadrature.time_weights, quadrature.form_volume):
        if not batches:
            continue
        load = _batch_load(space, batches, [data.source(b.points(mesh), b.t) for b in batches])
        rhs += tau * np.kron(load, temporal.values(s))
    for b in quadrature.split:
        ell, _ = _temporal_factors(space, b)
        psi = space.spatial.values(b.xi)
        local = np.einsum("ep,ep,epa->ea", b.weights, data.source(b.points(mesh), b.point_times()), psi)
        local = np.einsum("e,ea,em->eam", b.element_time_weights(), local, ell)
        np.add.at(rhs, space.unknowns(b.elements).ravel(), local.ravel())

    if previous is None:
        if space.n != 1:
            logger.warning(f"Slab {space.n} assembled from the initial datum without a previous trace")
        traces = [data.initial(b.points(mesh)) for b in quadrature.start]
    else:
        try:
            traces = [previous.evaluate(b.elements, b.xi, 1.0) for b in quadrature.start]
        except SpaceError as exc:
            raise GeometryError(f"extension gap at t={space.t_start}: {exc}") from exc
    rhs += np.kron(_batch_load(space, quadrature.start, traces), temporal.values(0.0))
    return rhs


def assemble_slab_system(space: SlabSpace, quadrature: SlabQuadrature, data: TransportData, gamma_j: float,
                         j_scaling: int = -1, variant: str = "standard",
                         previous: Optional[SlabSolution] = None, level: Optional[int] = None) -> SlabSystem:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant '{variant}', expected one of {VARIANTS}")
    bilinear = assemble_Bh if variant == "standard" else assemble_Bmc
    matrix = bilinear(space, quadrature, data) + assemble_J(space, gamma_j, j_scaling)
    rhs = assemble_rhs(space, quadrature, data, previous)
    return SlabSystem(
        matrix=matrix.tocsr(),
        rhs=rhs,
        slab=space.n,
        gamma_j=gamma_j,
        variant=variant,
        level=level,
        metadata={"n_unknowns": space.n_unknowns, "n_ghost_facets": int(len(space.geometry.ghost_facets))},
    )
