"""
Analysis operators on a slab space: temporal L2 projection, Oswald
averaging and the discrete material derivative.
"""
from typing import Callable, Optional

import numpy as np

from core.basis import gauss_legendre_unit
from core.fespace import SlabSolution, SlabSpace


def time_project(space: SlabSpace, coefficient_fn: Callable[[float], np.ndarray],
                 n_points: Optional[int] = None) -> np.ndarray:
    """
    L2(I_n) projection onto P^k_t, dof by dof.

    Args:
        space (SlabSpace): target slab space
        coefficient_fn (Callable): t -> spatial coefficients (n_active_dofs, ...) at time t
        n_points (int): Gauss points on the slab, default k_t + 8

    Returns:
        np.ndarray: coefficients (n_active_dofs, k_t + 1, ...)
    """
    temporal = space.temporal
    s_q, w_q = gauss_legendre_unit(n_points or space.k_t + 8)
    samples = np.stack([np.asarray(coefficient_fn(space.t_start + s * space.dt), dtype=float) for s in s_q])
    moments = np.einsum("q,ql,q...->l...", w_q, temporal.values(s_q), samples)
    flat = np.linalg.solve(temporal.mass, moments.reshape(temporal.order + 1, -1))
    projected = flat.reshape(moments.shape)
    return np.moveaxis(projected, 0, 1)


def oswald_project(space: SlabSpace, element_values: np.ndarray) -> np.ndarray:
    """
    Average elementwise nodal values over the active elements sharing each node.

    Args:
        space (SlabSpace): slab space fixing the active elements and numbering
        element_values (np.ndarray): (n_active_elements, nb, ...) in the order of
            geometry.active_elements

    Returns:
        np.ndarray: continuous nodal values (n_active_dofs, ...)
    """
    elements = space.geometry.active_elements
    local = space.local_indices(elements)
    values = np.asarray(element_values, dtype=float)
    trailing = values.shape[2:]
    sums = np.zeros((space.n_active_dofs,) + trailing)
    counts = np.zeros(space.n_active_dofs)
    np.add.at(sums, local.ravel(), values.reshape((-1,) + trailing))
    np.add.at(counts, local.ravel(), 1.0)
    return sums / counts.reshape((-1,) + (1,) * len(trailing))


def gather_elementwise(space: SlabSpace, nodal: np.ndarray) -> np.ndarray:
    """Restrict continuous coefficients (n_active_dofs, ...) to active elements (E, nb, ...)."""
    return np.asarray(nodal)[space.local_indices(space.geometry.active_elements)]


def p1_velocity(space: SlabSpace, w: Callable) -> np.ndarray:
    """Vertex values (n_vertices, 2) of w at the slab start: the elementwise P1 field w_1."""
    v = space.mesh.vertices
    wx, wy = w(v[:, 0], v[:, 1], space.t_start)
    return np.stack([np.broadcast_to(wx, (len(v),)), np.broadcast_to(wy, (len(v),))], axis=1).astype(float)


def discrete_material_derivative(solution: SlabSolution, w: Callable) -> SlabSolution:
    """
    D_t^h u = d_t u + Oswald(w_1 . grad u).

    With w_1 piecewise P1 and grad u of degree k_s - 1, the product is of
    degree k_s on every element, so it is represented exactly by its values
    at the element Lagrange nodes before averaging.
    """
    space = solution.space
    temporal = space.temporal
    nodal = solution.nodal()
    dt_matrix = temporal.derivatives(temporal.nodes) / space.dt
    dt_coeffs = nodal @ dt_matrix.T

    elements = space.geometry.active_elements
    nb = space.spatial.n_basis
    xi_nodes = np.broadcast_to(space.spatial.nodes, (len(elements), nb, 2))
    grads = space.spatial_values(elements, xi_nodes, "grad")
    lam = np.column_stack([1.0 - space.spatial.nodes[:, 0] - space.spatial.nodes[:, 1], space.spatial.nodes])
    w1 = np.einsum("jk,ekd->ejd", lam, p1_velocity(space, w)[space.mesh.elements[elements]])
    coeffs = nodal[space.local_indices(elements)]
    grad_u = np.einsum("ejbi,ebm->ejmi", grads, coeffs)
    product = np.einsum("ejd,ejmd->ejm", w1, grad_u)
    total = dt_coeffs + oswald_project(space, product)
    return SlabSolution(space, total.ravel(), solution.quadrature)
