import numpy as np
import pytest

from analysis.operators import (discrete_material_derivative, gather_elementwise, oswald_project, p1_velocity,
                                time_project)
from core.fespace import SlabSolution
from core.levelset import TimePartition
from core.mesh import build_structured_mesh
from tests.conftest import UNIT_SQUARE, inside_everywhere, make_slab


@pytest.fixture
def quadratic_slab():
    mesh = build_structured_mesh(UNIT_SQUARE, 0.5)
    space, _ = make_slab(mesh, inside_everywhere, k_s=2, k_t=2, partition=TimePartition(0.0, 1.0, 2), n=2)
    return space


def zero_velocity(x, y, t):
    return 0.0 * x, 0.0 * y


def test_time_projection_keeps_polynomials(quadratic_slab, rng):
    space = quadratic_slab
    a, b, c = rng.uniform(-1, 1, (3, space.n_active_dofs))
    projected = time_project(space, lambda t: a + b * t + c * t * t)
    times = space.node_times()
    expected = a[:, None] + b[:, None] * times + c[:, None] * times ** 2
    np.testing.assert_allclose(projected, expected, atol=1e-12)


def test_time_projection_is_idempotent(quadratic_slab, rng):
    space = quadratic_slab
    a = rng.uniform(-1, 1, space.n_active_dofs)
    once = time_project(space, lambda t: a * np.exp(-t))
    twice = time_project(space, lambda t: once @ space.temporal.values(space.reference_time(t)))
    np.testing.assert_allclose(twice, once, atol=1e-12)


def test_time_projection_commutes_with_gradients(quadratic_slab, rng):
    space = quadratic_slab
    coefficients = rng.uniform(-1, 1, space.n_active_dofs)
    elements = space.geometry.active_elements
    xi = np.broadcast_to([[0.2, 0.3]], (len(elements), 1, 2))
    grads = space.spatial_values(elements, xi, "grad")
    local = space.local_indices(elements)
    projected = time_project(space, lambda t: coefficients * np.sin(t))
    s = 0.4
    of_projection = np.einsum("epbi,eb->epi", grads, (projected @ space.temporal.values(s))[local])

    def gradient_in_time(t):
        return np.einsum("epbi,eb->epi", grads, (coefficients * np.sin(t))[local])

    projection_of_gradient = np.einsum("m,...m->...", space.temporal.values(s),
                                       np.moveaxis(time_project(space, gradient_in_time), 1, -1))
    np.testing.assert_allclose(of_projection, projection_of_gradient, atol=1e-12)


def test_oswald_keeps_continuous_fields(quadratic_slab, rng):
    space = quadratic_slab
    nodal = rng.uniform(-1, 1, space.n_active_dofs)
    np.testing.assert_allclose(oswald_project(space, gather_elementwise(space, nodal)), nodal, atol=1e-14)


def test_oswald_averages_shared_nodes(two_triangles):
    space, _ = make_slab(two_triangles, inside_everywhere, k_s=1, k_t=1)
    values = np.stack([np.zeros(3), np.full(3, 2.0)])
    averaged = oswald_project(space, values)
    shared = set(two_triangles.elements[0]) & set(two_triangles.elements[1])
    for vertex in range(4):
        expected = 1.0 if vertex in shared else (0.0 if vertex in two_triangles.elements[0] else 2.0)
        assert averaged[space.act_index[vertex]] == pytest.approx(expected)


def test_oswald_is_idempotent(quadratic_slab, rng):
    space = quadratic_slab
    values = rng.uniform(-1, 1, (len(space.geometry.active_elements), space.spatial.n_basis))
    once = oswald_project(space, values)
    np.testing.assert_allclose(oswald_project(space, gather_elementwise(space, once)), once, atol=1e-14)


def test_material_derivative_without_velocity(quadratic_slab, rng):
    space = quadratic_slab
    solution = SlabSolution(space, rng.uniform(-1, 1, space.n_unknowns))
    derivative = discrete_material_derivative(solution, zero_velocity)
    nodes = space.temporal.nodes
    np.testing.assert_allclose(derivative.nodal(), solution.nodal() @ (space.temporal.derivatives(nodes) / space.dt).T,
                               atol=1e-12)


def test_material_derivative_of_a_spatially_constant_field(quadratic_slab):
    space = quadratic_slab
    solution = SlabSolution(space, space.interpolate(lambda x, y, t: np.full(np.shape(x), t * t)))
    derivative = discrete_material_derivative(solution, lambda x, y, t: (1.0 + x, y - 2.0))
    np.testing.assert_allclose(derivative.nodal(), 2.0 * np.broadcast_to(space.node_times(), (space.n_active_dofs, 3)),
                               atol=1e-10)


def test_material_derivative_of_a_transported_linear_field(quadratic_slab):
    space = quadratic_slab
    # u = x - t is transported by w = (1, 0), and the product w1 . grad u is exact
    solution = SlabSolution(space, space.interpolate(lambda x, y, t: x - t))
    derivative = discrete_material_derivative(solution, lambda x, y, t: (np.ones(np.shape(x)), 0.0 * y))
    np.testing.assert_allclose(derivative.coefficients, 0.0, atol=1e-12)


def test_p1_velocity_is_sampled_at_the_slab_start(quadratic_slab):
    space = quadratic_slab
    velocity = p1_velocity(space, lambda x, y, t: (x + t, np.full(np.shape(x), t)))
    np.testing.assert_allclose(velocity[:, 0], space.mesh.vertices[:, 0] + 0.5)
    np.testing.assert_allclose(velocity[:, 1], 0.5)
