import numpy as np
import pytest

from cases import get_case
from core.exceptions import GeometryError
from core.levelset import (Region, SlabLevelSet, TimePartition, classify_slab, element_marks,
                           sample_geometry_error, sample_levelset)
from core.mesh import build_structured_mesh
from tests.conftest import UNIT_SQUARE, inside_everywhere, outside_everywhere


def test_time_partition():
    partition = TimePartition(0.0, 1.0, 4)
    assert partition.dt == pytest.approx(0.25)
    assert partition.nodes[-1] == 1.0
    assert np.all(np.diff(partition.nodes) > 0)
    assert partition.slab(2) == (0.25, 0.5)


def test_slab_of_picks_side_at_boundaries():
    partition = TimePartition(0.0, 1.0, 4)
    assert partition.slab_of(0.5, "left") == 2
    assert partition.slab_of(0.5, "right") == 3
    assert partition.slab_of(0.0, "left") == 1
    assert partition.slab_of(1.0, "right") == 4
    assert partition.slab_of(0.6) == 3


@pytest.mark.parametrize("t0, T, N", [(0.0, 1.0, 0), (1.0, 1.0, 2)])
def test_invalid_partition(t0, T, N):
    with pytest.raises(GeometryError):
        TimePartition(t0, T, N)


def test_constant_level_set(eight_triangles):
    ls = sample_levelset(inside_everywhere, eight_triangles, TimePartition(0.0, 1.0, 1), 1, 1)
    assert np.all(ls.nodal_values == -1.0)


def test_level_set_reproduces_linear_time():
    mesh = build_structured_mesh(UNIT_SQUARE, 0.5)
    ls = sample_levelset(lambda x, y, t: np.full(np.shape(x), t), mesh, TimePartition(0.0, 1.0, 1), 1, 1)
    assert np.all(ls.nodal_values[0] == 0.0)
    assert np.all(ls.nodal_values[1] == 1.0)


def test_zero_temporal_order_is_unsupported(eight_triangles):
    with pytest.raises(GeometryError, match="unsupported temporal order"):
        sample_levelset(inside_everywhere, eight_triangles, TimePartition(0.0, 1.0, 1), 1, 0)


def test_adjacent_slabs_share_endpoint_values():
    case = get_case("expanding_circle", verify=False)
    mesh = build_structured_mesh(case.box, 0.9)
    partition = TimePartition(0.0, 1.0, 2)
    first = sample_levelset(case.phi, mesh, partition, 1, 2)
    second = sample_levelset(case.phi, mesh, partition, 2, 2)
    assert np.array_equal(first.nodal_values[-1], second.nodal_values[0])
    assert np.array_equal(first.vertex_values(0.5), second.vertex_values(0.5))


def test_eval_phi_lin_nodal_interpolation(reference_triangle):
    values = np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    ls = SlabLevelSet(reference_triangle, TimePartition(0.0, 1.0, 1), 1, 1, values)
    assert ls.eval_phi_lin(0, [1.0, 0.0], 0.3) == pytest.approx(1.0)
    assert ls.eval_phi_lin(0, [0.0, 0.0], 0.3) == pytest.approx(0.0)


def test_eval_phi_lin_constant(reference_triangle):
    ls = SlabLevelSet(reference_triangle, TimePartition(0.0, 1.0, 1), 1, 1, -np.ones((2, 3)))
    assert ls.eval_phi_lin(0, [0.2, 0.3], 0.7) == pytest.approx(-1.0)


def test_eval_phi_lin_time_derivative(reference_triangle):
    values = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
    ls = SlabLevelSet(reference_triangle, TimePartition(0.0, 0.5, 1), 1, 1, values)
    value, rate = ls.eval_phi_lin(0, [0.25, 0.25], 0.25, want_time_derivative=True)
    assert value == pytest.approx(0.0, abs=1e-15)
    assert rate == pytest.approx(2.0 / 0.5)


def test_eval_phi_lin_outside_slab(reference_triangle):
    ls = SlabLevelSet(reference_triangle, TimePartition(0.0, 1.0, 2), 1, 1, -np.ones((2, 3)))
    with pytest.raises(GeometryError):
        ls.eval_phi_lin(0, [0.2, 0.2], 0.9)


def test_zero_counts_as_negative():
    marks = element_marks(np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 1.0], [1.0, 2.0, 3.0], [-1.0, -2.0, 0.0]]))
    assert list(marks) == [Region.NEG, Region.CUT, Region.POS, Region.NEG]


def test_snapping_of_round_off_values(reference_triangle):
    values = np.array([[1e-17, 1.0, -1.0], [1e-17, 1.0, -1.0]])
    ls = SlabLevelSet(reference_triangle, TimePartition(0.0, 1.0, 1), 1, 1, values)
    assert ls.vertex_values(0.5)[0] == 0.0
    assert ls.vertex_values(0.5, snap=False)[0] != 0.0


def test_classify_everything_inside(eight_triangles):
    mesh = eight_triangles
    ls = sample_levelset(inside_everywhere, mesh, TimePartition(0.0, 1.0, 1), 1, 1)
    geometry = classify_slab(ls, [0.0, 0.5, 1.0])
    assert np.all(geometry.slab_marks == Region.NEG)
    assert len(geometry.active_elements) == mesh.n_elements
    assert np.array_equal(geometry.ghost_facets, np.arange(mesh.n_interior_facets))


def test_classify_everything_outside(eight_triangles):
    ls = sample_levelset(outside_everywhere, eight_triangles, TimePartition(0.0, 1.0, 1), 1, 1)
    geometry = classify_slab(ls, [0.0, 1.0])
    assert np.all(geometry.slab_marks == Region.POS)
    assert len(geometry.active_elements) == 0
    assert len(geometry.ghost_facets) == 0


def test_classify_half_plane(eight_triangles):
    mesh = eight_triangles
    ls = sample_levelset(lambda x, y, t: x - 0.3, mesh, TimePartition(0.0, 1.0, 1), 1, 1)
    geometry = classify_slab(ls, [0.0, 1.0])
    centroids = mesh.vertices[mesh.elements].mean(axis=1)
    left = centroids[:, 0] < 0.5
    assert np.array_equal(geometry.active, left)
    assert np.all(geometry.slab_marks[left] == Region.CUT)
    assert np.all(geometry.slab_marks[~left] == Region.POS)
    # two cell diagonals plus the horizontal edge between the two left cells
    assert len(geometry.ghost_facets) == 3


def test_marks_changing_in_time_make_the_slab_cut(eight_triangles):
    mesh = eight_triangles
    ls = sample_levelset(lambda x, y, t: x - 0.25 - 0.5 * t, mesh, TimePartition(0.0, 1.0, 1), 1, 1)
    geometry = classify_slab(ls, [0.0, 1.0])
    assert np.all(geometry.slab_marks == Region.CUT)
    assert np.all(geometry.active)
    assert geometry.marks.shape == (2, mesh.n_elements)


def test_classification_needs_samples(eight_triangles):
    ls = sample_levelset(inside_everywhere, eight_triangles, TimePartition(0.0, 1.0, 1), 1, 1)
    with pytest.raises(GeometryError):
        classify_slab(ls, [])


def test_geometry_error_vanishes_for_linear_level_set():
    mesh = build_structured_mesh(UNIT_SQUARE, 0.25)
    error = sample_geometry_error(lambda x, y, t: x + 2 * y - t - 0.5, mesh, TimePartition(0.0, 1.0, 2), 1,
                                  band=None)
    assert error < 1e-12


@pytest.mark.slow
def test_geometry_error_drops_by_four_per_level():
    case = get_case("expanding_circle", verify=False)
    errors = []
    for level in range(4):
        h, n_slabs = case.schedule(level)
        mesh = build_structured_mesh(case.box, h)
        errors.append(sample_geometry_error(case.phi, mesh, TimePartition(case.t0, case.T, n_slabs), 1))
    ratios = [coarse / fine for coarse, fine in zip(errors[:-1], errors[1:])]
    assert all(3.0 <= r <= 5.0 for r in ratios), ratios


def test_snapping_uses_the_local_value_scale():
    mesh = build_structured_mesh((0.0, 4.0, 0.0, 1.0), 1.0, "diagonal")
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    values = np.select([x < 0.5, x < 2.5, x < 3.5], [np.where(y < 0.5, 1e-20, 1e-9), -1e-3, 1.0], 1e6)
    ls = SlabLevelSet(mesh, TimePartition(0.0, 1.0, 1), 1, 1, np.stack([values, values]))
    snapped = ls.vertex_values(0.0)
    left = x < 0.5
    # round-off next to 1e-3 values snaps, a genuine 1e-9 does not despite the 1e6 far away
    assert np.all(snapped[left & (y < 0.5)] == 0.0)
    assert np.all(snapped[left & (y > 0.5)] == 1e-9)
    assert np.all(ls.local_scale(values)[left] == 1e-3)
