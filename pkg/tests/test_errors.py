import math

import numpy as np
import pytest

from analysis.errors import (compute_error_report, eoc, h1_spacetime_error, jump_terms, l2_final_error,
                             l2_spacetime_error, mass_balance, material_derivative_error)
from cases import get_case
from core.fespace import SlabSolution, SolutionField
from core.levelset import TimePartition
from core.mesh import build_structured_mesh
from core.solver import SlabProblem, march
from tests.conftest import UNIT_SQUARE, make_slab


def polynomial(x, y, t):
    return 1.0 + x - x * y + t * y + t * t


def polynomial_gradient(x, y, t):
    return 1.0 - y, -x + t


def polynomial_rate(x, y, t):
    return y + 2.0 * t


def interpolated_field(phi, n_slabs=2, k=2, box=UNIT_SQUARE, h=0.25, f=polynomial):
    mesh = build_structured_mesh(box, h)
    partition = TimePartition(0.0, 1.0, n_slabs)
    slabs = []
    for n in range(1, n_slabs + 1):
        space, quadrature = make_slab(mesh, phi, k_s=k, k_t=k, partition=partition, n=n)
        slabs.append(SlabSolution(space, space.interpolate(f), quadrature))
    return SolutionField(partition, slabs)


def test_exact_field_has_no_error():
    field = interpolated_field(lambda x, y, t: (x - 0.5) ** 2 + (y - 0.5) ** 2 - 0.16 - 0.02 * t)
    assert l2_final_error(field, polynomial) < 1e-12
    assert l2_spacetime_error(field, polynomial) < 1e-12
    assert h1_spacetime_error(field, polynomial_gradient, polynomial_rate) < 1e-11
    zero_velocity = lambda x, y, t: (0.0 * x, 0.0 * y)
    assert material_derivative_error(field, zero_velocity, polynomial_gradient, polynomial_rate) < 1e-11


def test_zero_field_on_unit_disk():
    field = interpolated_field(lambda x, y, t: x * x + y * y - 1.0, n_slabs=1, k=1, box=(-1.5, 1.5, -1.5, 1.5),
                               h=0.1, f=lambda x, y, t: 0.0 * x)
    error = l2_final_error(field, lambda x, y, t: np.ones(np.shape(x)))
    assert error == pytest.approx(math.sqrt(math.pi), rel=1e-2)


def test_jump_terms_of_a_continuous_field():
    field = interpolated_field(lambda x, y, t: x - 0.6 - 0.2 * t, n_slabs=3)
    jumps = jump_terms(field, polynomial)
    assert jumps["jumps_interior"] < 1e-24
    assert jumps["jump_initial"] < 1e-24
    assert jumps["jump_final"] < 1e-24


def test_eoc():
    rates = eoc([1.0, 0.125, 0.03125])
    assert math.isnan(rates[0])
    assert rates[1:] == pytest.approx([3.0, 2.0])
    assert math.isnan(eoc([1.0, 0.0])[1])


def test_mass_is_conserved_by_the_conservative_form():
    case = get_case("translating_disk")
    h, n_slabs = case.schedule(0)
    problem = SlabProblem(mesh=build_structured_mesh(case.box, h), partition=TimePartition(0.0, 1.0, n_slabs),
                          phi=case.phi, data=case.transport_data(), k_s=2, k_t=2, variant="mass_conserving")
    field, _ = march(problem)
    balance = mass_balance(field, case.transport_data())
    assert balance["relative_defect"] < 1e-8


def test_error_report():
    case = get_case("static_box")
    h, n_slabs = case.schedule(0)
    problem = SlabProblem(mesh=build_structured_mesh(case.box, h), partition=TimePartition(0.0, 1.0, n_slabs),
                          phi=case.phi, data=case.transport_data(), k_s=2, k_t=1)
    field, _ = march(problem)
    report = compute_error_report(field, case, 0.05)
    # u is linear in time; the error is spatial
    assert 0.0 < report.l2_final < 0.05
    assert report.components["l2_spacetime_sq"] == pytest.approx(report.l2_spacetime ** 2)
    assert set(report.components) >= {"h_matderiv_sq", "l2_spacetime_sq", "ghost_energy", "jumps_interior",
                                      "jump_initial", "jump_final"}
    assert report.mass_balance["relative_defect"] < 1e-8
    assert report.to_dict()["matderiv"] == report.matderiv
