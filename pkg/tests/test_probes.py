import math

import numpy as np
import pytest

from analysis.probes import PROBES, ProbeReport, ProbeRow, SlabOperators, _quadratic_probe, inequality_probe
from tests.conftest import UNIT_SQUARE, inside_everywhere, make_slab
from core.mesh import build_structured_mesh


def report_with(ratios, growth_factor=3.0):
    report = ProbeReport(name="gp_extension", geometry="case", gamma_j=0.05, growth_factor=growth_factor)
    for level, ratio in enumerate(ratios):
        report.rows.append(ProbeRow(level=level, h=0.5 ** level, dt=0.5 ** level, ratio=ratio, slabs=1, samples=4))
    return report


@pytest.fixture
def uncut_operators():
    mesh = build_structured_mesh(UNIT_SQUARE, 0.5)
    space, quadrature = make_slab(mesh, inside_everywhere, k_s=2, k_t=1)
    return SlabOperators(space, quadrature, gamma_j=0.05, j_scaling=-1)


def test_extension_is_free_without_a_cut(uncut_operators, rng):
    draws = rng.uniform(-1.0, 1.0, (10, uncut_operators.space.n_unknowns))
    assert _quadratic_probe("gp_extension", uncut_operators, draws) <= 1.0 + 1e-10


def test_ratios_do_not_depend_on_the_sample_scale(uncut_operators, rng):
    draws = rng.uniform(-1.0, 1.0, (6, uncut_operators.space.n_unknowns))
    for name in ("temporal_inverse", "spatial_inverse", "time_trace"):
        assert _quadratic_probe(name, uncut_operators, 7.0 * draws) == pytest.approx(
            _quadratic_probe(name, uncut_operators, draws), rel=1e-10)


def test_interface_trace_vanishes_without_interface(uncut_operators, rng):
    draws = rng.uniform(-1.0, 1.0, (3, uncut_operators.space.n_unknowns))
    assert _quadratic_probe("special_trace", uncut_operators, draws) == 0.0


def test_growth_and_status():
    assert report_with([1.0, 2.0]).growth == pytest.approx(2.0)
    assert report_with([1.0, 2.0]).status == "PASS"
    assert report_with([1.0, 4.0]).status == "FAIL"
    assert report_with([1.0, 4.0], growth_factor=5.0).status == "PASS"
    assert math.isnan(report_with([1.0]).growth)
    assert report_with([1.0]).status == "PASS"
    assert report_with([0.0, 0.0]).growth == 0.0
    assert report_with([0.0, 1.0]).status == "FAIL"


def test_report_frame():
    frame = report_with([1.0, 2.0]).to_frame()
    assert list(frame.columns) == ["probe", "level", "h", "dt", "ratio", "slabs", "samples"]
    assert (frame["probe"] == "gp_extension").all()


@pytest.mark.parametrize("name", PROBES)
def test_every_probe_runs_on_the_uncut_box(name):
    report = inequality_probe(name, [0], samples=3, case_name="static_box", k_s=1, k_t=1)
    assert len(report.rows) == 1
    ratio = report.rows[0].ratio
    assert np.isfinite(ratio)
    assert ratio >= 0.0
    assert report.rows[0].slabs == 2
    assert report.to_dict()["status"] == "PASS"


def test_probes_are_seeded():
    first = inequality_probe("temporal_inverse", [0], samples=4, seed=7, case_name="static_box", k_s=1, k_t=1)
    second = inequality_probe("temporal_inverse", [0], samples=4, seed=7, case_name="static_box", k_s=1, k_t=1)
    assert first.ratios == second.ratios


def test_invalid_probe_arguments():
    with pytest.raises(ValueError, match="unknown probe"):
        inequality_probe("nope", [0])
    with pytest.raises(ValueError, match="geometry"):
        inequality_probe("gp_extension", [0], geometry="ring")
    with pytest.raises(ValueError, match="sample"):
        inequality_probe("gp_extension", [0], samples=0)


@pytest.mark.slow
def test_ghost_penalty_is_needed_on_slivers():
    # the cut fraction shrinks tenfold per level, so unstabilised ratios blow up with it
    without = inequality_probe("gp_extension", [0, 1, 2], samples=20, gamma_j=0.0, geometry="sliver", k_s=2, k_t=1)
    assert without.status == "FAIL"
    assert without.growth > 10.0
    stabilised = inequality_probe("gp_extension", [0, 1], samples=20, gamma_j=0.05, geometry="sliver", k_s=2, k_t=1)
    assert stabilised.status == "PASS"


@pytest.mark.slow
@pytest.mark.parametrize("name", ["gp_extension", "temporal_inverse", "spatial_inverse", "time_trace"])
def test_inequality_ratios_stay_bounded_on_the_moving_disk(name):
    report = inequality_probe(name, [0, 1, 2], samples=50, gamma_j=0.05, case_name="expanding_circle")
    assert [row.samples for row in report.rows] == [50, 50, 50]
    assert report.growth <= 3.0
    assert report.status == "PASS"
