import json
import math

import pandas as pd
import pytest

from studies.convergence import CSV_COLUMNS, ConvergenceStudy, run_convergence
from utils.config import RunConfig
from utils.stats_tracker import SharedStatsTracker


def small_config(tmp_path, **kwargs):
    values = dict(case="translating_disk", k_s=1, k_t=1, level_min=0, level_max=0, timing=False,
                  output_dir=str(tmp_path / "results"))
    values.update(kwargs)
    return RunConfig(**values).validate()


def test_single_level(tmp_path):
    config = small_config(tmp_path)
    table = run_convergence(config)
    assert list(table.rows.columns) == CSV_COLUMNS
    assert len(table.rows) == 1
    row = table.rows.iloc[0]
    assert row["i"] == 0
    assert row["h"] == pytest.approx(0.5)
    assert row["dt"] == pytest.approx(0.5)
    assert row["wall_seconds"] == 0.0
    assert math.isnan(row["eoc_l2"])
    assert 0.0 < row["err_l2_final"] < 2.0

    with open(tmp_path / "results" / "convergence.csv") as f:
        assert f.readline().strip() == ",".join(CSV_COLUMNS)
    report = json.loads((tmp_path / "results" / "report.json").read_text())
    assert report["case"]["name"] == "translating_disk"
    assert report["levels"][0]["solver"]["wall_seconds"] == 0.0
    assert report["levels"][0]["geometry_error"] >= 0.0


def test_output_is_reproducible(tmp_path):
    config = small_config(tmp_path)
    run_convergence(config)
    first = [(tmp_path / "results" / name).read_bytes() for name in ("convergence.csv", "report.json")]
    run_convergence(config)
    second = [(tmp_path / "results" / name).read_bytes() for name in ("convergence.csv", "report.json")]
    assert first == second


def test_workers_do_not_change_the_table(tmp_path):
    serial = run_convergence(small_config(tmp_path, case="static_box", level_max=1), write=False)
    threaded = run_convergence(small_config(tmp_path, case="static_box", level_max=1, workers=2), write=False)
    pd.testing.assert_frame_equal(serial.rows, threaded.rows)
    assert serial.rows["i"].tolist() == [0, 1]
    assert serial.rows["ndof_max_slab"].iloc[1] > serial.rows["ndof_max_slab"].iloc[0]


def test_problem_follows_the_schedule(tmp_path):
    study = ConvergenceStudy(small_config(tmp_path, case="expanding_circle", k_s=2, k_t=2))
    problem = study.problem(1)
    assert problem.partition.N == 4
    assert problem.mesh.h_max <= 0.45 + 1e-12
    assert problem.quadrature.spatial_order == 6
    assert problem.level == 1


def test_mass_conserving_runs_split_the_time_rule(tmp_path):
    standard = ConvergenceStudy(small_config(tmp_path)).problem(0)
    conserving = ConvergenceStudy(small_config(tmp_path, variant="mass_conserving")).problem(0)
    forced = ConvergenceStudy(small_config(tmp_path, variant="mass_conserving", split_crossings=False)).problem(0)
    assert not standard.quadrature.split_crossings
    assert conserving.quadrature.split_crossings
    assert not forced.quadrature.split_crossings


def test_report_solver_stats_come_from_the_tracker(tmp_path):
    config = small_config(tmp_path, case="static_box", level_max=1)
    table = run_convergence(config)
    tracker = SharedStatsTracker.get_instance()
    report = json.loads((tmp_path / "results" / "report.json").read_text())
    for level, written in zip(table.levels, report["levels"]):
        recorded = tracker.get_raw(level=level["level"])
        assert [s["slab"] for s in written["solver"]["slabs"]] == [s["slab"] for s in recorded]
        assert written["solver"]["max_residual"] == max(s["residual"] for s in recorded)
        assert all(s["solve_seconds"] == 0.0 for s in written["solver"]["slabs"])


@pytest.mark.slow
@pytest.mark.parametrize("case", ["translating_disk", "expanding_circle"])
def test_mass_conserving_variant_conserves_mass(tmp_path, case):
    table = run_convergence(small_config(tmp_path, case=case, variant="mass_conserving", k_s=2, k_t=2,
                                         level_max=1), write=False)
    for level in table.levels:
        assert level["errors"]["mass_balance"]["relative_defect"] < 1e-8


@pytest.mark.slow
def test_expanding_circle_rates(tmp_path):
    config = small_config(tmp_path, case="expanding_circle", k_s=2, k_t=2, level_max=3)
    # any slab failing to factorise raises SlabSolveError here
    table = run_convergence(config)
    assert table.eoc("eoc_l2") == pytest.approx(3.0, abs=0.3)
    assert table.eoc("eoc_h1") == pytest.approx(2.0, abs=0.3)
    assert table.eoc("eoc_matderiv") == pytest.approx(2.0, abs=0.3)
    for level in table.levels:
        assert len(level["solver"]["slabs"]) == 2 * 2 ** level["level"]
        assert level["solver"]["max_residual"] <= config.solver_tol


@pytest.mark.slow
def test_mass_conserving_rates_on_the_expanding_circle(tmp_path):
    config = small_config(tmp_path, case="expanding_circle", k_s=2, k_t=2, level_max=3, variant="mass_conserving")
    table = run_convergence(config, write=False)
    assert table.eoc("eoc_h1") == pytest.approx(0.5, abs=0.25)
    assert table.eoc("eoc_l2") == pytest.approx(1.5, abs=0.3)
    for level in table.levels:
        assert level["errors"]["mass_balance"]["relative_defect"] < 1e-8
        assert level["solver"]["max_residual"] <= config.solver_tol
