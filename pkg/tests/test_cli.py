import json
import logging

import pandas as pd
import pytest

from main import main, parse_levels
from core.exceptions import ConfigError


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    for handler in root.handlers[:]:
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[run]\ncase = static_box\nk = 1\nlevel_min = 0\nlevel_max = 0\ntiming = false\n"
        f"[output]\noutput_dir = {tmp_path / 'out'}\ndump_grid = 5\n"
        f"[logging]\nlog_file = {tmp_path / 'logs' / 'run.log'}\nlog_level = WARNING\n"
    )
    return str(path)


def usage_error(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.strip()]
    return json.loads(lines[-1])


def test_parse_levels():
    assert parse_levels("0..2") == [0, 1, 2]
    assert parse_levels("1,3") == [1, 3]
    assert parse_levels("4") == [4]
    with pytest.raises(ConfigError):
        parse_levels("a..b")
    with pytest.raises(ConfigError):
        parse_levels("-1")


def test_mesh_info(config_file, tmp_path, capsys):
    off = tmp_path / "mesh.off"
    assert main(["mesh-info", "--config", config_file, "--off", str(off)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["case"] == "static_box"
    assert info["n_elements"] == 64
    assert info["n_vertices"] == 41
    assert info["n_slabs"] == 2
    assert off.read_text().startswith("OFF\n41 64 0\n")


def test_unknown_flag_is_a_usage_error(config_file, capsys):
    assert main(["mesh-info", "--config", config_file, "--bogus"]) == 2
    assert usage_error(capsys)["error"] == "usage"


def test_missing_command(capsys):
    assert main([]) == 2
    assert usage_error(capsys)["error"] == "usage"


def test_missing_config_file(tmp_path, capsys):
    assert main(["mesh-info", "--config", str(tmp_path / "nope.ini")]) == 2
    assert "cannot read" in usage_error(capsys)["message"]


def test_unknown_probe(config_file, capsys):
    assert main(["probe", "--config", config_file, "--name", "nope"]) == 2
    assert "unknown probe" in usage_error(capsys)["message"]


def test_probe(config_file, tmp_path, capsys):
    assert main(["probe", "--config", config_file, "--name", "time_trace", "--levels", "0", "--samples", "2"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["status"] == {"time_trace": "PASS"}
    frame = pd.read_csv(tmp_path / "out" / "probes.csv")
    assert frame["probe"].tolist() == ["time_trace"]


def test_dump_field(config_file, tmp_path, capsys):
    assert main(["dump-field", "--config", config_file, "--times", "1.0"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert len(result["files"]) == 1
    frame = pd.read_csv(tmp_path / "out" / "field_t1.csv")
    assert list(frame.columns) == ["x", "y", "inside_flag", "u_h"]
    assert len(frame) == 25
    assert set(frame["inside_flag"]) <= {0, 1}
    assert frame["inside_flag"].sum() > 0


def test_dump_time_outside_the_interval(config_file, capsys):
    assert main(["dump-field", "--config", config_file, "--times", "2.0"]) == 2
    assert "outside" in usage_error(capsys)["message"]


def test_run(config_file, tmp_path, capsys):
    outdir = tmp_path / "elsewhere"
    assert main(["run", "--config", config_file, "--outdir", str(outdir)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["rows"] == 1
    assert (outdir / "convergence.csv").exists()
    assert (outdir / "report.json").exists()
    assert (tmp_path / "logs" / "run.log").exists()
