import logging
import os

import pytest

from core.exceptions import ConfigError
from utils.config import RunConfig, load_config

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults():
    config = load_config()
    assert config == RunConfig()
    assert config.levels == [0, 1, 2, 3]
    assert config.spatial_order is None
    assert config.timing


def test_shipped_config():
    config = load_config(os.path.join(ROOT, "config.ini"))
    assert config.case == "expanding_circle"
    assert config.dump_times == [0.25, 1.0]
    assert config.spatial_order is None and config.n_time_points is None
    assert config.split_crossings is None and not config.splits_crossings()
    assert config.probe_names == ["gp_extension", "temporal_inverse", "spatial_inverse", "time_trace"]


def test_flat_file_sets_both_orders(tmp_path):
    config = load_config(write(tmp_path, "case = static_box\nk = 3\nlevel_max = 1\n"))
    assert config.case == "static_box"
    assert (config.k_s, config.k_t) == (3, 3)
    assert config.levels == [0, 1]


@pytest.mark.parametrize("text", [
    "k = 3\nk_t = 1\n",
    "k_t = 1\nk = 3\n",
    "[run]\nk_t = 1\ncase = static_box\nk = 3\n[quadrature]\nspatial_order = auto\n",
])
def test_explicit_orders_win_over_k(tmp_path, text):
    config = load_config(write(tmp_path, text))
    assert (config.k_s, config.k_t) == (3, 1)


def test_sections(tmp_path):
    text = (
        "[run]\nvariant = mass_conserving ; conservative form\ntiming = off\n"
        "[quadrature]\nspatial_order = 8\nn_time_points = auto\nsplit_crossings = off\n"
        "[probe]\nprobe_names = oswald, commutator\n"
        "[output]\ndump_times = 0.5\n"
    )
    config = load_config(write(tmp_path, text))
    assert config.variant == "mass_conserving"
    assert config.timing is False
    assert config.spatial_order == 8
    assert config.n_time_points is None
    assert config.split_crossings is False and not config.splits_crossings()
    assert config.probe_names == ["oswald", "commutator"]
    assert config.dump_times == [0.5]


def test_unknown_keys_are_ignored_with_a_warning(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        config = load_config(write(tmp_path, "[run]\ncolour = blue\n"))
    assert config == RunConfig()
    assert "colour" in caplog.text


@pytest.mark.parametrize("text, field", [
    ("variant = upwind\n", "variant"),
    ("k_s = two\n", "k_s"),
    ("gamma_j = -1\n", "gamma_j"),
    ("level_min = 3\nlevel_max = 1\n", "level_min"),
    ("case = spiral\n", "case"),
    ("probe_names = gp_extension, nope\n", "probe_names"),
    ("timing = maybe\n", "timing"),
])
def test_invalid_values(tmp_path, text, field):
    with pytest.raises(ConfigError, match=field):
        load_config(write(tmp_path, text))


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.ini"))


def test_malformed_file(tmp_path):
    with pytest.raises(ConfigError, match="malformed"):
        load_config(write(tmp_path, "[run]\nk_s = 1\n[run]\nk_t = 1\n"))


def test_precedence(tmp_path, monkeypatch):
    path = write(tmp_path, "[output]\noutput_dir = from_file\n[logging]\nlog_level = DEBUG\n")
    assert load_config(path).output_dir == "from_file"
    monkeypatch.setenv("CUTST_OUTPUT_DIR", "from_env")
    monkeypatch.setenv("CUTST_WORKERS", "2")
    config = load_config(path)
    assert config.output_dir == "from_env"
    assert config.workers == 2
    assert config.log_level == "DEBUG"
    config = load_config(path, {"output_dir": "from_flag", "log_level": None})
    assert config.output_dir == "from_flag"
    assert config.log_level == "DEBUG"
