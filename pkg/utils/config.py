"""
Run configuration: an INI file with [run], [quadrature], [probe], [output]
and [logging] sections, or a flat key=value file read as [run]. Environment
variables (optionally from a .env file) override the output directory, the
log level and the worker count.
"""
import configparser
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

from dotenv import load_dotenv

from core.exceptions import ConfigError

SECTION_KEYS: Dict[str, Tuple[str, ...]] = {
    "run": ("case", "k", "k_s", "k_t", "q_t", "level_min", "level_max", "gamma_j", "j_scaling", "variant",
            "mesh_split", "seed", "workers", "solver_tol", "timing", "condition"),
    "quadrature": ("spatial_order", "n_time_points", "split_crossings"),
    "probe": ("probe_names", "samples", "growth_factor", "probe_level_min", "probe_level_max"),
    "output": ("output_dir", "dump_times", "dump_grid"),
    "logging": ("log_level", "log_file"),
}

ENV_OVERRIDES = {
    "output_dir": "CUTST_OUTPUT_DIR",
    "log_level": "CUTST_LOG_LEVEL",
    "workers": "CUTST_WORKERS",
}

PROBE_NAMES = ("gp_extension", "temporal_inverse", "spatial_inverse", "time_trace", "special_trace",
               "commutator", "oswald", "material_derivative")


@dataclass
class RunConfig:
    case: str = "expanding_circle"
    k_s: int = 2
    k_t: int = 2
    q_t: int = 1
    level_min: int = 0
    level_max: int = 3
    gamma_j: float = 0.05
    j_scaling: int = -1
    variant: str = "standard"
    mesh_split: str = "criss_cross"
    seed: int = 0
    workers: int = 1
    solver_tol: float = 1e-10
    timing: bool = True
    condition: bool = False
    spatial_order: Optional[int] = None
    n_time_points: Optional[int] = None
    split_crossings: Optional[bool] = None
    probe_names: List[str] = field(default_factory=lambda: ["gp_extension", "temporal_inverse",
                                                            "spatial_inverse", "time_trace"])
    samples: int = 50
    growth_factor: float = 3.0
    probe_level_min: int = 0
    probe_level_max: int = 2
    output_dir: str = "results"
    dump_times: List[float] = field(default_factory=lambda: [1.0])
    dump_grid: int = 200
    log_level: str = "INFO"
    log_file: str = "logs/cutst.log"

    @property
    def levels(self) -> List[int]:
        return list(range(self.level_min, self.level_max + 1))

    def validate(self) -> "RunConfig":
        from cases import CASES
        from core.mesh import SPLITS

        if self.case not in CASES:
            raise ConfigError(f"case: unknown case '{self.case}', expected one of {sorted(CASES)}")
        for key in ("k_s", "k_t", "q_t"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1, got {getattr(self, key)}")
        if self.level_min < 0 or self.level_max < self.level_min:
            raise ConfigError(f"level_min/level_max: invalid range {self.level_min}..{self.level_max}")
        if self.gamma_j < 0:
            raise ConfigError(f"gamma_j: must be >= 0, got {self.gamma_j}")
        if self.variant not in ("standard", "mass_conserving"):
            raise ConfigError(f"variant: unknown variant '{self.variant}'")
        if self.mesh_split not in SPLITS:
            raise ConfigError(f"mesh_split: unknown split '{self.mesh_split}', expected one of {SPLITS}")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
        if not 0 < self.solver_tol < 1:
            raise ConfigError(f"solver_tol: must lie in (0, 1), got {self.solver_tol}")
        if self.samples < 1:
            raise ConfigError(f"samples: must be >= 1, got {self.samples}")
        unknown = [p for p in self.probe_names if p not in PROBE_NAMES]
        if unknown:
            raise ConfigError(f"probe_names: unknown probes {unknown}, expected names from {PROBE_NAMES}")
        if self.probe_level_max < self.probe_level_min:
            raise ConfigError("probe_level_min/probe_level_max: empty range")
        return self

    def splits_crossings(self) -> bool:
        """Split time rules at vertex crossings; defaults to on for the mass-conserving variant."""
        if self.split_crossings is None:
            return self.variant == "mass_conserving"
        return self.split_crossings

    def to_dict(self) -> Dict:
        return asdict(self)


def _boolean(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _convert(name: str, raw: str):
    default = getattr(RunConfig(), name)
    text = raw.strip()
    try:
        if name in ("spatial_order", "n_time_points"):
            return None if text.lower() in ("", "none", "auto") else int(text)
        if name == "split_crossings":
            return None if text.lower() in ("", "none", "auto") else _boolean(text)
        if isinstance(default, bool):
            return _boolean(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if name == "probe_names":
            return [p.strip() for p in text.split(",") if p.strip()]
        if name == "dump_times":
            return [float(p) for p in text.split(",") if p.strip()]
        return text
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse '{raw}'") from exc


def read_parser(config_file: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(config_file, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file '{config_file}': {exc}") from exc
    if not any(line.strip().startswith("[") for line in text.splitlines()):
        text = "[run]\n" + text
    try:
        parser.read_string(text, source=config_file)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file '{config_file}': {exc}") from exc
    return parser


def load_config(config_file: Optional[str] = None, overrides: Optional[Dict] = None) -> RunConfig:
    """
    Build a validated RunConfig.

    Args:
        config_file (str): INI or flat key=value file; None uses defaults only
        overrides (Dict): values applied last (command line flags)

    Returns:
        RunConfig: validated configuration
    """
    logger = logging.getLogger(__name__)
    load_dotenv()
    values: Dict = {}
    shared_order: Optional[int] = None
    if config_file:
        parser = read_parser(config_file)
        known = {key: section for section, keys in SECTION_KEYS.items() for key in keys}
        for section in parser.sections():
            for key, raw in parser.items(section):
                if key not in known:
                    logger.warning(f"Ignoring unknown config key '{key}' in [{section}]")
                    continue
                if key == "k":
                    shared_order = _convert("k_s", raw)
                else:
                    values[key] = _convert(key, raw)
        # explicit k_s / k_t win over k wherever they appear
        if shared_order is not None:
            values.setdefault("k_s", shared_order)
            values.setdefault("k_t", shared_order)

    for key, env_name in ENV_OVERRIDES.items():
        env_value = os.getenv(env_name)
        if env_value:
            values[key] = _convert(key, env_value)

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    return RunConfig(**values).validate()
