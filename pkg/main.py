import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from analysis.probes import PROBES, inequality_probe
from core.exceptions import ConfigError, CutFEMError
from core.levelset import TimePartition
from core.mesh import build_structured_mesh, write_off
from studies.convergence import ConvergenceStudy, run_convergence
from utils.config import RunConfig, load_config
from utils.logging_setup import setup_logging
from utils.report import to_json_text, versions, write_csv, write_json

EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageErrorParser(argparse.ArgumentParser):
    """argparse parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise ConfigError(message)


def parse_levels(text: str) -> List[int]:
    """'0..2', '0,1,2' or '3'."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            levels = list(range(int(lo), int(hi) + 1))
        else:
            levels = [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse levels '{text}'") from exc
    if not levels or min(levels) < 0:
        raise ConfigError(f"empty or negative level range '{text}'")
    return levels


def parse_times(text: str) -> List[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse times '{text}'") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = UsageErrorParser(prog="main.py", description="Unfitted space-time transport solver")
    common = UsageErrorParser(add_help=False)
    common.add_argument("--config", default=None, help="INI or flat key=value configuration file")
    common.add_argument("--outdir", default=None, help="output directory (overrides output_dir)")
    common.add_argument("--log-level", default=None, help="logging level (overrides log_level)")
    sub = parser.add_subparsers(dest="command", parser_class=UsageErrorParser)
    sub.required = True

    run = sub.add_parser("run", parents=[common], help="convergence study")
    run.add_argument("--level", type=int, default=None, help="run a single refinement level")
    run.add_argument("--levels", default=None, help="level range, e.g. 0..3")
    run.add_argument("--with-probes", action="store_true", help="also run the configured probes")

    probe = sub.add_parser("probe", parents=[common], help="inequality probes")
    probe.add_argument("--name", default=None, help=f"probe name or 'all' ({', '.join(PROBES)})")
    probe.add_argument("--levels", default=None, help="level range, e.g. 0..2")
    probe.add_argument("--samples", type=int, default=None)
    probe.add_argument("--gamma", type=float, default=None, help="ghost penalty weight (0 removes it)")
    probe.add_argument("--geometry", choices=("case", "sliver"), default="case")

    dump = sub.add_parser("dump-field", parents=[common], help="sample u_h on a uniform grid")
    dump.add_argument("--times", default=None, help="comma separated times, e.g. 0.25,1.0")
    dump.add_argument("--grid", type=int, default=None, help="grid points per direction")
    dump.add_argument("--level", type=int, default=None)

    info = sub.add_parser("mesh-info", parents=[common], help="background mesh summary")
    info.add_argument("--level", type=int, default=None)
    info.add_argument("--off", default=None, help="also write the mesh in OFF format")
    return parser


class TransportCLI:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        overrides: Dict = {"output_dir": args.outdir, "log_level": args.log_level}
        self.config: RunConfig = load_config(args.config, overrides)
        setup_logging(self.config.log_file, self.config.log_level)
        self.logger = logging.getLogger("TransportCLI")

    def _level(self) -> int:
        return self.args.level if self.args.level is not None else self.config.level_min

    def run(self) -> Dict:
        args = self.args
        if args.level is not None:
            self.config.level_min = self.config.level_max = args.level
        elif args.levels is not None:
            levels = parse_levels(args.levels)
            self.config.level_min, self.config.level_max = min(levels), max(levels)
        self.config.validate()
        self.logger.info(f"Convergence study: case={self.config.case}, levels={self.config.levels}")
        table = run_convergence(self.config)
        result = {"csv": os.path.join(self.config.output_dir, "convergence.csv"),
                  "report": os.path.join(self.config.output_dir, "report.json"),
                  "rows": len(table.rows)}
        if args.with_probes:
            result["probes"] = self._probes(self.config.probe_names, None, None, None, "case")
        return result

    def _probes(self, names: List[str], levels: Optional[List[int]], samples: Optional[int],
                gamma: Optional[float], geometry: str) -> Dict:
        config = self.config
        levels = levels or list(range(config.probe_level_min, config.probe_level_max + 1))
        reports = []
        for name in names:
            reports.append(inequality_probe(
                name, levels, samples=samples or config.samples,
                gamma_j=config.gamma_j if gamma is None else gamma, j_scaling=config.j_scaling,
                seed=config.seed, growth_factor=config.growth_factor, case_name=config.case,
                geometry=geometry, k_s=config.k_s, k_t=config.k_t, q_t=config.q_t,
                mesh_split=config.mesh_split,
            ))
        frame = pd.concat([r.to_frame() for r in reports], ignore_index=True)
        csv_path = write_csv(frame, os.path.join(config.output_dir, "probes.csv"))
        payload = {"config": config.to_dict(), "versions": versions(), "probes": [r.to_dict() for r in reports]}
        json_path = write_json(payload, os.path.join(config.output_dir, "probe_report.json"))
        return {"csv": csv_path, "report": json_path, "status": {r.name: r.status for r in reports}}

    def probe(self) -> Dict:
        args = self.args
        if args.name in (None, "all"):
            names = list(self.config.probe_names) if args.name is None else list(PROBES)
        elif args.name in PROBES:
            names = [args.name]
        else:
            raise ConfigError(f"unknown probe '{args.name}', expected one of {PROBES}")
        levels = parse_levels(args.levels) if args.levels else None
        if args.samples is not None and args.samples < 1:
            raise ConfigError("--samples must be >= 1")
        return self._probes(names, levels, args.samples, args.gamma, args.geometry)

    def dump_field(self) -> Dict:
        args = self.args
        times = parse_times(args.times) if args.times else list(self.config.dump_times)
        grid = args.grid or self.config.dump_grid
        if grid < 2:
            raise ConfigError("--grid must be >= 2")
        study = ConvergenceStudy(self.config)
        level = self._level()
        problem = study.problem(level)
        for t in times:
            if t < problem.partition.t0 or t > problem.partition.T:
                raise ConfigError(f"time {t} outside [{problem.partition.t0}, {problem.partition.T}]")

        from core.solver import march
        solution, _ = march(problem)
        x0, x1, y0, y1 = problem.mesh.box
        gx, gy = np.meshgrid(np.linspace(x0, x1, grid), np.linspace(y0, y1, grid))
        points = np.column_stack([gx.ravel(), gy.ravel()])
        written = []
        for t in times:
            values, inside = solution.evaluate_points(points, t, side="left")
            values = np.where(inside, values, 0.0)
            frame = pd.DataFrame({"x": points[:, 0], "y": points[:, 1],
                                  "inside_flag": inside.astype(int), "u_h": values})
            path = os.path.join(self.config.output_dir, f"field_t{t:g}.csv")
            written.append(write_csv(frame, path))
        return {"files": written, "level": level}

    def mesh_info(self) -> Dict:
        study = ConvergenceStudy(self.config)
        level = self._level()
        h, n_slabs = study.case.schedule(level)
        mesh = build_structured_mesh(study.case.box, h, self.config.mesh_split)
        partition = TimePartition(study.case.t0, study.case.T, n_slabs)
        info = {
            "case": self.config.case,
            "level": level,
            "target_h": h,
            "h_max": mesh.h_max,
            "split": mesh.split,
            "n_vertices": mesh.n_vertices,
            "n_elements": mesh.n_elements,
            "n_interior_facets": mesh.n_interior_facets,
            "n_boundary_facets": int(len(mesh.boundary_facet_ids)),
            "n_slabs": partition.N,
            "dt": partition.dt,
        }
        if self.args.off:
            write_off(mesh, self.args.off)
            info["off"] = self.args.off
        return info

    def dispatch(self) -> Dict:
        handlers = {"run": self.run, "probe": self.probe, "dump-field": self.dump_field, "mesh-info": self.mesh_info}
        return handlers[self.args.command]()


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        result = TransportCLI(args).dispatch()
    except ConfigError as e:
        return _fail("usage", str(e), EXIT_USAGE)
    except CutFEMError as e:
        logging.exception("Run failed")
        return _fail(e.__class__.__name__, str(e), EXIT_FAILURE)
    except KeyboardInterrupt:
        logging.info("Run stopped by user.")
        return _fail("interrupted", "stopped by user", EXIT_FAILURE)
    except Exception as e:
        logging.exception("Unhandled exception")
        return _fail("internal", str(e), EXIT_FAILURE)
    sys.stdout.write(to_json_text(result) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
